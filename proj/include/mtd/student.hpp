// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Full student: backbone, per-task per-level routers and task heads.

#pragma once

#include "mtd/core_model.hpp"
#include "mtd/mor_router.hpp"
#include "mtd/task_heads.hpp"

#include <map>
#include <string>
#include <vector>

namespace mtd {

class Student {
public:
    /// Backbone parameters are drawn from `init_rng` first; routers and
    /// heads use two seeds drawn from it afterwards, so heads are
    /// initialized identically with or without routers.
    Student(const ModelConfig& config, Rng& init_rng);

    Student(const Student&) = delete;
    Student& operator=(const Student&) = delete;

    struct Output {
        Backbone::Output body;
        std::vector<MultiLevelFeatures> distill;                 // per teacher, aligned to it
        std::map<std::string, Var> predictions;                  // raw head outputs
        std::map<std::string, std::map<int, GateScores>> gates;  // task -> level -> gates
    };

    /// `with_heads` false skips routing and decoding (stage 1).
    Output forward(const Image& image, bool with_heads, bool noise_on = false, Rng* noise = nullptr) const;

    /// Experts at one selected level: the stem, then one per adapter path.
    std::vector<TokenMap> experts(const Backbone::Output& body, int level) const;

    bool routed() const { return !routers_.empty(); }

    const ModelConfig& config() const { return backbone_.config(); }
    const Backbone& backbone() const { return backbone_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

private:
    ParamStore store_;
    Backbone backbone_;
    std::map<std::string, std::vector<RouterParams>> routers_;  // per task, per level slot
    std::map<std::string, HeadParams> heads_;
};

}  // namespace mtd
