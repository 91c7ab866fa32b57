// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mtd/core_model.hpp"
#include "mtd/task_spec.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace mtd {

struct DistillConfig {
    double alpha = 0.9;  // cosine term
    double beta = 0.1;   // smooth-L1 term
    double gamma = 1.0;  // distillation weight in the joint objective
    double smooth_l1_delta = 1.0;

    void validate() const;
};

/// Token-wise mean of 1 - cos. Zero-norm tokens raise NumericError.
Var cosine_loss(const TokenMap& r, const TokenMap& t);
/// Mean over entries of the smooth-L1 penalty with transition `delta`.
Var smooth_l1_loss(const TokenMap& r, const TokenMap& t, double delta = 1.0);

struct DistillTerms {
    Var total;
    /// [teacher][level slot] weighted pair values.
    std::vector<std::vector<double>> per_teacher_per_level;
};

/// Sum over teachers and levels of alpha * cosine + beta * smooth-L1.
/// student[i] must already be aligned to teacher i.
DistillTerms distill_loss(const std::vector<MultiLevelFeatures>& student,
                          const std::vector<MultiLevelFeatures>& teachers, const DistillConfig& cfg);

/// gamma * distill + sum_t w_t * L_t. Tasks without a spec are ConfigError.
double joint_loss(double distill, const std::map<std::string, double>& task_losses,
                  const std::vector<TaskSpec>& specs, double gamma);
Var joint_loss(const Var& distill, const std::map<std::string, Var>& task_losses,
               const std::vector<TaskSpec>& specs, double gamma);

struct LossBreakdown {
    long step = 0;
    double distill_total = 0.0;
    std::vector<std::vector<double>> per_teacher_per_level;
    std::map<std::string, double> task_losses;
    double grand_total = 0.0;

    /// grand_total == gamma * distill_total + sum_t w_t * task_t within 1e-9 relative.
    bool consistent(const std::vector<TaskSpec>& specs, double gamma) const;
    /// One JSON-lines record.
    nlohmann::json to_json() const;
    static LossBreakdown from_json(const nlohmann::json& j);
};

}  // namespace mtd
