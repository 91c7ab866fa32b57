// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mtd/autograd.hpp"
#include "mtd/rng.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace mtd {

/// Parameter groups; training stages select which groups they update.
enum class ParamGroup { Stem, Adapter, Align, Router, Head };

const char* to_string(ParamGroup g);

struct ParamEntry {
    std::string name;
    ParamGroup group;
    Var var;
};

/// Ordered, named registry of trainable tensors. Registration order is the
/// checkpoint order and the optimizer order.
class ParamStore {
public:
    Var add(std::string name, ParamGroup group, Tensor init);

    const std::vector<ParamEntry>& entries() const { return entries_; }
    std::vector<ParamEntry>& entries() { return entries_; }
    const ParamEntry* find(std::string_view name) const;

    std::size_t scalar_count() const;
    std::size_t scalar_count(ParamGroup group) const;
    void zero_grad();

private:
    std::vector<ParamEntry> entries_;
};

namespace init {

Tensor normal(int rows, int cols, double stddev, Rng& rng);
/// Glorot normal, std = sqrt(2 / (fan_in + fan_out)).
Tensor xavier(int fan_in, int fan_out, Rng& rng);

}  // namespace init

}  // namespace mtd
