// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/params.hpp"

#include "mtd/errors.hpp"

#include <cmath>

namespace mtd {

const char* to_string(ParamGroup g) {
    switch (g) {
        case ParamGroup::Stem: return "stem";
        case ParamGroup::Adapter: return "adapter";
        case ParamGroup::Align: return "align";
        case ParamGroup::Router: return "router";
        case ParamGroup::Head: return "head";
    }
    return "?";
}

Var ParamStore::add(std::string name, ParamGroup group, Tensor init) {
    if (find(name)) throw ConfigError("duplicate parameter name " + name);
    Var v = Var::parameter(std::move(init));
    entries_.push_back({std::move(name), group, v});
    return v;
}

const ParamEntry* ParamStore::find(std::string_view name) const {
    for (const auto& e : entries_)
        if (e.name == name) return &e;
    return nullptr;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.var.value().size();
    return n;
}

std::size_t ParamStore::scalar_count(ParamGroup group) const {
    std::size_t n = 0;
    for (const auto& e : entries_)
        if (e.group == group) n += e.var.value().size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
}

namespace init {

Tensor normal(int rows, int cols, double stddev, Rng& rng) {
    Tensor t(rows, cols);
    if (stddev == 0.0) return t;
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.data) v = dist(rng);
    return t;
}

Tensor xavier(int fan_in, int fan_out, Rng& rng) {
    return normal(fan_in, fan_out, std::sqrt(2.0 / (fan_in + fan_out)), rng);
}

}  // namespace init

}  // namespace mtd
