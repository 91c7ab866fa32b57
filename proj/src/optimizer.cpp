// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/optimizer.hpp"

#include "mtd/errors.hpp"

#include <cmath>
#include <numbers>

namespace mtd {

const char* to_string(ScheduleKind k) { return k == ScheduleKind::Cosine ? "cosine" : "poly"; }

ScheduleKind schedule_from_string(const std::string& s) {
    if (s == "cosine") return ScheduleKind::Cosine;
    if (s == "poly") return ScheduleKind::Poly;
    throw ConfigError("unknown schedule '" + s + "' (expected cosine or poly)");
}

double LrSchedule::at(int step) const {
    if (step < warmup_steps) return base_lr * (step + 1) / warmup_steps;
    const int span = std::max(1, total_steps - warmup_steps);
    const double p = std::clamp(static_cast<double>(step - warmup_steps) / span, 0.0, 1.0);
    if (kind == ScheduleKind::Cosine) return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
    return base_lr * std::pow(1.0 - p, poly_power);
}

AdamW::AdamW(ParamStore& store, std::set<ParamGroup> groups, double weight_decay, double beta1, double beta2,
             double eps)
    : weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& e : store.entries()) {
        if (!groups.count(e.group)) continue;
        const Tensor& v = e.var.value();
        slots_.push_back({&e, Tensor(v.rows, v.cols), Tensor(v.rows, v.cols)});
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& s : slots_) {
        const Tensor& g = s.entry->var.grad();
        if (g.data.empty()) continue;
        Tensor& w = s.entry->var.mutable_value();
        const double decay = w.rows > 1 ? weight_decay_ : 0.0;
        for (std::size_t i = 0; i < w.data.size(); ++i) {
            s.m.data[i] = beta1_ * s.m.data[i] + (1.0 - beta1_) * g.data[i];
            s.v.data[i] = beta2_ * s.v.data[i] + (1.0 - beta2_) * g.data[i] * g.data[i];
            const double mh = s.m.data[i] / c1, vh = s.v.data[i] / c2;
            w.data[i] -= lr * (mh / (std::sqrt(vh) + eps_) + decay * w.data[i]);
        }
    }
}

double AdamW::grad_norm() const {
    double sq = 0.0;
    for (const auto& s : slots_)
        for (double g : s.entry->var.grad().data) sq += g * g;
    return std::sqrt(sq);
}

double AdamW::clip(double max_norm) {
    const double norm = grad_norm();
    if (max_norm > 0.0 && norm > max_norm) {
        const double f = max_norm / norm;
        for (auto& s : slots_) {
            if (s.entry->var.grad().data.empty()) continue;
            for (double& g : s.entry->var.grad_buffer().data) g *= f;
        }
    }
    return norm;
}

void AdamW::zero_grad() {
    for (auto& s : slots_) s.entry->var.zero_grad();
}

}  // namespace mtd
