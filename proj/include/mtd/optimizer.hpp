// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mtd/params.hpp"

#include <set>
#include <string>
#include <vector>

namespace mtd {

enum class ScheduleKind { Cosine, Poly };

const char* to_string(ScheduleKind k);
ScheduleKind schedule_from_string(const std::string& s);

/// Linear warmup to `base_lr`, then cosine or poly(0.9) decay to zero at
/// `total_steps`.
struct LrSchedule {
    ScheduleKind kind = ScheduleKind::Cosine;
    double base_lr = 1e-3;
    int total_steps = 1;
    int warmup_steps = 0;
    double poly_power = 0.9;

    double at(int step) const;
};

/// Adam with decoupled weight decay over the parameter groups it was
/// built for. Single-row tensors (biases, norms, scalars) are not decayed.
class AdamW {
public:
    AdamW(ParamStore& store, std::set<ParamGroup> groups, double weight_decay, double beta1 = 0.9,
          double beta2 = 0.999, double eps = 1e-8);

    /// Applies one update with learning rate `lr`. Parameters without a
    /// gradient are left untouched but still count the step.
    void step(double lr);

    /// Global L2 norm of the managed gradients.
    double grad_norm() const;
    /// Rescales gradients so their global norm is at most `max_norm`
    /// (max_norm <= 0 disables). Returns the norm before clipping.
    double clip(double max_norm);

    void zero_grad();
    long steps_taken() const { return t_; }

private:
    struct Slot {
        ParamEntry* entry;
        Tensor m, v;
    };
    std::vector<Slot> slots_;
    double weight_decay_, beta1_, beta2_, eps_;
    long t_ = 0;
};

}  // namespace mtd
