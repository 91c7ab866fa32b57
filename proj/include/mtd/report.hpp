// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Report-only arithmetic over metric tables, and SVG plots of run outputs.

#pragma once

#include "mtd/distill_losses.hpp"
#include "mtd/metrics.hpp"
#include "mtd/mor_router.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mtd {

struct DeltaReport {
    std::vector<TaskSpec> specs;
    double delta_m = 0.0;
    BiasReport bias;
};

/// Task directions come from a lower_is_better column when present (the
/// single-task table wins), otherwise from the metric name: mErr and RMSE
/// are lower-is-better. Differing task sets raise ConfigError.
DeltaReport report_from_csv(std::istream& multi, std::istream& single);

/// Loss records from a loss_stage*.jsonl file.
std::vector<LossBreakdown> read_loss_log(std::istream& in);

/// Gate rows from a gates.csv file.
std::vector<GateReport::Row> read_gate_csv(std::istream& in);

/// Line plot of grand total, distillation total and each task loss.
std::string loss_curve_svg(const std::vector<LossBreakdown>& log);

/// One heatmap row per (task, level), one column per expert.
std::string gate_heatmap_svg(const std::vector<GateReport::Row>& rows);

}  // namespace mtd
