// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration file (JSON) and its conversions.

#pragma once

#include "mtd/core_model.hpp"
#include "mtd/dataset.hpp"
#include "mtd/distill_losses.hpp"
#include "mtd/optimizer.hpp"
#include "mtd/teacher_committee.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace mtd {

struct CommitteeEntry {
    enum class Kind { Synthetic, File };
    Kind kind = Kind::Synthetic;
    SyntheticTeacherSpec synthetic;  // Synthetic
    std::string path;                // File
};

struct DatasetConfig {
    std::uint64_t seed = 0;
    int num_train = 64;
    int num_val = 32;
    std::vector<SyntheticTask> tasks;
    bool augment = false;
    AugmentPolicy policy;
};

struct StageConfig {
    int steps = 200;
    int batch_size = 4;
    double lr = 1e-3;
    double weight_decay = 0.01;
    ScheduleKind schedule = ScheduleKind::Cosine;
    double warmup_fraction = 0.05;
    double clip = 10.0;  // global gradient norm; <= 0 disables

    int warmup_steps() const;
    LrSchedule lr_schedule() const;
    void validate(const std::string& which) const;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "run";
    ModelConfig model;  // teachers and tasks are filled from committee and dataset
    DistillConfig distill;
    std::vector<CommitteeEntry> committee;
    DatasetConfig dataset;
    StageConfig stage1;
    StageConfig stage2{300, 4, 2e-5, 0.01, ScheduleKind::Poly, 0.05, 10.0};
    std::string stage1_checkpoint;  // required by stage 2 unless skip_stage1
    bool skip_stage1 = false;

    /// Structural checks that do not touch the filesystem.
    void validate() const;
    /// Teacher shapes (feature files are opened) and task specs copied into
    /// `model`.
    void resolve_model();
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Parses a config file; JSON errors and unknown keys raise ConfigError.
RunConfig load_run_config(const std::string& path);

/// `output_dir` placed under $MTD_OUTPUT_ROOT when it is relative and the
/// variable is set.
std::filesystem::path resolve_output_dir(const RunConfig& c);

/// Teachers for the configured committee. Synthetic members use the
/// model's image size and levels.
Committee build_committee(const RunConfig& c);

/// Synthetic members only, for dataset generation.
std::vector<SyntheticTeacherSpec> synthetic_members(const RunConfig& c);

}  // namespace mtd
