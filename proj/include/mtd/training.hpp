// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Two-stage training, evaluation and ablation runs.

#pragma once

#include "mtd/checkpoint.hpp"
#include "mtd/metrics.hpp"
#include "mtd/run_config.hpp"
#include "mtd/student.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mtd {

/// Generated splits plus cached teacher features. File teachers index
/// train samples first, then validation samples.
struct PreparedData {
    Dataset train;
    Dataset val;
    Committee committee;
    std::vector<std::vector<MultiLevelFeatures>> train_features;  // [sample][teacher]
    std::vector<std::vector<MultiLevelFeatures>> val_features;
};

PreparedData prepare_data(const RunConfig& config);

/// Student for a resolved config, initialized from the run's init stream.
std::unique_ptr<Student> make_student(const RunConfig& config);

struct StageLog {
    std::vector<LossBreakdown> steps;
    std::vector<double> lr;

    /// One JSON object per line: the breakdown plus "lr".
    void write_jsonl(std::ostream& out) const;
};

struct StageOptions {
    /// Written with the pre-step parameters when the loss turns non-finite.
    std::string crash_checkpoint;
    /// Called after each step.
    std::function<void(const LossBreakdown&)> on_step;
};

/// Stem, adapters and alignment layers on the distillation loss alone.
StageLog train_stage1(const RunConfig& config, Student& student, const PreparedData& data,
                      const StageOptions& options = {});

/// All parameters on gamma * distill + weighted task losses, router noise on.
StageLog train_stage2(const RunConfig& config, Student& student, const PreparedData& data,
                      const StageOptions& options = {});

struct EvalReport {
    std::vector<MetricRow> metrics;
    GateReport gates;
    RepSimilarity rep;
    double distill_loss = 0.0;
    std::map<std::string, double> task_losses;
    /// distill_loss + weighted task losses (gamma = 1 for every variant).
    double joint_loss = 0.0;

    nlohmann::json to_json() const;
};

/// Noise off, validation split. Without heads only the distillation side
/// is reported.
EvalReport evaluate(const Student& student, const PreparedData& data, const DistillConfig& distill, bool with_heads);

/// Output of a full pipeline run held in memory.
struct PipelineResult {
    StageLog stage1;
    StageLog stage2;
    EvalReport after_stage1;
    EvalReport final;
};

/// Stage 1 (unless skipped) then stage 2 (when stage2.steps > 0), sharing
/// one prepared dataset.
PipelineResult run_pipeline(const RunConfig& config, const PreparedData& data);

inline constexpr const char* kAblationVariants[] = {"no_tsap", "no_mor", "addition_fusion", "no_stage1",
                                                    "no_stage2_distill"};

/// The base config with the named mechanism removed. Unknown names raise
/// ConfigError listing the variants.
RunConfig ablation_config(const RunConfig& base, const std::string& variant);

// ---------------------------------------------------------------------------
// Run-directory drivers used by the CLI. Each writes config.json (the
// resolved RunConfig) into the output directory.

struct DistillArtifacts {
    std::filesystem::path checkpoint;
    StageLog log;
    EvalReport report;
};
DistillArtifacts run_distill(RunConfig config);

struct TrainArtifacts {
    std::filesystem::path checkpoint;
    StageLog log;
    EvalReport report;
};
TrainArtifacts run_train(RunConfig config);

/// Loads a checkpoint written by run_distill or run_train and evaluates it
/// on the validation split of its embedded run config. `baseline` rows
/// feed delta_m and the bias report.
struct EvalArtifacts {
    EvalReport report;
    std::optional<double> delta_m;
    std::optional<BiasReport> bias;
};
EvalArtifacts run_eval(const std::string& checkpoint, const std::vector<MetricRow>* baseline,
                       const std::filesystem::path& out_dir);

/// Side-by-side base vs variant, written as comparison.csv.
struct AblationArtifacts {
    PipelineResult base;
    PipelineResult variant;
    std::vector<std::array<std::string, 3>> table;  // quantity, base, variant
};
AblationArtifacts run_ablation(RunConfig config, const std::string& variant);

/// Student config stored in a checkpoint; throws when it is not a run
/// checkpoint.
RunConfig checkpoint_run_config(const Checkpoint& ckpt);

}  // namespace mtd
