// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense-prediction metrics, multi-task gain and representation statistics.

#pragma once

#include "mtd/core_model.hpp"
#include "mtd/task_heads.hpp"
#include "mtd/task_spec.hpp"

#include <json.hpp>

#include <array>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mtd {

enum class MetricUnit { Percent, Degrees, Raw };

const char* to_string(MetricUnit u);

struct MetricRow {
    std::string task;
    std::string metric;
    double value = 0.0;
    MetricUnit unit = MetricUnit::Raw;
    bool defined = true;  // false when the ground truth left it undefined
};

/// Confusion-matrix mIoU over classes present in prediction or ground truth.
class SegmentationScore {
public:
    explicit SegmentationScore(int num_classes);
    void add(const std::vector<int>& pred, const std::vector<int>& gt);
    /// Percent; nullopt when no class was observed.
    std::optional<double> miou() const;
    /// Per-class IoU, nullopt for classes never seen.
    std::vector<std::optional<double>> iou() const;

private:
    int k_;
    std::vector<long> confusion_;  // gt-major
};

/// F-measure swept over 256 thresholds i / 255 with beta^2 = 0.3, counts
/// pooled over the dataset. A pixel is predicted positive when p >= t.
class MaxFScore {
public:
    static constexpr int kThresholds = 256;
    static constexpr double kBeta2 = 0.3;

    void add(const std::vector<double>& probs, const std::vector<double>& gt, const std::vector<char>& valid = {});
    /// Percent F at threshold index i.
    double f_at(int i) const;
    /// Percent; nullopt when the ground truth has no positive pixel.
    std::optional<double> max_f() const;

private:
    std::array<long, kThresholds> tp_{};
    std::array<long, kThresholds> fp_{};
    long positives_ = 0;
};

/// Boundary F with a Chebyshev matching radius max(1, round(0.0075 * diag))
/// and the best threshold over the dataset; each predicted pixel counts as
/// matched if a true boundary pixel is within the radius and vice versa.
class BoundaryFScore {
public:
    static constexpr int kThresholds = 99;  // 0.01 .. 0.99

    void add(const std::vector<double>& probs, const std::vector<double>& gt, Grid grid);
    static int radius(Grid grid);
    double f_at(int i) const;
    std::optional<double> ods_f() const;

private:
    std::array<long, kThresholds> pred_{};
    std::array<long, kThresholds> pred_matched_{};
    std::array<long, kThresholds> gt_matched_{};
    long gt_total_ = 0;
};

/// Mean angle in degrees between unit-normalized predictions and valid
/// (nonzero) ground-truth normals. A zero prediction counts as 90 degrees.
class NormalError {
public:
    void add(const Tensor& pred, const Tensor& gt);
    std::optional<double> mean_error() const;

private:
    double sum_ = 0.0;
    long count_ = 0;
};

/// Root mean squared error over pixels with positive ground-truth depth.
class DepthRmse {
public:
    void add(const Tensor& pred, const Tensor& gt);
    std::optional<double> rmse() const;

private:
    double sq_ = 0.0;
    long count_ = 0;
};

/// Accumulates raw head outputs for one task and produces its MetricRow.
class TaskMetric {
public:
    explicit TaskMetric(TaskSpec spec);
    void add(const Tensor& raw_pred, const TaskLabel& gt);
    MetricRow result() const;
    const TaskSpec& spec() const { return spec_; }

private:
    TaskSpec spec_;
    std::unique_ptr<SegmentationScore> seg_;
    MaxFScore maxf_;
    BoundaryFScore bf_;
    NormalError normal_;
    DepthRmse depth_;
};

/// Signed per-task relative difference in percent, positive = better.
double relative_gain(double model, double baseline, bool lower_is_better);

/// Mean of relative_gain over tasks, in percent.
double delta_m(const std::vector<MetricRow>& multi, const std::vector<MetricRow>& single,
               const std::vector<TaskSpec>& specs);

struct BiasReport {
    std::vector<std::pair<std::string, double>> improvement;  // percent, per task
    double mu = 0.0;
    double sigma = 0.0;  // population
    std::optional<double> mu_over_sigma;

    nlohmann::json to_json() const;
};

BiasReport bias_report(const std::vector<MetricRow>& model, const std::vector<MetricRow>& baseline,
                       const std::vector<TaskSpec>& specs);
BiasReport bias_report(const std::vector<double>& improvements);

struct RepSimilarity {
    std::vector<double> per_teacher;
    double average = 0.0;
};

/// Mean token cosine between aligned student and teacher features, over
/// levels, per teacher, and the mean over teachers.
RepSimilarity rep_similarity(const std::vector<MultiLevelFeatures>& student,
                             const std::vector<MultiLevelFeatures>& teachers);

/// CSV with columns task, metric, value.
void write_metric_csv(const std::vector<MetricRow>& rows, std::ostream& out);

/// Reads task, metric, value[, lower_is_better] rows. Directions found in
/// the file are returned in `directions` (task -> lower_is_better).
std::vector<MetricRow> read_metric_csv(std::istream& in, std::vector<std::pair<std::string, bool>>* directions = nullptr);

}  // namespace mtd
