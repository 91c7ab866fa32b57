// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/metrics.hpp"

#include "mtd/autograd.hpp"
#include "mtd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace mtd {

const char* to_string(MetricUnit u) {
    switch (u) {
        case MetricUnit::Percent: return "percent";
        case MetricUnit::Degrees: return "degrees";
        case MetricUnit::Raw: return "raw";
    }
    return "?";
}

SegmentationScore::SegmentationScore(int num_classes)
    : k_(num_classes), confusion_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
    if (num_classes < 2) throw ConfigError("SegmentationScore: need at least 2 classes");
}

void SegmentationScore::add(const std::vector<int>& pred, const std::vector<int>& gt) {
    if (pred.size() != gt.size()) throw ConfigError("SegmentationScore: prediction and label sizes differ");
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] == kIgnoreLabel) continue;
        if (gt[i] < 0 || gt[i] >= k_ || pred[i] < 0 || pred[i] >= k_) {
            throw ConfigError("SegmentationScore: class id out of range at pixel " + std::to_string(i));
        }
        ++confusion_[static_cast<std::size_t>(gt[i]) * k_ + pred[i]];
    }
}

std::vector<std::optional<double>> SegmentationScore::iou() const {
    std::vector<std::optional<double>> out(static_cast<std::size_t>(k_));
    for (int c = 0; c < k_; ++c) {
        long inter = confusion_[static_cast<std::size_t>(c) * k_ + c];
        long gt = 0, pred = 0;
        for (int j = 0; j < k_; ++j) {
            gt += confusion_[static_cast<std::size_t>(c) * k_ + j];
            pred += confusion_[static_cast<std::size_t>(j) * k_ + c];
        }
        const long uni = gt + pred - inter;
        if (uni > 0) out[c] = static_cast<double>(inter) / static_cast<double>(uni);
    }
    return out;
}

std::optional<double> SegmentationScore::miou() const {
    double sum = 0.0;
    int n = 0;
    for (const auto& v : iou()) {
        if (!v) continue;
        sum += *v;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return 100.0 * sum / n;
}

namespace {

// Number of thresholds i / (count - 1) that p reaches, minus one.
int threshold_bin(double p, int count) {
    const double scale = count - 1;
    int b = static_cast<int>(std::floor(std::clamp(p, 0.0, 1.0) * scale));
    while (b + 1 < count && p >= (b + 1) / scale) ++b;
    while (b >= 0 && p < b / scale) --b;
    return b;
}

double f_beta(double tp, double predicted, double positives, double beta2) {
    const double p = predicted > 0 ? tp / predicted : 0.0;
    const double r = positives > 0 ? tp / positives : 0.0;
    const double denom = beta2 * p + r;
    return denom > 0 ? 100.0 * (1.0 + beta2) * p * r / denom : 0.0;
}

}  // namespace

void MaxFScore::add(const std::vector<double>& probs, const std::vector<double>& gt, const std::vector<char>& valid) {
    if (probs.size() != gt.size() || (!valid.empty() && valid.size() != gt.size())) {
        throw ConfigError("MaxFScore: size mismatch");
    }
    std::array<long, kThresholds> pos_hist{}, neg_hist{};
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!valid.empty() && !valid[i]) continue;
        const bool positive = gt[i] >= 0.5;
        positives_ += positive;
        const int b = threshold_bin(probs[i], kThresholds);
        if (b < 0) continue;
        (positive ? pos_hist : neg_hist)[b] += 1;
    }
    long tp = 0, fp = 0;
    for (int i = kThresholds - 1; i >= 0; --i) {
        tp += pos_hist[i];
        fp += neg_hist[i];
        tp_[i] += tp;
        fp_[i] += fp;
    }
}

double MaxFScore::f_at(int i) const {
    return f_beta(static_cast<double>(tp_[i]), static_cast<double>(tp_[i] + fp_[i]), static_cast<double>(positives_),
                  kBeta2);
}

std::optional<double> MaxFScore::max_f() const {
    if (positives_ == 0) return std::nullopt;
    double best = 0.0;
    for (int i = 0; i < kThresholds; ++i) best = std::max(best, f_at(i));
    return best;
}

int BoundaryFScore::radius(Grid grid) {
    const double diag = std::sqrt(static_cast<double>(grid.h) * grid.h + static_cast<double>(grid.w) * grid.w);
    return std::max(1, static_cast<int>(std::lround(0.0075 * diag)));
}

void BoundaryFScore::add(const std::vector<double>& probs, const std::vector<double>& gt, Grid grid) {
    const std::size_t n = static_cast<std::size_t>(grid.count());
    if (probs.size() != n || gt.size() != n) throw ConfigError("BoundaryFScore: size mismatch");
    const int r = radius(grid);
    std::vector<char> near_gt(n, 0);
    std::vector<double> best_prob(n, -1.0);
    for (int y = 0; y < grid.h; ++y)
        for (int x = 0; x < grid.w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * grid.w + x;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= grid.h || xx < 0 || xx >= grid.w) continue;
                    const std::size_t j = static_cast<std::size_t>(yy) * grid.w + xx;
                    if (gt[j] >= 0.5) near_gt[i] = 1;
                    best_prob[i] = std::max(best_prob[i], probs[j]);
                }
        }
    for (std::size_t i = 0; i < n; ++i) {
        const bool is_gt = gt[i] >= 0.5;
        gt_total_ += is_gt;
        for (int t = 0; t < kThresholds; ++t) {
            const double thr = (t + 1) / 100.0;
            if (probs[i] >= thr) {
                ++pred_[t];
                pred_matched_[t] += near_gt[i];
            }
            if (is_gt && best_prob[i] >= thr) ++gt_matched_[t];
        }
    }
}

double BoundaryFScore::f_at(int t) const {
    const double p = pred_[t] > 0 ? static_cast<double>(pred_matched_[t]) / pred_[t] : 0.0;
    const double r = gt_total_ > 0 ? static_cast<double>(gt_matched_[t]) / gt_total_ : 0.0;
    return p + r > 0 ? 100.0 * 2.0 * p * r / (p + r) : 0.0;
}

std::optional<double> BoundaryFScore::ods_f() const {
    if (gt_total_ == 0) return std::nullopt;
    double best = 0.0;
    for (int t = 0; t < kThresholds; ++t) best = std::max(best, f_at(t));
    return best;
}

void NormalError::add(const Tensor& pred, const Tensor& gt) {
    if (!pred.same_shape(gt) || pred.cols != 3) throw ConfigError("NormalError: expected matching [pixels, 3] maps");
    for (int i = 0; i < pred.rows; ++i) {
        double gn = 0.0, pn = 0.0, dot = 0.0;
        for (int c = 0; c < 3; ++c) {
            gn += gt(i, c) * gt(i, c);
            pn += pred(i, c) * pred(i, c);
            dot += gt(i, c) * pred(i, c);
        }
        if (gn == 0.0) continue;
        const double cosv = pn == 0.0 ? 0.0 : std::clamp(dot / std::sqrt(gn * pn), -1.0, 1.0);
        sum_ += std::acos(cosv) * 180.0 / std::numbers::pi;
        ++count_;
    }
}

std::optional<double> NormalError::mean_error() const {
    if (count_ == 0) return std::nullopt;
    return sum_ / static_cast<double>(count_);
}

void DepthRmse::add(const Tensor& pred, const Tensor& gt) {
    if (!pred.same_shape(gt) || pred.cols != 1) throw ConfigError("DepthRmse: expected matching [pixels, 1] maps");
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!(gt.data[i] > 0.0)) continue;
        const double e = pred.data[i] - gt.data[i];
        sq_ += e * e;
        ++count_;
    }
}

std::optional<double> DepthRmse::rmse() const {
    if (count_ == 0) return std::nullopt;
    return std::sqrt(sq_ / static_cast<double>(count_));
}

TaskMetric::TaskMetric(TaskSpec spec) : spec_(std::move(spec)) {
    if (spec_.is_segmentation()) seg_ = std::make_unique<SegmentationScore>(spec_.num_classes);
}

void TaskMetric::add(const Tensor& raw, const TaskLabel& gt) {
    if (raw.rows != gt.num_pixels() || raw.cols != spec_.output_channels()) {
        throw ConfigError("metric " + spec_.name + ": prediction " + raw.shape_str() + " does not fit labels");
    }
    switch (spec_.kind) {
        case TaskKind::Semseg:
        case TaskKind::Parsing: {
            std::vector<int> pred(static_cast<std::size_t>(raw.rows));
            for (int i = 0; i < raw.rows; ++i) {
                auto row = raw.row(i);
                pred[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
            }
            seg_->add(pred, gt.classes);
            break;
        }
        case TaskKind::Saliency:
        case TaskKind::Boundary: {
            std::vector<double> probs(raw.data.size());
            for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = sigmoid_value(raw.data[i]);
            if (spec_.kind == TaskKind::Saliency) {
                maxf_.add(probs, gt.values.data, gt.valid);
            } else {
                bf_.add(probs, gt.values.data, gt.grid);
            }
            break;
        }
        case TaskKind::Normal: normal_.add(raw, gt.values); break;
        case TaskKind::Depth: depth_.add(raw, gt.values); break;
    }
}

MetricRow TaskMetric::result() const {
    MetricRow row{spec_.name, metric_name(spec_.kind), 0.0, MetricUnit::Percent, true};
    std::optional<double> v;
    switch (spec_.kind) {
        case TaskKind::Semseg:
        case TaskKind::Parsing: v = seg_->miou(); break;
        case TaskKind::Saliency: v = maxf_.max_f(); break;
        case TaskKind::Boundary: v = bf_.ods_f(); break;
        case TaskKind::Normal:
            v = normal_.mean_error();
            row.unit = MetricUnit::Degrees;
            break;
        case TaskKind::Depth:
            v = depth_.rmse();
            row.unit = MetricUnit::Raw;
            break;
    }
    row.defined = v.has_value();
    row.value = v.value_or(0.0);
    return row;
}

double relative_gain(double model, double baseline, bool lower_is_better) {
    if (baseline == 0.0) throw ConfigError("relative gain against a zero baseline");
    const double rel = (model - baseline) / baseline * 100.0;
    return lower_is_better ? -rel : rel;
}

namespace {

const MetricRow& find_row(const std::vector<MetricRow>& rows, const std::string& task, const char* which) {
    for (const auto& r : rows)
        if (r.task == task) {
            if (!r.defined) throw ConfigError(std::string(which) + " metric for task " + task + " is undefined");
            return r;
        }
    throw ConfigError(std::string(which) + " rows have no task " + task);
}

std::vector<double> gains(const std::vector<MetricRow>& model, const std::vector<MetricRow>& baseline,
                          const std::vector<TaskSpec>& specs) {
    if (specs.empty()) throw ConfigError("no tasks to compare");
    std::vector<double> g;
    for (const auto& s : specs) {
        g.push_back(relative_gain(find_row(model, s.name, "model").value, find_row(baseline, s.name, "baseline").value,
                                  s.lower_is_better));
    }
    return g;
}

}  // namespace

double delta_m(const std::vector<MetricRow>& multi, const std::vector<MetricRow>& single,
               const std::vector<TaskSpec>& specs) {
    double sum = 0.0;
    for (double g : gains(multi, single, specs)) sum += g;
    return sum / static_cast<double>(specs.size());
}

BiasReport bias_report(const std::vector<double>& improvements) {
    BiasReport b;
    if (improvements.empty()) throw ConfigError("bias_report: no tasks");
    for (double v : improvements) b.mu += v;
    b.mu /= static_cast<double>(improvements.size());
    double var = 0.0;
    for (double v : improvements) var += (v - b.mu) * (v - b.mu);
    b.sigma = std::sqrt(var / static_cast<double>(improvements.size()));
    if (b.sigma > 0.0) b.mu_over_sigma = b.mu / b.sigma;
    return b;
}

BiasReport bias_report(const std::vector<MetricRow>& model, const std::vector<MetricRow>& baseline,
                       const std::vector<TaskSpec>& specs) {
    const auto g = gains(model, baseline, specs);
    BiasReport b = bias_report(g);
    for (std::size_t i = 0; i < specs.size(); ++i) b.improvement.emplace_back(specs[i].name, g[i]);
    return b;
}

nlohmann::json BiasReport::to_json() const {
    nlohmann::json j;
    for (const auto& [task, v] : improvement) j["improvement"][task] = v;
    j["mu"] = mu;
    j["sigma"] = sigma;
    j["mu_over_sigma"] = mu_over_sigma ? nlohmann::json(*mu_over_sigma) : nlohmann::json(nullptr);
    return j;
}

RepSimilarity rep_similarity(const std::vector<MultiLevelFeatures>& student,
                             const std::vector<MultiLevelFeatures>& teachers) {
    if (student.size() != teachers.size() || student.empty()) {
        throw ConfigError("rep_similarity: student and teacher sets differ in size");
    }
    RepSimilarity out;
    for (std::size_t i = 0; i < student.size(); ++i) {
        double sum = 0.0;
        for (const auto& [level, rep] : student[i]) {
            auto it = teachers[i].find(level);
            if (it == teachers[i].end()) throw ConfigError("rep_similarity: teacher lacks level " + std::to_string(level));
            sum += 1.0 - ag::cosine_distance(Var::constant(rep.values()), Var::constant(it->second.values())).item();
        }
        out.per_teacher.push_back(sum / static_cast<double>(student[i].size()));
    }
    for (double v : out.per_teacher) out.average += v;
    out.average /= static_cast<double>(out.per_teacher.size());
    return out;
}

void write_metric_csv(const std::vector<MetricRow>& rows, std::ostream& out) {
    const auto precision = out.precision(17);
    out << "task,metric,value\n";
    for (const auto& r : rows) {
        out << r.task << ',' << r.metric << ',';
        if (r.defined) {
            out << r.value;
        } else {
            out << "nan";
        }
        out << '\n';
    }
    out.precision(precision);
}

std::vector<MetricRow> read_metric_csv(std::istream& in, std::vector<std::pair<std::string, bool>>* directions) {
    std::vector<MetricRow> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cols.push_back(cell);
        if (cols.size() < 3) throw ConfigError("metric csv line " + std::to_string(line_no) + ": expected task,metric,value");
        if (cols[0] == "task") continue;
        MetricRow r;
        r.task = cols[0];
        r.metric = cols[1];
        try {
            std::size_t used = 0;
            r.value = std::stod(cols[2], &used);
            if (used != cols[2].size()) throw std::invalid_argument(cols[2]);
        } catch (const std::exception&) {
            throw ConfigError("metric csv line " + std::to_string(line_no) + ": bad value '" + cols[2] + "'");
        }
        r.defined = std::isfinite(r.value);
        if (cols.size() >= 4 && directions) {
            const std::string& f = cols[3];
            if (f != "0" && f != "1" && f != "true" && f != "false") {
                throw ConfigError("metric csv line " + std::to_string(line_no) + ": lower_is_better must be 0/1");
            }
            directions->emplace_back(r.task, f == "1" || f == "true");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace mtd
