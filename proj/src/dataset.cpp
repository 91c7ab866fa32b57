// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/dataset.hpp"

#include "mtd/errors.hpp"
#include "mtd/params.hpp"

#include <cmath>
#include <numbers>

namespace mtd {

void SyntheticDatasetSpec::validate() const {
    if (num_samples < 0) throw ConfigError("dataset: negative sample count");
    if (image_size < 4) throw ConfigError("dataset: image_size too small");
    if (tasks.empty()) throw ConfigError("dataset: no tasks");
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        tasks[i].spec.validate();
        if (tasks[i].affinity.empty()) throw ConfigError("dataset: task " + tasks[i].spec.name + " has no affinity");
        for (std::size_t j = 0; j < i; ++j)
            if (tasks[j].spec.name == tasks[i].spec.name) throw ConfigError("dataset: duplicate task " + tasks[i].spec.name);
    }
}

Image procedural_image(int size, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    Image img(3, size, size);
    for (int c = 0; c < 3; ++c) {
        struct Blob {
            double cy, cx, inv2s2, amp;
        };
        std::vector<Blob> blobs;
        for (int b = 0; b < 3; ++b) {
            const double s = size * (0.12 + 0.2 * u(rng));
            blobs.push_back({u(rng) * size, u(rng) * size, 1.0 / (2.0 * s * s), 2.0 * u(rng) - 1.0});
        }
        const double theta = u(rng) * std::numbers::pi;
        const double freq = (2.0 + 4.0 * u(rng)) / size;
        const double phase = u(rng) * 2.0 * std::numbers::pi;
        const double stripe = 0.6 * u(rng);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                double v = 0.0;
                for (const auto& b : blobs) {
                    const double dy = y - b.cy, dx = x - b.cx;
                    v += 1.5 * b.amp * std::exp(-(dy * dy + dx * dx) * b.inv2s2);
                }
                v += stripe * std::sin(2.0 * std::numbers::pi * freq * (x * std::cos(theta) + y * std::sin(theta)) + phase);
                v += 0.1 * n(rng);
                img.at(c, y, x) = std::tanh(v);
            }
    }
    return img;
}

namespace {

Tensor upsample(const Tensor& map, Grid from, int size) {
    Resampler r(from, {size, size});
    return r.apply(map);
}

}  // namespace

TaskLabel readout_labels(const SyntheticTask& task, const TokenMap& top, int image_size, std::uint64_t seed) {
    const TaskSpec& spec = task.spec;
    Rng rng = make_stream(seed ^ hash_name(spec.name), "readout");
    const int c = top.channels();
    const double std = 2.0 / std::sqrt(static_cast<double>(c));
    TaskLabel label;
    label.grid = {image_size, image_size};
    const int n = label.grid.count();
    auto project = [&](int outputs) { return upsample(matmul(top.values(), init::normal(c, outputs, std, rng)), top.grid, image_size); };
    switch (spec.kind) {
        case TaskKind::Semseg:
        case TaskKind::Parsing: {
            Tensor logits = project(spec.num_classes);
            label.classes.resize(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) {
                auto row = logits.row(i);
                label.classes[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
            }
            break;
        }
        case TaskKind::Saliency: {
            Tensor s = project(1);
            label.values = Tensor(n, 1);
            for (int i = 0; i < n; ++i) label.values.data[i] = s.data[i] > 0.0 ? 1.0 : 0.0;
            break;
        }
        case TaskKind::Boundary: {
            Tensor logits = project(2);
            std::vector<int> cls(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) cls[i] = logits(i, 1) > logits(i, 0);
            label.values = Tensor(n, 1);
            for (int y = 0; y < image_size; ++y)
                for (int x = 0; x < image_size; ++x) {
                    const int i = y * image_size + x;
                    const bool edge = (x + 1 < image_size && cls[i] != cls[i + 1]) ||
                                      (y + 1 < image_size && cls[i] != cls[i + image_size]);
                    label.values.data[i] = edge ? 1.0 : 0.0;
                }
            break;
        }
        case TaskKind::Normal: {
            Tensor v = project(3);
            label.values = Tensor(n, 3);
            for (int i = 0; i < n; ++i) {
                const double a = std::tanh(v(i, 0)), b = std::tanh(v(i, 1)), z = 1.0;
                const double norm = std::sqrt(a * a + b * b + z * z);
                label.values(i, 0) = a / norm;
                label.values(i, 1) = b / norm;
                label.values(i, 2) = z / norm;
            }
            break;
        }
        case TaskKind::Depth: {
            Tensor v = project(1);
            label.values = Tensor(n, 1);
            for (int i = 0; i < n; ++i) label.values.data[i] = 1.5 + std::tanh(v.data[i]);
            break;
        }
    }
    return label;
}

Dataset make_synthetic_dataset(const SyntheticDatasetSpec& spec, const std::vector<SyntheticTeacherSpec>& committee) {
    spec.validate();
    const std::vector<int> levels = select_levels(4);
    std::map<std::string, SyntheticTeacher> teachers;
    for (const auto& task : spec.tasks) {
        if (teachers.count(task.affinity)) continue;
        const SyntheticTeacherSpec* found = nullptr;
        for (const auto& t : committee)
            if (t.teacher_id == task.affinity) found = &t;
        if (!found) {
            throw ConfigError("dataset: task " + task.spec.name + " names affinity '" + task.affinity +
                              "', which is not a synthetic committee member");
        }
        teachers.emplace(task.affinity, SyntheticTeacher(*found, spec.image_size, levels));
    }

    Dataset data;
    for (const auto& t : spec.tasks) data.tasks.push_back(t.spec);
    Rng images = make_stream(spec.seed, "images." + spec.split);
    data.samples.reserve(static_cast<std::size_t>(spec.num_samples));
    for (int i = 0; i < spec.num_samples; ++i) {
        Sample s;
        s.image = procedural_image(spec.image_size, images);
        std::map<std::string, TokenMap> tops;
        for (const auto& [id, teacher] : teachers) tops.emplace(id, teacher.forward(s.image).at(levels.back()));
        for (const auto& task : spec.tasks) {
            s.labels.emplace(task.spec.name, readout_labels(task, tops.at(task.affinity), spec.image_size, spec.seed));
        }
        data.samples.push_back(std::move(s));
    }
    return data;
}

namespace {

bool same_label(const TaskLabel& a, const TaskLabel& b) {
    return a.grid == b.grid && a.classes == b.classes && a.values == b.values && a.valid == b.valid;
}

}  // namespace

bool verify_affinity_isolation(const SyntheticDatasetSpec& spec, const std::vector<SyntheticTeacherSpec>& committee) {
    const Dataset base = make_synthetic_dataset(spec, committee);
    for (const auto& task : spec.tasks) {
        std::vector<SyntheticTeacherSpec> perturbed = committee;
        for (auto& t : perturbed)
            if (t.teacher_id != task.affinity) t.seed = splitmix64(t.seed + 0x5eed);
        const Dataset other = make_synthetic_dataset(spec, perturbed);
        for (std::size_t i = 0; i < base.size(); ++i) {
            if (!(base.samples[i].image == other.samples[i].image)) return false;
            if (!same_label(base.samples[i].labels.at(task.spec.name), other.samples[i].labels.at(task.spec.name))) {
                return false;
            }
        }
    }
    return true;
}

AugmentParams draw_augment(const AugmentPolicy& policy, int size, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    AugmentParams p;
    p.scale = policy.min_scale + (policy.max_scale - policy.min_scale) * u(rng);
    const int scaled = static_cast<int>(std::lround(size * p.scale));
    const int lo = std::min(0, scaled - size), hi = std::max(0, scaled - size);
    p.crop_y = lo + static_cast<int>(std::floor(u(rng) * (hi - lo + 1)));
    p.crop_x = lo + static_cast<int>(std::floor(u(rng) * (hi - lo + 1)));
    p.crop_y = std::min(p.crop_y, hi);
    p.crop_x = std::min(p.crop_x, hi);
    p.flip = policy.flip && u(rng) < 0.5;
    p.brightness = policy.jitter * (2.0 * u(rng) - 1.0);
    p.contrast = 1.0 + policy.jitter * (2.0 * u(rng) - 1.0);
    return p;
}

namespace {

// Source position in the original image of output pixel (y, x), or false
// when the crop falls into padding.
struct SourcePoint {
    bool inside;
    double sy, sx;
};

SourcePoint locate(int y, int x, int size, const AugmentParams& p) {
    const int scaled = static_cast<int>(std::lround(size * p.scale));
    const int xo = p.flip ? size - 1 - x : x;
    const int ys = y + p.crop_y, xs = xo + p.crop_x;
    if (ys < 0 || xs < 0 || ys >= scaled || xs >= scaled) return {false, 0, 0};
    const double ratio = static_cast<double>(size) / scaled;
    return {true, (ys + 0.5) * ratio - 0.5, (xs + 0.5) * ratio - 0.5};
}

struct Bilinear {
    int y0, y1, x0, x1;
    double wy, wx;
};

Bilinear taps(double sy, double sx, int size) {
    sy = std::clamp(sy, 0.0, size - 1.0);
    sx = std::clamp(sx, 0.0, size - 1.0);
    Bilinear b;
    b.y0 = static_cast<int>(std::floor(sy));
    b.x0 = static_cast<int>(std::floor(sx));
    b.y1 = std::min(b.y0 + 1, size - 1);
    b.x1 = std::min(b.x0 + 1, size - 1);
    b.wy = sy - b.y0;
    b.wx = sx - b.x0;
    return b;
}

template <typename F>
double sample_bilinear(const Bilinear& b, F&& at) {
    return (1 - b.wy) * ((1 - b.wx) * at(b.y0, b.x0) + b.wx * at(b.y0, b.x1)) +
           b.wy * ((1 - b.wx) * at(b.y1, b.x0) + b.wx * at(b.y1, b.x1));
}

int nearest(double s, int size) { return std::clamp(static_cast<int>(std::lround(s)), 0, size - 1); }

}  // namespace

Sample apply_augment(const Sample& sample, const std::vector<TaskSpec>& tasks, const AugmentParams& p) {
    const int size = sample.image.height;
    if (sample.image.width != size) throw ConfigError("augment: square images only");
    Sample out;
    out.image = Image(sample.image.channels, size, size);
    for (const auto& t : tasks) {
        const TaskLabel& src = sample.labels.at(t.name);
        if (src.grid != Grid{size, size}) throw ConfigError("augment: labels of " + t.name + " not aligned to the image");
        TaskLabel l;
        l.grid = src.grid;
        if (t.is_segmentation()) l.classes.assign(static_cast<std::size_t>(size) * size, kIgnoreLabel);
        else l.values = Tensor(size * size, src.values.cols);
        if (t.kind == TaskKind::Saliency || t.kind == TaskKind::Boundary) l.valid.assign(static_cast<std::size_t>(size) * size, 1);
        out.labels.emplace(t.name, std::move(l));
    }
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const int i = y * size + x;
            const SourcePoint s = locate(y, x, size, p);
            if (!s.inside) {
                for (auto& [name, l] : out.labels)
                    if (!l.valid.empty()) l.valid[i] = 0;
                continue;
            }
            const Bilinear b = taps(s.sy, s.sx, size);
            for (int c = 0; c < out.image.channels; ++c) {
                const double v = sample_bilinear(b, [&](int yy, int xx) { return sample.image.at(c, yy, xx); });
                out.image.at(c, y, x) = p.contrast * v + p.brightness;
            }
            const int ny = nearest(s.sy, size), nx = nearest(s.sx, size);
            for (const auto& t : tasks) {
                const TaskLabel& src = sample.labels.at(t.name);
                TaskLabel& dst = out.labels.at(t.name);
                const int j = ny * size + nx;
                switch (t.kind) {
                    case TaskKind::Semseg:
                    case TaskKind::Parsing: dst.classes[i] = src.classes[j]; break;
                    case TaskKind::Saliency:
                    case TaskKind::Boundary:
                        dst.values.data[i] = src.values.data[j];
                        if (!src.valid.empty()) dst.valid[i] = src.valid[j];
                        break;
                    case TaskKind::Depth:
                    case TaskKind::Normal:
                        for (int c = 0; c < src.values.cols; ++c) {
                            dst.values(i, c) = sample_bilinear(b, [&](int yy, int xx) { return src.values(yy * size + xx, c); });
                        }
                        if (t.kind == TaskKind::Normal && p.flip) dst.values(i, 0) = -dst.values(i, 0);
                        break;
                }
            }
        }
    return out;
}

}  // namespace mtd
