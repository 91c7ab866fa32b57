// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Procedural multi-task dataset whose labels are read out of one chosen
// synthetic teacher per task, plus the augmentation policy.

#pragma once

#include "mtd/image.hpp"
#include "mtd/rng.hpp"
#include "mtd/task_heads.hpp"
#include "mtd/teacher_committee.hpp"

#include <map>
#include <string>
#include <vector>

namespace mtd {

struct SyntheticTask {
    TaskSpec spec;
    std::string affinity;  // teacher_id whose top-level features define the labels
};

struct SyntheticDatasetSpec {
    std::uint64_t seed = 0;
    int num_samples = 64;
    int image_size = 32;
    std::vector<SyntheticTask> tasks;
    std::string split = "train";  // selects the image stream; readouts are shared

    void validate() const;
};

struct Sample {
    Image image;
    std::map<std::string, TaskLabel> labels;
};

struct Dataset {
    std::vector<Sample> samples;
    std::vector<TaskSpec> tasks;

    std::size_t size() const { return samples.size(); }
};

/// Seeded texture: smooth blobs, oriented stripes and pixel noise in [-1, 1].
Image procedural_image(int size, Rng& rng);

/// Every task's labels depend only on its affinity teacher (which must be
/// a synthetic committee member) and on the task's own readout seed.
Dataset make_synthetic_dataset(const SyntheticDatasetSpec& spec, const std::vector<SyntheticTeacherSpec>& committee);

/// Labels of one task computed from the affinity teacher's features.
TaskLabel readout_labels(const SyntheticTask& task, const TokenMap& top, int image_size, std::uint64_t seed);

/// Regenerates the dataset with every non-affinity teacher's seed changed
/// and reports whether all labels are unchanged.
bool verify_affinity_isolation(const SyntheticDatasetSpec& spec, const std::vector<SyntheticTeacherSpec>& committee);

struct AugmentPolicy {
    double min_scale = 0.5;
    double max_scale = 2.0;
    bool flip = true;
    double jitter = 0.1;  // brightness/contrast amplitude
};

/// Explicit augmentation parameters; `augment` draws them from a stream.
struct AugmentParams {
    double scale = 1.0;
    int crop_y = 0;  // offsets into the scaled image (may be negative: padded)
    int crop_x = 0;
    bool flip = false;
    double brightness = 0.0;
    double contrast = 1.0;
};

AugmentParams draw_augment(const AugmentPolicy& policy, int size, Rng& rng);

/// Rescale, crop back to the native size (out-of-range pixels use zero for
/// images and invalid for labels), optional horizontal flip (normal x
/// negated), colour jitter on the image only. Categorical labels use
/// nearest neighbour, continuous ones bilinear.
Sample apply_augment(const Sample& sample, const std::vector<TaskSpec>& tasks, const AugmentParams& params);

inline Sample augment(const Sample& sample, const std::vector<TaskSpec>& tasks, const AugmentPolicy& policy, Rng& rng) {
    return apply_augment(sample, tasks, draw_augment(policy, sample.image.height, rng));
}

}  // namespace mtd
