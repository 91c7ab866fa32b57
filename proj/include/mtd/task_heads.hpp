// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense prediction heads and task losses.

#pragma once

#include "mtd/core_model.hpp"
#include "mtd/params.hpp"
#include "mtd/task_spec.hpp"

#include <memory>
#include <string>
#include <vector>

namespace mtd {

inline constexpr int kIgnoreLabel = 255;

/// Ground truth of one task for one sample, at label resolution.
/// Segmentation kinds fill `classes` (kIgnoreLabel = ignored); the others
/// fill `values` with [H * W, channels]: 0/1 for saliency and boundary,
/// unit vectors for normals (zero = invalid), depth (<= 0 = invalid).
struct TaskLabel {
    Grid grid{};
    std::vector<int> classes;
    Tensor values;
    std::vector<char> valid;  // binary kinds only; empty = all valid

    int num_pixels() const { return grid.count(); }
};

struct HeadParams {
    std::vector<Var> proj_weight;  // per level [d, head_channels]
    std::vector<Var> proj_bias;
    Var conv_weight;  // [9 * 4 * head_channels, head_channels]
    Var conv_bias;
    Var out_weight;   // [head_channels, task channels]
    Var out_bias;
    std::shared_ptr<const Resampler> to_quarter;  // student grid -> 1/4 resolution
    std::shared_ptr<const Resampler> to_labels;   // 1/4 resolution -> labels
};

/// The 1/4-resolution decoding grid for a config.
Grid quarter_grid(const ModelConfig& config);

HeadParams make_head_params(const ModelConfig& config, const TaskSpec& spec, const std::string& name,
                            ParamStore& store, Rng& rng);

/// Raw head output [H * W, spec.output_channels()] at label resolution:
/// class logits, saliency/boundary logits, unnormalized normals or depth.
Var head_forward(const MultiLevelFeatures& fused, const TaskSpec& spec, const HeadParams& params);

/// Positive/negative pixel weights for balanced saliency BCE, computed over
/// a whole batch.
struct BinaryBalance {
    double positive = 0.5;
    double negative = 0.5;
};
BinaryBalance saliency_balance(const std::vector<const TaskLabel*>& batch);

/// Task loss on raw head output. Saliency uses `balance` when given,
/// otherwise balances over this sample alone.
Var task_loss(const Var& pred, const TaskLabel& gt, const TaskSpec& spec, const BinaryBalance* balance = nullptr);

}  // namespace mtd
