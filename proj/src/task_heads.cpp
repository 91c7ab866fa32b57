// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/task_heads.hpp"

#include "mtd/errors.hpp"

#include <cmath>

namespace mtd {

Grid quarter_grid(const ModelConfig& config) {
    const int q = std::max(1, config.image_size / 4);
    return {q, q};
}

HeadParams make_head_params(const ModelConfig& config, const TaskSpec& spec, const std::string& name,
                            ParamStore& store, Rng& rng) {
    spec.validate();
    const int d = config.embed_dim;
    const int hc = config.head_channels;
    const int levels = static_cast<int>(select_levels(config.depth).size());
    HeadParams p;
    for (int s = 0; s < levels; ++s) {
        const std::string pre = name + ".proj." + std::to_string(s);
        p.proj_weight.push_back(store.add(pre + ".weight", ParamGroup::Head, init::xavier(d, hc, rng)));
        p.proj_bias.push_back(store.add(pre + ".bias", ParamGroup::Head, Tensor(1, hc)));
    }
    p.conv_weight = store.add(name + ".conv.weight", ParamGroup::Head, init::xavier(9 * levels * hc, hc, rng));
    p.conv_bias = store.add(name + ".conv.bias", ParamGroup::Head, Tensor(1, hc));
    p.out_weight = store.add(name + ".out.weight", ParamGroup::Head, init::xavier(hc, spec.output_channels(), rng));
    p.out_bias = store.add(name + ".out.bias", ParamGroup::Head, Tensor(1, spec.output_channels()));
    p.to_quarter = std::make_shared<const Resampler>(config.grid(), quarter_grid(config));
    p.to_labels = std::make_shared<const Resampler>(quarter_grid(config), Grid{config.image_size, config.image_size});
    return p;
}

Var head_forward(const MultiLevelFeatures& fused, const TaskSpec& spec, const HeadParams& params) {
    if (fused.size() != params.proj_weight.size()) {
        throw ConfigError("head " + spec.name + ": expected " + std::to_string(params.proj_weight.size()) +
                          " levels, got " + std::to_string(fused.size()));
    }
    std::vector<Var> parts;
    std::size_t s = 0;
    for (const auto& [level, map] : fused) {
        if (map.grid != params.to_quarter->from()) throw ConfigError("head " + spec.name + ": fused grid mismatch");
        Var x = ag::linear(map.tokens, params.proj_weight[s], params.proj_bias[s]);
        parts.push_back(params.to_quarter->is_identity() ? x : ag::resample(x, params.to_quarter));
        ++s;
    }
    Var x = ag::conv3x3(ag::concat_cols(parts), params.to_quarter->to(), params.conv_weight, params.conv_bias);
    x = ag::linear(ag::gelu(x), params.out_weight, params.out_bias);
    return params.to_labels->is_identity() ? x : ag::resample(x, params.to_labels);
}

BinaryBalance saliency_balance(const std::vector<const TaskLabel*>& batch) {
    double pos = 0.0, total = 0.0;
    for (const TaskLabel* l : batch) {
        for (int i = 0; i < l->num_pixels(); ++i) {
            if (!l->valid.empty() && !l->valid[i]) continue;
            pos += l->values.data[i] > 0.5 ? 1.0 : 0.0;
            total += 1.0;
        }
    }
    if (total == 0.0) return {};
    return {1.0 - pos / total, pos / total};
}

Var task_loss(const Var& pred, const TaskLabel& gt, const TaskSpec& spec, const BinaryBalance* balance) {
    const int n = gt.num_pixels();
    if (pred.rows() != n || pred.cols() != spec.output_channels()) {
        throw ConfigError("task_loss " + spec.name + ": prediction " + pred.value().shape_str() + " for " +
                          std::to_string(n) + " pixels");
    }
    switch (spec.kind) {
        case TaskKind::Semseg:
        case TaskKind::Parsing:
            if (static_cast<int>(gt.classes.size()) != n) throw ConfigError("task_loss " + spec.name + ": missing classes");
            return ag::softmax_cross_entropy(pred, gt.classes, kIgnoreLabel);
        case TaskKind::Saliency:
        case TaskKind::Boundary: {
            if (gt.values.rows != n || gt.values.cols != 1) throw ConfigError("task_loss " + spec.name + ": bad target");
            BinaryBalance w{0.95, 0.05};
            if (spec.kind == TaskKind::Saliency) w = balance ? *balance : saliency_balance({&gt});
            std::vector<double> weights(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) weights[i] = gt.values.data[i] > 0.5 ? w.positive : w.negative;
            std::vector<char> valid = gt.valid.empty() ? std::vector<char>(static_cast<std::size_t>(n), 1) : gt.valid;
            return ag::weighted_bce_with_logits(pred, gt.values.data, weights, valid);
        }
        case TaskKind::Normal:
        case TaskKind::Depth: {
            if (gt.values.rows != n || gt.values.cols != pred.cols()) throw ConfigError("task_loss " + spec.name + ": bad target");
            std::vector<char> valid(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) {
                if (spec.kind == TaskKind::Depth) {
                    valid[i] = gt.values.data[i] > 0.0;
                } else {
                    double sq = 0.0;
                    for (double v : gt.values.row(i)) sq += v * v;
                    valid[i] = sq > 0.0;
                }
            }
            return ag::masked_l1(pred, gt.values, valid);
        }
    }
    throw ConfigError("task_loss: unknown task kind");
}

}  // namespace mtd
