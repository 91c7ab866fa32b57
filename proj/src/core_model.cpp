// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/core_model.hpp"

#include "mtd/errors.hpp"

#include <cmath>
#include <string>

namespace mtd {

Tensor extract_patches(const Image& image, int patch_h, int patch_w) {
    if (patch_h < 1 || patch_w < 1 || image.height % patch_h != 0 || image.width % patch_w != 0) {
        throw ConfigError("extract_patches: image " + std::to_string(image.height) + "x" +
                          std::to_string(image.width) + " not divisible into " + std::to_string(patch_h) + "x" +
                          std::to_string(patch_w) + " patches");
    }
    const int gh = image.height / patch_h;
    const int gw = image.width / patch_w;
    Tensor out(gh * gw, image.channels * patch_h * patch_w);
    for (int py = 0; py < gh; ++py)
        for (int px = 0; px < gw; ++px) {
            double* dst = out.row(py * gw + px).data();
            int k = 0;
            for (int c = 0; c < image.channels; ++c)
                for (int y = 0; y < patch_h; ++y)
                    for (int x = 0; x < patch_w; ++x) dst[k++] = image.at(c, py * patch_h + y, px * patch_w + x);
        }
    return out;
}

void TeacherSpec::validate() const {
    if (channel_dim < 1) throw ConfigError("teacher " + teacher_id + ": channel_dim must be >= 1");
    if (grid.h < 1 || grid.w < 1) throw ConfigError("teacher " + teacher_id + ": grid dims must be >= 1");
}

void ModelConfig::validate(bool require_teachers) const {
    if (depth < 4 || depth % 4 != 0) {
        throw ConfigError("depth " + std::to_string(depth) + " must be a positive multiple of 4");
    }
    if (patch_size < 1 || image_size < 1 || image_size % patch_size != 0) {
        throw ConfigError("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                          std::to_string(patch_size));
    }
    if (embed_dim < 1 || num_heads < 1 || embed_dim % num_heads != 0) {
        throw ConfigError("embed_dim must be a positive multiple of num_heads");
    }
    if (adapter_reduction < 1 || embed_dim % adapter_reduction != 0) {
        throw ConfigError("adapter_reduction " + std::to_string(adapter_reduction) + " must divide embed_dim " +
                          std::to_string(embed_dim));
    }
    if (mlp_ratio < 1 || head_channels < 1) throw ConfigError("mlp_ratio and head_channels must be >= 1");
    if (require_teachers && teachers.empty()) throw ConfigError("at least one teacher is required");
    for (const auto& t : teachers) t.validate();
    for (const auto& t : tasks) t.validate();
}

void TokenMap::validate() const {
    if (!tokens.defined()) throw ConfigError("token map without tokens");
    if (grid.count() != tokens.rows()) {
        throw ConfigError("token map: " + std::to_string(tokens.rows()) + " tokens for grid " +
                          std::to_string(grid.h) + "x" + std::to_string(grid.w));
    }
    if (!tokens.value().all_finite()) throw NumericError("token map at level " + std::to_string(level) + " is not finite", level);
}

std::vector<int> select_levels(int depth) {
    if (depth < 4 || depth % 4 != 0) {
        throw ConfigError("cannot select levels: depth " + std::to_string(depth) + " is not a multiple of 4");
    }
    return {depth / 4, depth / 2, 3 * depth / 4, depth};
}

TokenMap patch_embed(const Image& image, const PatchEmbedParams& params, const ModelConfig& config) {
    if (image.channels != 3 || image.height != config.image_size || image.width != config.image_size) {
        throw ConfigError("patch_embed: expected 3x" + std::to_string(config.image_size) + "x" +
                          std::to_string(config.image_size) + " image, got " + std::to_string(image.channels) +
                          "x" + std::to_string(image.height) + "x" + std::to_string(image.width));
    }
    Var patches = Var::constant(extract_patches(image, config.patch_size, config.patch_size));
    Var tokens = ag::add(ag::linear(patches, params.weight, params.bias), params.pos);
    return TokenMap{tokens, config.grid(), 0};
}

Var block_forward(const Var& x, const BlockParams& p, int num_heads) {
    const int d = x.cols();
    const int head_dim = d / num_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    Var h = ag::layer_norm(x, p.ln1_gamma, p.ln1_beta);
    Var qkv = ag::linear(h, p.qkv_weight, p.qkv_bias);
    std::vector<Var> heads;
    heads.reserve(static_cast<std::size_t>(num_heads));
    for (int i = 0; i < num_heads; ++i) {
        Var q = ag::slice_cols(qkv, i * head_dim, head_dim);
        Var k = ag::slice_cols(qkv, d + i * head_dim, head_dim);
        Var v = ag::slice_cols(qkv, 2 * d + i * head_dim, head_dim);
        Var attn = ag::softmax_rows(ag::scale(ag::matmul(q, ag::transpose(k)), scale));
        heads.push_back(ag::matmul(attn, v));
    }
    Var attn_out = ag::linear(num_heads == 1 ? heads.front() : ag::concat_cols(heads), p.proj_weight, p.proj_bias);
    Var x1 = ag::add(x, attn_out);

    Var m = ag::layer_norm(x1, p.ln2_gamma, p.ln2_beta);
    m = ag::linear(ag::gelu(ag::linear(m, p.fc1_weight, p.fc1_bias)), p.fc2_weight, p.fc2_bias);
    return ag::add(x1, m);
}

std::vector<TokenMap> stem_forward(const TokenMap& z0, const StemParams& params) {
    z0.validate();
    const int n = z0.num_tokens();
    Var seq = ag::concat_rows({ag::add(params.cls, params.cls_pos), z0.tokens});
    std::vector<TokenMap> out;
    out.reserve(params.blocks.size());
    for (std::size_t l = 0; l < params.blocks.size(); ++l) {
        seq = block_forward(seq, params.blocks[l], params.num_heads);
        const int level = static_cast<int>(l) + 1;
        if (!seq.value().all_finite()) {
            throw NumericError("stem_forward: non-finite activation at level " + std::to_string(level), level);
        }
        out.push_back(TokenMap{ag::slice_rows(seq, 1, n), z0.grid, level});
    }
    return out;
}

TokenMap adapter_apply(const TokenMap& input, const AdapterParams& params) {
    const int d = input.channels();
    if (params.w_down.rows() != d || params.w_up.cols() != d || params.w_down.cols() != params.w_up.rows()) {
        throw ConfigError("adapter_apply: adapter " + params.w_down.value().shape_str() + "/" +
                          params.w_up.value().shape_str() + " does not fit " + std::to_string(d) + " channels");
    }
    Var branch = ag::matmul(ag::gelu(ag::matmul(input.tokens, params.w_down)), params.w_up);
    return TokenMap{ag::add(input.tokens, ag::scale_by(branch, params.alpha)), input.grid, input.level};
}

std::vector<TokenMap> tsap_forward(const std::vector<TokenMap>& levels, const std::vector<AdapterParams>& adapters) {
    if (levels.empty()) throw ConfigError("tsap_forward: no levels");
    if (adapters.size() != levels.size()) {
        throw ConfigError("tsap_forward: " + std::to_string(adapters.size()) + " adapters for " +
                          std::to_string(levels.size() - 1) + " blocks (need L+1)");
    }
    std::vector<TokenMap> out;
    out.reserve(levels.size());
    out.push_back(adapter_apply(levels[0], adapters[0]));
    for (std::size_t l = 1; l < levels.size(); ++l) {
        TokenMap sum{ag::add(out.back().tokens, levels[l].tokens), levels[l].grid, levels[l].level};
        out.push_back(adapter_apply(sum, adapters[l]));
    }
    return out;
}

TokenMap align_to_teacher(const TokenMap& rep, const TeacherSpec& spec, const AlignParams& params) {
    if (!params.resampler || params.resampler->from() != rep.grid || params.resampler->to() != spec.grid) {
        throw ConfigError("align_to_teacher: resampler does not map the student grid to teacher " + spec.teacher_id);
    }
    Var x = params.resampler->is_identity() ? rep.tokens : ag::resample(rep.tokens, params.resampler);
    if (params.channel_map.defined()) {
        if (params.channel_map.rows() != rep.channels() || params.channel_map.cols() != spec.channel_dim) {
            throw ConfigError("align_to_teacher: channel map shape " + params.channel_map.value().shape_str());
        }
        x = ag::matmul(x, params.channel_map);
    } else if (rep.channels() != spec.channel_dim) {
        throw ConfigError("align_to_teacher: teacher " + spec.teacher_id + " has " +
                          std::to_string(spec.channel_dim) + " channels but no channel map is present");
    }
    return TokenMap{x, spec.grid, rep.level};
}

AlignParams make_align_params(const ModelConfig& config, const TeacherSpec& spec, const std::string& name,
                              ParamStore& store, Rng& rng) {
    AlignParams a;
    a.resampler = std::make_shared<const Resampler>(config.grid(), spec.grid);
    if (spec.channel_dim != config.embed_dim) {
        a.channel_map = store.add(name + ".channel_map", ParamGroup::Align,
                                  init::xavier(config.embed_dim, spec.channel_dim, rng));
    }
    return a;
}

Backbone::Backbone(const ModelConfig& config, ParamStore& store, Rng& rng)
    : config_(config), levels_(select_levels(config.depth)) {
    config_.validate(/*require_teachers=*/false);
    const int d = config.embed_dim;
    const int n = config.num_tokens();
    const int patch_dim = 3 * config.patch_size * config.patch_size;
    const int hidden = config.mlp_ratio * d;

    embed_.weight = store.add("embed.weight", ParamGroup::Stem, init::xavier(patch_dim, d, rng));
    embed_.bias = store.add("embed.bias", ParamGroup::Stem, Tensor(1, d));
    embed_.pos = store.add("embed.pos", ParamGroup::Stem, init::normal(n, d, 0.02, rng));

    stem_.num_heads = config.num_heads;
    stem_.cls = store.add("stem.cls", ParamGroup::Stem, init::normal(1, d, 0.02, rng));
    stem_.cls_pos = store.add("stem.cls_pos", ParamGroup::Stem, init::normal(1, d, 0.02, rng));
    for (int l = 0; l < config.depth; ++l) {
        const std::string p = "stem.blocks." + std::to_string(l) + ".";
        BlockParams b;
        b.ln1_gamma = store.add(p + "ln1.gamma", ParamGroup::Stem, Tensor(1, d, 1.0));
        b.ln1_beta = store.add(p + "ln1.beta", ParamGroup::Stem, Tensor(1, d));
        b.qkv_weight = store.add(p + "attn.qkv.weight", ParamGroup::Stem, init::xavier(d, 3 * d, rng));
        b.qkv_bias = store.add(p + "attn.qkv.bias", ParamGroup::Stem, Tensor(1, 3 * d));
        b.proj_weight = store.add(p + "attn.proj.weight", ParamGroup::Stem, init::xavier(d, d, rng));
        b.proj_bias = store.add(p + "attn.proj.bias", ParamGroup::Stem, Tensor(1, d));
        b.ln2_gamma = store.add(p + "ln2.gamma", ParamGroup::Stem, Tensor(1, d, 1.0));
        b.ln2_beta = store.add(p + "ln2.beta", ParamGroup::Stem, Tensor(1, d));
        b.fc1_weight = store.add(p + "mlp.fc1.weight", ParamGroup::Stem, init::xavier(d, hidden, rng));
        b.fc1_bias = store.add(p + "mlp.fc1.bias", ParamGroup::Stem, Tensor(1, hidden));
        b.fc2_weight = store.add(p + "mlp.fc2.weight", ParamGroup::Stem, init::xavier(hidden, d, rng));
        b.fc2_bias = store.add(p + "mlp.fc2.bias", ParamGroup::Stem, Tensor(1, d));
        stem_.blocks.push_back(std::move(b));
    }

    const int r = config.adapter_dim();
    if (config.use_adapters) {
        for (int i = 0; i < config.num_teachers(); ++i) {
            std::vector<AdapterParams> path;
            for (int l = 0; l <= config.depth; ++l) {
                const std::string p = "paths." + std::to_string(i) + "." + std::to_string(l) + ".";
                AdapterParams a;
                a.w_down = store.add(p + "w_down", ParamGroup::Adapter, init::normal(d, r, 0.02, rng));
                a.w_up = store.add(p + "w_up", ParamGroup::Adapter, Tensor(r, d));
                a.alpha = store.add(p + "alpha", ParamGroup::Adapter, Tensor(1, 1, 1.0));
                path.push_back(std::move(a));
            }
            paths_.push_back(std::move(path));
        }
    }

    for (int i = 0; i < config.num_teachers(); ++i) {
        std::vector<AlignParams> per_level;
        for (std::size_t s = 0; s < levels_.size(); ++s) {
            per_level.push_back(make_align_params(config, config.teachers[i],
                                                  "align." + std::to_string(i) + "." + std::to_string(levels_[s]),
                                                  store, rng));
        }
        aligners_.push_back(std::move(per_level));
    }
}

Backbone::Output Backbone::forward(const Image& image) const {
    Output out;
    TokenMap z0 = patch_embed(image, embed_, config_);
    out.stem.push_back(z0);
    for (auto& z : stem_forward(z0, stem_)) out.stem.push_back(std::move(z));
    for (const auto& path : paths_) out.paths.push_back(tsap_forward(out.stem, path));
    return out;
}

namespace {

std::size_t stem_count(const ModelConfig& c) {
    const std::size_t d = static_cast<std::size_t>(c.embed_dim);
    const std::size_t n = static_cast<std::size_t>(c.num_tokens());
    const std::size_t patch_dim = 3 * static_cast<std::size_t>(c.patch_size) * c.patch_size;
    const std::size_t hidden = static_cast<std::size_t>(c.mlp_ratio) * d;
    const std::size_t embed = patch_dim * d + d + n * d;
    const std::size_t cls = 2 * d;
    const std::size_t block = 4 * d               // two layer norms
                              + d * 3 * d + 3 * d  // qkv
                              + d * d + d          // proj
                              + d * hidden + hidden + hidden * d + d;
    return embed + cls + static_cast<std::size_t>(c.depth) * block;
}

std::size_t path_count(const ModelConfig& c) {
    const std::size_t d = static_cast<std::size_t>(c.embed_dim);
    const std::size_t r = static_cast<std::size_t>(c.adapter_dim());
    return static_cast<std::size_t>(c.depth + 1) * (2 * d * r + 1);
}

ParamReport finish(std::size_t tas, std::vector<std::size_t> paths) {
    ParamReport rep;
    rep.tas_params = tas;
    rep.per_tsap_params = std::move(paths);
    rep.ratio = rep.per_tsap_params.empty() ? 0.0
                                            : static_cast<double>(rep.per_tsap_params.front()) / static_cast<double>(tas);
    rep.within_budget = rep.ratio < 0.05;
    return rep;
}

}  // namespace

ParamReport count_params(const Backbone& backbone) {
    std::size_t tas = backbone.embed().weight.value().size() + backbone.embed().bias.value().size() +
                      backbone.embed().pos.value().size() + backbone.stem().cls.value().size() +
                      backbone.stem().cls_pos.value().size();
    for (const auto& b : backbone.stem().blocks) {
        for (const Var* v : {&b.ln1_gamma, &b.ln1_beta, &b.qkv_weight, &b.qkv_bias, &b.proj_weight, &b.proj_bias,
                             &b.ln2_gamma, &b.ln2_beta, &b.fc1_weight, &b.fc1_bias, &b.fc2_weight, &b.fc2_bias}) {
            tas += v->value().size();
        }
    }
    std::vector<std::size_t> paths;
    for (const auto& path : backbone.paths()) {
        std::size_t n = 0;
        for (const auto& a : path) n += a.w_down.value().size() + a.w_up.value().size() + a.alpha.value().size();
        paths.push_back(n);
    }
    return finish(tas, std::move(paths));
}

ParamReport count_params(const ModelConfig& config) {
    config.validate(/*require_teachers=*/false);
    std::vector<std::size_t> paths;
    if (config.use_adapters) paths.assign(static_cast<std::size_t>(config.num_teachers()), path_count(config));
    return finish(stem_count(config), std::move(paths));
}

}  // namespace mtd
