// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Student body: patch embedding, the shared transformer stem, one residual
// adapter path per teacher, level selection and teacher-alignment layers.

#pragma once

#include "mtd/autograd.hpp"
#include "mtd/image.hpp"
#include "mtd/params.hpp"
#include "mtd/task_spec.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace mtd {

enum class TeacherSource { Synthetic, File };

/// Shape of one teacher's per-level token maps.
struct TeacherSpec {
    std::string teacher_id;
    int channel_dim = 0;
    Grid grid{};
    TeacherSource kind = TeacherSource::Synthetic;

    void validate() const;
};

/// How routed experts are fused before the task heads.
enum class FusionMode { Mixture, Addition };

struct ModelConfig {
    int image_size = 32;
    int patch_size = 8;
    int depth = 4;
    int embed_dim = 32;
    int num_heads = 4;
    int mlp_ratio = 4;
    int adapter_reduction = 4;
    int router_hidden = 0;   // 0 selects embed_dim / 4
    int head_channels = 16;
    bool use_adapters = true;
    FusionMode fusion = FusionMode::Mixture;
    std::vector<TeacherSpec> teachers;
    std::vector<TaskSpec> tasks;
    std::uint64_t seed = 0;

    int num_teachers() const { return static_cast<int>(teachers.size()); }
    Grid grid() const { return {image_size / patch_size, image_size / patch_size}; }
    int num_tokens() const { return grid().count(); }
    int adapter_dim() const { return embed_dim / adapter_reduction; }
    int router_width() const { return router_hidden > 0 ? router_hidden : std::max(1, embed_dim / 4); }
    /// Number of routed experts: the stem plus one per adapter path.
    int num_experts() const { return use_adapters ? num_teachers() + 1 : 1; }

    /// Throws ConfigError on any violated invariant.
    void validate(bool require_teachers = true) const;
};

/// Patch tokens of one level (no class token) with their spatial grid.
struct TokenMap {
    Var tokens;  // [grid.count(), channels]
    Grid grid{};
    int level = 0;

    int num_tokens() const { return tokens.rows(); }
    int channels() const { return tokens.cols(); }
    const Tensor& values() const { return tokens.value(); }
    void validate() const;
};

/// Token maps keyed by block index; keys are the selected levels.
using MultiLevelFeatures = std::map<int, TokenMap>;

struct AdapterParams {
    Var w_down;  // [d, r]
    Var w_up;    // [r, d]
    Var alpha;   // [1, 1]
};

struct PatchEmbedParams {
    Var weight;  // [3 * p * p, d]
    Var bias;    // [1, d]
    Var pos;     // [n, d]
};

struct BlockParams {
    Var ln1_gamma, ln1_beta;
    Var qkv_weight, qkv_bias;    // [d, 3d]
    Var proj_weight, proj_bias;  // [d, d]
    Var ln2_gamma, ln2_beta;
    Var fc1_weight, fc1_bias;    // [d, mlp_ratio * d]
    Var fc2_weight, fc2_bias;    // [mlp_ratio * d, d]
};

struct StemParams {
    Var cls;      // [1, d]
    Var cls_pos;  // [1, d]
    std::vector<BlockParams> blocks;
    int num_heads = 1;
};

/// Spatial resampler to the teacher grid plus an optional channel map, used
/// only by the distillation loss.
struct AlignParams {
    std::shared_ptr<const Resampler> resampler;
    Var channel_map;  // [d, teacher channels]; undefined when they match
};

/// {L/4, L/2, 3L/4, L}. Throws ConfigError unless depth is a positive
/// multiple of 4.
std::vector<int> select_levels(int depth);

TokenMap patch_embed(const Image& image, const PatchEmbedParams& params, const ModelConfig& config);

/// Pre-norm transformer block over the full sequence (class token included).
Var block_forward(const Var& x, const BlockParams& params, int num_heads);

/// Runs the stem on [cls; Z_0] and returns the patch tokens of Z_1..Z_L.
/// A non-finite block output raises NumericError carrying the level.
std::vector<TokenMap> stem_forward(const TokenMap& z0, const StemParams& params);

/// alpha * GELU(R_in W_down) W_up + R_in
TokenMap adapter_apply(const TokenMap& input, const AdapterParams& params);

/// R_0 = a_0(Z_0), R_l = a_l(R_{l-1} + Z_l). `levels` is [Z_0 .. Z_L].
std::vector<TokenMap> tsap_forward(const std::vector<TokenMap>& levels, const std::vector<AdapterParams>& adapters);

/// Bilinear resize to the teacher grid, then the channel map if present.
TokenMap align_to_teacher(const TokenMap& rep, const TeacherSpec& spec, const AlignParams& params);

/// Builds AlignParams for one teacher (channel map registered in `store`
/// only when channel counts differ).
AlignParams make_align_params(const ModelConfig& config, const TeacherSpec& spec, const std::string& name,
                              ParamStore& store, Rng& rng);

/// Stem, adapter paths and alignment layers with their parameters.
class Backbone {
public:
    Backbone(const ModelConfig& config, ParamStore& store, Rng& init_rng);

    struct Output {
        std::vector<TokenMap> stem;                // Z_0 .. Z_L
        std::vector<std::vector<TokenMap>> paths;  // per teacher, R_0 .. R_L
    };

    Output forward(const Image& image) const;

    const ModelConfig& config() const { return config_; }
    const std::vector<int>& levels() const { return levels_; }
    const PatchEmbedParams& embed() const { return embed_; }
    const StemParams& stem() const { return stem_; }
    StemParams& stem() { return stem_; }
    const std::vector<std::vector<AdapterParams>>& paths() const { return paths_; }
    std::vector<std::vector<AdapterParams>>& paths() { return paths_; }
    /// Alignment for teacher i at selected-level slot s (0..3).
    const AlignParams& aligner(int teacher, int slot) const { return aligners_[teacher][slot]; }

private:
    ModelConfig config_;
    std::vector<int> levels_;
    PatchEmbedParams embed_;
    StemParams stem_;
    std::vector<std::vector<AdapterParams>> paths_;
    std::vector<std::vector<AlignParams>> aligners_;
};

struct ParamReport {
    std::size_t tas_params = 0;
    std::vector<std::size_t> per_tsap_params;
    double ratio = 0.0;          // per-path parameters / stem parameters
    bool within_budget = true;   // ratio < 0.05
};

/// Exact parameter counts of the stem (patch embedding, class token,
/// positions, blocks) and of each adapter path.
ParamReport count_params(const Backbone& backbone);

/// Closed-form count for a config, without allocating a model.
ParamReport count_params(const ModelConfig& config);

}  // namespace mtd
