// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/student.hpp"

namespace mtd {

Student::Student(const ModelConfig& config, Rng& init_rng) : backbone_(config, store_, init_rng) {
    const std::uint64_t router_seed = init_rng();
    const std::uint64_t head_seed = init_rng();
    const ModelConfig& c = backbone_.config();
    if (c.fusion == FusionMode::Mixture && c.num_experts() > 1) {
        Rng rng(router_seed);
        for (const auto& t : c.tasks) {
            auto& per_level = routers_[t.name];
            for (int l : backbone_.levels()) {
                per_level.push_back(make_router_params(c.embed_dim, c.router_width(), c.num_experts(),
                                                       "routers." + t.name + "." + std::to_string(l), store_, rng));
            }
        }
    }
    Rng rng(head_seed);
    for (const auto& t : c.tasks) heads_.emplace(t.name, make_head_params(c, t, "heads." + t.name, store_, rng));
}

std::vector<TokenMap> Student::experts(const Backbone::Output& body, int level) const {
    std::vector<TokenMap> out{body.stem[level]};
    for (const auto& path : body.paths) out.push_back(path[level]);
    return out;
}

Student::Output Student::forward(const Image& image, bool with_heads, bool noise_on, Rng* noise) const {
    Output out;
    out.body = backbone_.forward(image);
    const ModelConfig& c = backbone_.config();
    const auto& levels = backbone_.levels();
    for (int i = 0; i < c.num_teachers(); ++i) {
        MultiLevelFeatures f;
        for (std::size_t s = 0; s < levels.size(); ++s) {
            const int l = levels[s];
            const TokenMap& src = c.use_adapters ? out.body.paths[i][l] : out.body.stem[l];
            f[l] = align_to_teacher(src, c.teachers[i], backbone_.aligner(i, static_cast<int>(s)));
        }
        out.distill.push_back(std::move(f));
    }
    if (!with_heads) return out;

    for (const auto& t : c.tasks) {
        MultiLevelFeatures fused;
        for (std::size_t s = 0; s < levels.size(); ++s) {
            const int l = levels[s];
            std::vector<TokenMap> ex = experts(out.body, l);
            if (ex.size() == 1) {
                fused[l] = ex[0];
            } else if (c.fusion == FusionMode::Addition) {
                fused[l] = add_representations(ex);
            } else {
                GateScores g = router_forward(out.body.stem[l], routers_.at(t.name)[s], noise_on, noise);
                fused[l] = mix_representations(g, ex);
                out.gates[t.name].emplace(l, std::move(g));
            }
        }
        out.predictions.emplace(t.name, head_forward(fused, t, heads_.at(t.name)));
    }
    return out;
}

}  // namespace mtd
