// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/mor_router.hpp"

#include "mtd/errors.hpp"

#include <cmath>
#include <ostream>
#include <random>

namespace mtd {

Var TwoLayerMlp::forward(const Var& x) const {
    return ag::linear(ag::gelu(ag::linear(x, w1, b1)), w2, b2);
}

RouterParams make_router_params(int embed_dim, int hidden, int num_experts, const std::string& name,
                                ParamStore& store, Rng& rng) {
    if (hidden < 1 || num_experts < 1) throw ConfigError("router " + name + ": hidden and experts must be >= 1");
    auto mlp = [&](const std::string& p) {
        TwoLayerMlp m;
        m.w1 = store.add(p + ".fc1.weight", ParamGroup::Router, init::xavier(embed_dim, hidden, rng));
        m.b1 = store.add(p + ".fc1.bias", ParamGroup::Router, Tensor(1, hidden));
        m.w2 = store.add(p + ".fc2.weight", ParamGroup::Router, Tensor(hidden, num_experts));
        m.b2 = store.add(p + ".fc2.bias", ParamGroup::Router, Tensor(1, num_experts));
        return m;
    };
    RouterParams r;
    r.score = mlp(name + ".score");
    r.noise = mlp(name + ".noise");
    return r;
}

GateScores router_forward(const TokenMap& z, const RouterParams& params, bool noise_on, Rng* rng) {
    const int k = params.num_experts();
    GateScores g;
    g.clean_logits = ag::mean_rows(params.score.forward(z.tokens));
    g.noise_logits = ag::mean_rows(params.noise.forward(z.tokens));
    Var logits = g.clean_logits;
    if (noise_on) {
        if (!rng) throw ConfigError("router_forward: noise requested without a noise stream");
        std::normal_distribution<double> normal(0.0, 1.0);
        g.draws.resize(static_cast<std::size_t>(k));
        for (double& v : g.draws) v = normal(*rng);
        Var draws = Var::constant(Tensor(1, k, g.draws));
        logits = ag::add(logits, ag::mul(draws, ag::softplus(g.noise_logits)));
    }
    if (!logits.value().all_finite()) {
        throw NumericError("router_forward: non-finite gate logits at level " + std::to_string(z.level), z.level);
    }
    g.weights = ag::softmax_rows(logits);
    return g;
}

TokenMap mix_representations(const GateScores& gates, const std::vector<TokenMap>& experts) {
    if (experts.empty() || static_cast<int>(experts.size()) != gates.size()) {
        throw ConfigError("mix_representations: " + std::to_string(experts.size()) + " experts for " +
                          std::to_string(gates.size()) + " gates");
    }
    std::vector<Var> vars;
    vars.reserve(experts.size());
    for (const auto& e : experts) {
        if (e.grid != experts.front().grid) throw ConfigError("mix_representations: expert grids differ");
        vars.push_back(e.tokens);
    }
    return TokenMap{ag::weighted_sum(gates.weights, vars), experts.front().grid, experts.front().level};
}

TokenMap add_representations(const std::vector<TokenMap>& experts) {
    if (experts.empty()) throw ConfigError("add_representations: no experts");
    std::vector<Var> vars;
    for (const auto& e : experts) {
        require_same_shape(e.values(), experts.front().values(), "add_representations");
        vars.push_back(e.tokens);
    }
    return TokenMap{ag::add_n(vars), experts.front().grid, experts.front().level};
}

void GateReport::add(const std::string& task, int level, const std::vector<double>& gates) {
    for (auto& a : acc_) {
        if (a.task == task && a.level == level) {
            if (a.sum.size() != gates.size()) throw ConfigError("gate report: expert count changed for " + task);
            for (std::size_t i = 0; i < gates.size(); ++i) a.sum[i] += gates[i];
            ++a.count;
            return;
        }
    }
    acc_.push_back({task, level, gates, 1});
}

std::vector<GateReport::Row> GateReport::rows() const {
    std::vector<Row> out;
    for (const auto& a : acc_) {
        Row r{a.task, a.level, a.sum};
        for (double& v : r.mean) v /= static_cast<double>(a.count);
        out.push_back(std::move(r));
    }
    return out;
}

double GateReport::mean_weight(const std::string& task, int level, int expert) const {
    for (const auto& r : rows())
        if (r.task == task && r.level == level && expert >= 0 && expert < static_cast<int>(r.mean.size()))
            return r.mean[static_cast<std::size_t>(expert)];
    throw ConfigError("gate report has no entry for " + task + " level " + std::to_string(level));
}

void GateReport::write_csv(std::ostream& out) const {
    out << "task,level,expert_id,mean_weight\n";
    const auto precision = out.precision(17);
    for (const auto& r : rows())
        for (std::size_t k = 0; k < r.mean.size(); ++k) out << r.task << ',' << r.level << ',' << k << ',' << r.mean[k] << '\n';
    out.precision(precision);
}

}  // namespace mtd
