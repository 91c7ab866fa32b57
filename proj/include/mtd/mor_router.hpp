// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Global gating over the stem and adapter-path representations, one router
// per (task, level).

#pragma once

#include "mtd/core_model.hpp"
#include "mtd/params.hpp"
#include "mtd/rng.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mtd {

/// Two-layer token MLP: GELU(x W1 + b1) W2 + b2.
struct TwoLayerMlp {
    Var w1, b1, w2, b2;

    Var forward(const Var& x) const;
};

struct RouterParams {
    TwoLayerMlp score;  // d -> hidden -> experts
    TwoLayerMlp noise;  // d -> hidden -> experts

    int num_experts() const { return score.w2.cols(); }
};

/// Registers both MLPs under `name`; final layers start at zero so the
/// initial gates are uniform.
RouterParams make_router_params(int embed_dim, int hidden, int num_experts, const std::string& name,
                                ParamStore& store, Rng& rng);

struct GateScores {
    Var weights;                // [1, experts]
    Var clean_logits;           // h, patch-averaged
    Var noise_logits;           // e, patch-averaged
    std::vector<double> draws;  // z, empty when noise was off

    const std::vector<double>& values() const { return weights.value().data; }
    int size() const { return weights.cols(); }
};

/// softmax(h + z * softplus(e)) with h, e averaged over patches. `rng` is
/// consulted only when `noise_on`, one standard-normal draw per expert.
GateScores router_forward(const TokenMap& z, const RouterParams& params, bool noise_on, Rng* rng);

/// sum_k gates[k] * experts[k]; expert 0 is the stem representation.
TokenMap mix_representations(const GateScores& gates, const std::vector<TokenMap>& experts);

/// Unweighted sum of experts, used by the addition-fusion ablation.
TokenMap add_representations(const std::vector<TokenMap>& experts);

/// Running mean of gate vectors per (task, level).
class GateReport {
public:
    struct Row {
        std::string task;
        int level = 0;
        std::vector<double> mean;
    };

    void add(const std::string& task, int level, const std::vector<double>& gates);
    std::vector<Row> rows() const;
    /// Mean weight for one entry; throws ConfigError when absent.
    double mean_weight(const std::string& task, int level, int expert) const;

    /// Columns: task, level, expert_id, mean_weight.
    void write_csv(std::ostream& out) const;

private:
    struct Acc {
        std::string task;
        int level;
        std::vector<double> sum;
        long count = 0;
    };
    std::vector<Acc> acc_;
};

}  // namespace mtd
