// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance runner. Prints one PASS/FAIL line per criterion, preceded by
// indented detail lines.

#include "mtd/checkpoint.hpp"
#include "mtd/errors.hpp"
#include "mtd/report.hpp"
#include "mtd/training.hpp"
#include "support/grad_check.hpp"
#include "support/tiny_run.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#ifndef MTD_SOURCE_DIR
#define MTD_SOURCE_DIR "."
#endif

namespace fs = std::filesystem;
using namespace mtd;
using mtd::testing::check_gradients;
using mtd::testing::NamedVar;
using mtd::testing::probe_tensor;

namespace {

fs::path g_root = MTD_SOURCE_DIR;

class Verdict {
public:
    void require(bool ok, const std::string& what) {
        pass_ = pass_ && ok;
        note(std::string(ok ? "ok    " : "FAILED") + "  " + what);
    }
    void note(const std::string& line) { std::cout << "    " << line << '\n' << std::flush; }
    bool pass() const { return pass_; }

private:
    bool pass_ = true;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. Multi-task gain from the published per-task tables.

void criterion1(Verdict& v) {
    struct Row {
        const char* multi;
        const char* single;
        double expected;
    };
    const Row rows[] = {
        {"pascal_mtl_baseline", "pascal_single", -2.97}, {"pascal_invpt", "pascal_single", -2.81},
        {"pascal_mlore", "pascal_single", 0.16},         {"pascal_distilled", "pascal_single", 2.30},
        {"nyud_mtl_baseline", "nyud_single", -0.76},     {"nyud_distilled", "nyud_single", 14.05},
    };
    for (const auto& r : rows) {
        std::ifstream multi(g_root / "data/tables" / (std::string(r.multi) + ".csv"));
        std::ifstream single(g_root / "data/tables" / (std::string(r.single) + ".csv"));
        if (!multi || !single) {
            v.require(false, std::string("missing table for ") + r.multi);
            continue;
        }
        const double dm = report_from_csv(multi, single).delta_m;
        v.require(std::abs(dm - r.expected) <= 0.02,
                  std::string(r.multi) + fmt(": delta_m %.4f, published %.2f", dm, r.expected));
    }
}

// ---------------------------------------------------------------------------
// 2. Finite-difference checks of every differentiable piece.

RunConfig gradient_config(FusionMode fusion) {
    RunConfig c = testing::tiny_run(17);
    c.model.fusion = fusion;
    c.dataset.tasks = {{TaskSpec::make("seg", TaskKind::Semseg, 3), "low"},
                       {TaskSpec::make("parts", TaskKind::Parsing, 3), "low"},
                       {TaskSpec::make("sal", TaskKind::Saliency), "high"},
                       {TaskSpec::make("edge", TaskKind::Boundary), "high"},
                       {TaskSpec::make("normal", TaskKind::Normal), "low"},
                       {TaskSpec::make("depth", TaskKind::Depth), "low"}};
    c.dataset.num_train = 2;
    c.dataset.num_val = 1;
    c.resolve_model();
    return c;
}

/// Perturbs every parameter so that zero-initialized layers (adapter up
/// projections, router outputs) carry nonzero values and gradients.
void jitter(ParamStore& store, unsigned seed) {
    for (auto& e : store.entries()) {
        Tensor& t = e.var.mutable_value();
        const Tensor n = probe_tensor(t.rows, t.cols, seed++, 0.2);
        for (std::size_t i = 0; i < t.size(); ++i) t.data[i] += n.data[i];
    }
}

void whole_model_check(Verdict& v, FusionMode fusion, const char* label) {
    const RunConfig c = gradient_config(fusion);
    const PreparedData d = prepare_data(c);
    auto st = make_student(c);
    jitter(st->params(), 100);
    const Sample& s = d.train.samples[0];
    const auto& feats = d.train_features[0];
    std::vector<NamedVar> params;
    for (const auto& e : st->params().entries()) params.emplace_back(e.name, e.var);
    auto loss = [&] {
        Student::Output out = st->forward(s.image, true, false, nullptr);
        std::map<std::string, Var> tl;
        for (const auto& t : c.model.tasks) tl[t.name] = task_loss(out.predictions.at(t.name), s.labels.at(t.name), t);
        return joint_loss(distill_loss(out.distill, feats, c.distill).total, tl, c.model.tasks, c.distill.gamma);
    };
    const auto res = check_gradients(params, loss, 1e-5, 6);
    v.require(res.max_rel_error <= 1e-4, std::string(label) + ": " + std::to_string(params.size()) + " tensors, " +
                                             std::to_string(res.checked) + " entries, max rel error " +
                                             fmt("%.2e", res.max_rel_error) + " (" + res.worst + ")");
}

void criterion2(Verdict& v) {
    whole_model_check(v, FusionMode::Mixture, "student with routers (noise off), heads, all task losses, distillation");
    whole_model_check(v, FusionMode::Addition, "student with addition fusion");

    // Each loss on its own, with respect to its raw input.
    const Grid g{4, 4};
    Var r = Var::parameter(probe_tensor(16, 8, 3, 1.5));
    const TokenMap t{Var::constant(probe_tensor(16, 8, 4, 1.5)), g, 1};
    auto cos = check_gradients({{"r", r}}, [&] { return cosine_loss(TokenMap{r, g, 1}, t); });
    auto hub = check_gradients({{"r", r}}, [&] { return smooth_l1_loss(TokenMap{r, g, 1}, t); });
    v.require(cos.max_rel_error <= 1e-4, "cosine term " + fmt("%.2e", cos.max_rel_error));
    v.require(hub.max_rel_error <= 1e-4, "smooth-L1 term " + fmt("%.2e", hub.max_rel_error));

    const RunConfig c = gradient_config(FusionMode::Mixture);
    const PreparedData d = prepare_data(c);
    for (const auto& spec : c.model.tasks) {
        const TaskLabel& gt = d.train.samples[0].labels.at(spec.name);
        Var p = Var::parameter(probe_tensor(gt.grid.count(), spec.output_channels(), 9, 2.0));
        auto res = check_gradients({{"pred", p}}, [&] { return task_loss(p, gt, spec); }, 1e-5, 64);
        v.require(res.max_rel_error <= 1e-4, std::string(to_string(spec.kind)) + " loss " + fmt("%.2e", res.max_rel_error));
    }
}

// ---------------------------------------------------------------------------
// 3. Structural invariants.

TokenMap random_tokens(Grid g, int d, unsigned seed, double scale = 1.0) {
    return TokenMap{Var::constant(probe_tensor(g.count(), d, seed, scale)), g, 1};
}

void criterion3(Verdict& v) {
    const RunConfig c = testing::tiny_run(21);
    auto st = make_student(c);
    const Backbone& body = st->backbone();

    bool identity = true;
    for (const auto& path : body.paths())
        for (std::size_t k = 0; k < path.size(); ++k) {
            const TokenMap in = random_tokens(c.model.grid(), c.model.embed_dim, 30 + k, 3.0);
            identity = identity && adapter_apply(in, path[k]).values() == in.values();
        }
    v.require(identity, "every initialized adapter returns its input bitwise");

    Rng rng(5);
    AdapterParams trained{Var::constant(init::normal(c.model.embed_dim, c.model.adapter_dim(), 0.7, rng)),
                          Var::constant(init::normal(c.model.adapter_dim(), c.model.embed_dim, 0.7, rng)),
                          Var::constant(Tensor(1, 1, 0.0))};
    bool alpha_zero = true;
    for (unsigned k = 0; k < 20; ++k) {
        const TokenMap in = random_tokens(c.model.grid(), c.model.embed_dim, 50 + k, 4.0);
        alpha_zero = alpha_zero && adapter_apply(in, trained).values() == in.values();
    }
    v.require(alpha_zero, "adapter with random weights and alpha = 0 returns its input bitwise");

    const int experts = 5;
    ParamStore store;
    RouterParams router = make_router_params(c.model.embed_dim, 8, experts, "r", store, rng);
    for (auto& e : store.entries()) e.var.mutable_value() = init::normal(e.var.rows(), e.var.cols(), 1.0, rng);
    double worst_sum = 0.0, min_gate = 1.0;
    Rng noise(9);
    for (unsigned k = 0; k < 200; ++k) {
        const TokenMap z = random_tokens(c.model.grid(), c.model.embed_dim, 100 + k, 1.0 + k % 7);
        for (bool on : {false, true}) {
            const GateScores gs = router_forward(z, router, on, &noise);
            double s = 0.0;
            for (double w : gs.values()) {
                s += w;
                min_gate = std::min(min_gate, w);
            }
            worst_sum = std::max(worst_sum, std::abs(s - 1.0));
        }
    }
    v.require(min_gate >= 0.0 && worst_sum <= 1e-6,
              fmt("gates over 400 draws: min %.3g, worst |sum - 1| %.2e", min_gate, worst_sum));

    double shift_err = 0.0;
    for (unsigned k = 0; k < 50; ++k) {
        const TokenMap z = random_tokens(c.model.grid(), c.model.embed_dim, 400 + k, 2.0);
        const std::vector<double> before = router_forward(z, router, false, nullptr).values();
        Tensor& b2 = router.score.b2.mutable_value();
        const Tensor saved = b2;
        for (double& x : b2.data) x += 37.5 - 11.0 * k;
        const std::vector<double> after = router_forward(z, router, false, nullptr).values();
        b2 = saved;
        for (int e = 0; e < experts; ++e) shift_err = std::max(shift_err, std::abs(before[e] - after[e]));
    }
    v.require(shift_err <= 1e-12, fmt("shared logit shift changes gates by at most %.2e", shift_err));

    bool inside = true;
    for (unsigned k = 0; k < 100; ++k) {
        std::vector<TokenMap> ex;
        for (int e = 0; e < experts; ++e) ex.push_back(random_tokens({2, 3}, 6, 600 + 10 * k + e, 5.0));
        const TokenMap z = random_tokens({2, 3}, c.model.embed_dim, 900 + k);
        ParamStore s2;
        RouterParams r2 = make_router_params(c.model.embed_dim, 4, experts, "m", s2, rng);
        for (auto& e : s2.entries()) e.var.mutable_value() = init::normal(e.var.rows(), e.var.cols(), 2.0, rng);
        const TokenMap mixed = mix_representations(router_forward(z, r2, true, &noise), ex);
        for (std::size_t i = 0; i < mixed.values().size(); ++i) {
            double lo = ex[0].values().data[i], hi = lo;
            for (const auto& e : ex) {
                lo = std::min(lo, e.values().data[i]);
                hi = std::max(hi, e.values().data[i]);
            }
            const double m = mixed.values().data[i];
            inside = inside && m >= lo - 1e-12 && m <= hi + 1e-12;
        }
    }
    v.require(inside, "mixture inside the expert-wise min/max envelope (100 random cases)");

    for (int dim : {16, 32}) {
        for (int depth : {4, 8, 12}) {
            ModelConfig m = c.model;
            m.embed_dim = dim;
            m.depth = depth;
            const ParamReport rep = count_params(m);
            v.require(rep.ratio < 0.05, "adapter path / stem parameters at d = " + std::to_string(dim) +
                                            ", L = " + std::to_string(depth) + fmt(": %.4f", rep.ratio));
        }
    }
    for (int depth : {4, 8, 12}) {
        ModelConfig m = c.model;
        m.image_size = 224;
        m.patch_size = 16;
        m.embed_dim = 768;
        m.num_heads = 12;
        m.depth = depth;
        v.note("info: d = 768, L = " + std::to_string(depth) + fmt(": ratio %.4f", count_params(m).ratio));
    }
}

// ---------------------------------------------------------------------------
// 4. Metric oracles.

void criterion4(Verdict& v) {
    int mismatches = 0;
    for (int pm = 0; pm < 256; ++pm)
        for (int gm = 0; gm < 256; ++gm) {
            std::vector<int> pred(8), gt(8);
            for (int i = 0; i < 8; ++i) {
                pred[i] = (pm >> i) & 1;
                gt[i] = (gm >> i) & 1;
            }
            double sum = 0.0;
            int present = 0;
            for (int k = 0; k < 2; ++k) {
                int inter = 0, uni = 0;
                for (int i = 0; i < 8; ++i) {
                    inter += pred[i] == k && gt[i] == k;
                    uni += pred[i] == k || gt[i] == k;
                }
                if (uni > 0) {
                    sum += static_cast<double>(inter) / uni;
                    ++present;
                }
            }
            SegmentationScore s(2);
            s.add(pred, gt);
            if (std::abs(*s.miou() - 100.0 * sum / present) > 1e-12) ++mismatches;
        }
    v.require(mismatches == 0, "mIoU vs enumeration over 65536 binary 2x4 pairs: " + std::to_string(mismatches) +
                                   " mismatches");

    const Tensor gt(3, 3, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor neg = gt;
    for (double& x : neg.data) x = -x;
    NormalError same, perp, opposite;
    same.add(gt, gt);
    perp.add(Tensor(3, 3, std::vector<double>{0, 2, 0, 0, 0, 3, 5, 0, 0}), gt);
    opposite.add(neg, gt);
    v.require(*same.mean_error() == 0.0 && *perp.mean_error() == 90.0 && *opposite.mean_error() == 180.0,
              fmt("mErr analytic cases: %.17g, %.17g, %.17g degrees", *same.mean_error(), *perp.mean_error(),
                  *opposite.mean_error()));

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int violations = 0, compared = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> probs(150), labels(150);
        for (std::size_t i = 0; i < probs.size(); ++i) {
            labels[i] = u(rng) < 0.1 + 0.005 * trial ? 1.0 : 0.0;
            probs[i] = std::clamp(0.5 * labels[i] + 0.8 * u(rng) - 0.15, 0.0, 1.0);
        }
        MaxFScore s;
        s.add(probs, labels);
        if (!s.max_f()) continue;
        for (int k = 0; k < 20; ++k) {
            const double t = u(rng);
            double tp = 0, fp = 0, pos = 0;
            for (std::size_t i = 0; i < probs.size(); ++i) {
                pos += labels[i];
                if (probs[i] >= t) (labels[i] > 0.5 ? tp : fp) += 1;
            }
            const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0, rec = tp / pos;
            const double f = prec + rec > 0 ? 100.0 * 1.3 * prec * rec / (0.3 * prec + rec) : 0.0;
            ++compared;
            violations += *s.max_f() + 1e-12 < f;
        }
    }
    v.require(violations == 0, "maxF >= F at " + std::to_string(compared) + " arbitrary thresholds: " +
                                   std::to_string(violations) + " violations");

    const Grid g{1, 1};
    const TokenMap r{Var::constant(Tensor(1, 2, std::vector<double>{0.5, 0.0})), g, 1};
    const TokenMap t{Var::constant(Tensor(1, 2, std::vector<double>{0.0, 0.5})), g, 1};
    const double pair = distill_loss({{{1, r}}}, {{{1, t}}}, DistillConfig{}).total.item();
    v.require(std::abs(pair - 0.9125) <= 1e-12, fmt("weighted distillation pair %.17g (expected 0.9125)", pair));
    std::vector<TaskSpec> specs{{"A", TaskKind::Semseg, 2, 1.0, false}, {"B", TaskKind::Boundary, 2, 50.0, false}};
    const double j1 = joint_loss(0.5, {{"A", 2.0}, {"B", 0.1}}, specs, 1.0);
    const double j0 = joint_loss(0.5, {{"A", 2.0}, {"B", 0.1}}, specs, 0.0);
    v.require(std::abs(j1 - 7.5) <= 1e-12 && std::abs(j0 - 7.0) <= 1e-12,
              fmt("joint objective examples %.17g and %.17g (expected 7.5, 7.0)", j1, j0));
}

// ---------------------------------------------------------------------------
// Constructed experiments.

RunConfig load_config(const std::string& name, std::uint64_t seed) {
    RunConfig c = load_run_config((g_root / "configs" / name).string());
    c.seed = seed;
    c.resolve_model();
    return c;
}

std::vector<std::uint64_t> g_seeds;

std::vector<std::uint64_t> seeds_or(std::vector<std::uint64_t> dflt) { return g_seeds.empty() ? dflt : g_seeds; }

void criterion5(Verdict& v) {
    for (std::uint64_t seed : seeds_or({1, 2, 3})) {
        const RunConfig base = load_config("orthogonal.json", seed);
        const RunConfig plain = ablation_config(base, "no_tsap");
        const PreparedData data = prepare_data(base);
        const double with = run_pipeline(base, data).after_stage1.rep.average;
        const double without = run_pipeline(plain, data).after_stage1.rep.average;
        v.require(with - without >= 0.05, "seed " + std::to_string(seed) +
                                              fmt(": rep_similarity with adapters %.4f, without %.4f, margin %.4f",
                                                  with, without, with - without));
    }
}

void criterion6(Verdict& v) {
    for (std::uint64_t seed : seeds_or({1, 2, 3})) {
        const RunConfig base = load_config("synergy.json", seed);
        const RunConfig added = ablation_config(base, "addition_fusion");
        const PreparedData data = prepare_data(base);
        const PipelineResult mor = run_pipeline(base, data);
        const PipelineResult sum = run_pipeline(added, data);
        const std::string tag = "seed " + std::to_string(seed) + ": ";
        v.require(mor.final.joint_loss < sum.final.joint_loss,
                  tag + fmt("joint val loss mixture %.5f vs addition %.5f", mor.final.joint_loss, sum.final.joint_loss));
        const int top = base.model.depth;
        for (const auto& [t, affinity] : base.dataset.tasks) {
            int expert = 1;
            for (int i = 0; i < base.model.num_teachers(); ++i)
                if (base.model.teachers[i].teacher_id == affinity) expert = i + 1;
            std::string gates;
            for (int e = 0; e < base.model.num_experts(); ++e)
                gates += fmt(" %.3f", mor.final.gates.mean_weight(t.name, top, e));
            const double w = mor.final.gates.mean_weight(t.name, top, expert);
            v.require(w > 0.5, tag + t.name + " top-level gate on " + affinity + " (expert " +
                                   std::to_string(expert) + ") = " + fmt("%.3f", w) + ", all:" + gates);
        }
    }
}

void criterion7(Verdict& v) {
    constexpr double kNoise = 0.01;  // relative
    const auto seeds = seeds_or({1, 2, 3});
    int full_le_s1 = 0, s1_le_none = 0;
    for (std::uint64_t seed : seeds) {
        const RunConfig full = load_config("benchmark.json", seed);
        const PreparedData data = prepare_data(full);
        const double a = run_pipeline(full, data).final.joint_loss;
        const double b = run_pipeline(ablation_config(full, "no_stage2_distill"), data).final.joint_loss;
        const double c = run_pipeline(ablation_config(full, "no_stage1"), data).final.joint_loss;
        const bool ab = a <= b * (1.0 + kNoise), bc = b <= c * (1.0 + kNoise);
        full_le_s1 += ab;
        s1_le_none += bc;
        v.note("seed " + std::to_string(seed) +
               fmt(": joint val loss stage1+distill %.5f, stage1 only %.5f, no stage1 %.5f", a, b, c) +
               (ab ? "" : "  [first order broken]") + (bc ? "" : "  [second order broken]"));
    }
    const int need = static_cast<int>(seeds.size()) / 2 + 1;
    v.require(full_le_s1 >= need, "stage1+distill <= stage1 only in " + std::to_string(full_le_s1) + " of " +
                                      std::to_string(seeds.size()) + " seeds");
    v.require(s1_le_none >= need, "stage1 only <= no stage1 in " + std::to_string(s1_le_none) + " of " +
                                      std::to_string(seeds.size()) + " seeds");
}

// ---------------------------------------------------------------------------
// 8. Determinism and persistence.

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::string& b) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

void criterion8(Verdict& v) {
    const fs::path dir = fs::temp_directory_path() / "mtd_acceptance";
    fs::create_directories(dir);

    RunConfig c = testing::tiny_run(8);
    c.dataset.augment = true;
    c.stage1.steps = 12;
    c.stage2.steps = 12;
    std::string logs[2];
    for (auto& text : logs) {
        const PreparedData data = prepare_data(c);
        const PipelineResult r = run_pipeline(c, data);
        std::ostringstream os;
        r.stage1.write_jsonl(os);
        r.stage2.write_jsonl(os);
        os << r.final.to_json().dump();
        text = os.str();
    }
    v.require(logs[0] == logs[1] && !logs[0].empty(),
              "two runs of one seed give byte-identical loss logs and reports (" + std::to_string(logs[0].size()) +
                  " bytes)");

    const PreparedData data = prepare_data(c);
    std::vector<MultiLevelFeatures> feats;
    for (const auto& f : data.train_features) feats.push_back(f[1]);
    bool lossless = true;
    for (FeatureDType dt : {FeatureDType::F64, FeatureDType::F32, FeatureDType::F16}) {
        // Store values already representable in the narrower type.
        std::vector<MultiLevelFeatures> src;
        for (const auto& s : feats) {
            MultiLevelFeatures m;
            for (const auto& [l, t] : s) {
                Tensor x = t.values();
                for (double& e : x.data) {
                    if (dt == FeatureDType::F32) e = static_cast<float>(e);
                    if (dt == FeatureDType::F16) e = half_to_float(float_to_half(static_cast<float>(e)));
                }
                m[l] = TokenMap{Var::constant(x), t.grid, l};
            }
            src.push_back(std::move(m));
        }
        const fs::path p = dir / (std::string("high.") + to_string(dt) + ".sakf");
        write_features(p.string(), "high", dt, c.model.depth, src);
        const auto back = read_features(p.string());
        bool same = back.size() == src.size();
        for (std::size_t i = 0; same && i < src.size(); ++i)
            for (const auto& [l, t] : src[i]) same = same && back[i].at(l).values() == t.values();
        write_features((dir / "again.sakf").string(), "high", dt, c.model.depth, back);
        same = same && read_bytes(p) == read_bytes(dir / "again.sakf");
        lossless = lossless && same;
        v.require(same, std::string("feature file round trip at ") + to_string(dt) + " is bitwise");
    }

    auto st = make_student(c);
    jitter(st->params(), 5);
    const fs::path ck = dir / "model.ckpt";
    save_checkpoint(ck.string(), st->config(), c.seed, st->params());
    auto other = make_student(testing::tiny_run(99));
    restore(load_checkpoint(ck.string()), other->params(),
            {ParamGroup::Stem, ParamGroup::Adapter, ParamGroup::Align, ParamGroup::Router, ParamGroup::Head});
    bool ck_same = true;
    for (std::size_t i = 0; i < st->params().entries().size(); ++i)
        ck_same = ck_same && st->params().entries()[i].var.value() == other->params().entries()[i].var.value();
    save_checkpoint((dir / "again.ckpt").string(), st->config(), c.seed, other->params());
    ck_same = ck_same && read_bytes(ck) == read_bytes(dir / "again.ckpt");
    v.require(ck_same, "checkpoint round trip is bitwise");

    const fs::path good = dir / std::string("high.f64.sakf");
    const std::string bytes = read_bytes(good);
    const fs::path bad = dir / "bad.sakf";
    struct Damage {
        const char* what;
        std::string bytes;
        FeatureFileErrc code;
    };
    std::vector<Damage> cases;
    {
        std::string b = bytes;
        b[1] = 'X';
        cases.push_back({"bad magic", b, FeatureFileErrc::BadMagic});
    }
    {
        std::string b = bytes;
        b[4] = 7;
        cases.push_back({"unknown version", b, FeatureFileErrc::UnsupportedVersion});
    }
    {
        std::string b = bytes;
        b[9] = '#';
        cases.push_back({"corrupt header", b, FeatureFileErrc::CorruptHeader});
    }
    cases.push_back({"truncated payload", bytes.substr(0, bytes.size() - 5), FeatureFileErrc::Truncated});
    cases.push_back({"trailing bytes", bytes + "zz", FeatureFileErrc::CorruptHeader});
    cases.push_back({"truncated prefix", bytes.substr(0, 6), FeatureFileErrc::Truncated});
    cases.push_back({"empty file", std::string(), FeatureFileErrc::Truncated});
    for (const auto& d : cases) {
        write_bytes(bad, d.bytes);
        std::string got = "accepted";
        try {
            read_features(bad.string());
        } catch (const FeatureFileError& e) {
            got = to_string(e.code());
        }
        v.require(got == to_string(d.code), std::string(d.what) + " rejected as " + got);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mtdistill acceptance criteria"};
    std::vector<int> which;
    std::string root = g_root.string();
    app.add_option("-c,--criterion", which, "criteria to run (default: all)")->check(CLI::Range(1, 8));
    app.add_option("--root", root, "source tree holding configs/ and data/");
    app.add_option("--seeds", g_seeds, "override the seeds of criteria 5-7");
    CLI11_PARSE(app, argc, argv);
    g_root = root;
    if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7, 8};

    const std::function<void(Verdict&)> runs[] = {criterion1, criterion2, criterion3, criterion4,
                                                  criterion5, criterion6, criterion7, criterion8};
    const char* titles[] = {"multi-task gain reproduction",   "gradient integrity",
                            "structural invariants",          "metric oracles",
                            "bias preservation",              "routing synergy",
                            "training-paradigm ordering",     "determinism and persistence"};
    int failed = 0;
    for (int n : which) {
        std::cout << "criterion " << n << " (" << titles[n - 1] << ")\n";
        Verdict v;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            runs[n - 1](v);
        } catch (const std::exception& e) {
            v.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (v.pass() ? "PASS" : "FAIL") << " criterion " << n << " " << titles[n - 1]
                  << fmt(" (%.1f s)", secs) << '\n'
                  << std::flush;
        failed += !v.pass();
    }
    return failed == 0 ? 0 : 1;
}
