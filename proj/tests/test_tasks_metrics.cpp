// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "mtd/errors.hpp"
#include "mtd/metrics.hpp"
#include "mtd/task_heads.hpp"
#include "support/grad_check.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace mtd;
using mtd::testing::check_gradients;
using mtd::testing::probe_tensor;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.image_size = 16;
    c.patch_size = 4;
    c.depth = 4;
    c.embed_dim = 16;
    c.num_heads = 2;
    c.head_channels = 4;
    return c;
}

MultiLevelFeatures fused_levels(const ModelConfig& c, unsigned seed) {
    MultiLevelFeatures f;
    for (int l : select_levels(c.depth)) f[l] = TokenMap{Var::constant(probe_tensor(c.num_tokens(), c.embed_dim, seed + l)), c.grid(), l};
    return f;
}

TaskLabel binary_label(Grid g, unsigned seed, double density = 0.3) {
    TaskLabel l;
    l.grid = g;
    l.values = Tensor(g.count(), 1);
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution b(density);
    for (double& v : l.values.data) v = b(rng) ? 1.0 : 0.0;
    return l;
}

TaskLabel class_label(Grid g, int k, unsigned seed) {
    TaskLabel l;
    l.grid = g;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> u(0, k - 1);
    for (int i = 0; i < g.count(); ++i) l.classes.push_back(i % 7 == 3 ? kIgnoreLabel : u(rng));
    return l;
}

TaskLabel dense_label(Grid g, int channels, unsigned seed, bool unit) {
    TaskLabel l;
    l.grid = g;
    l.values = probe_tensor(g.count(), channels, seed);
    for (int i = 0; i < l.values.rows; ++i) {
        auto row = l.values.row(i);
        if (unit) {
            double n = 0.0;
            for (double v : row) n += v * v;
            for (double& v : row) v /= std::sqrt(n);
            if (i % 5 == 0)
                for (double& v : row) v = 0.0;  // invalid pixel
        } else {
            row[0] = i % 6 == 0 ? 0.0 : 1.0 + std::abs(row[0]);
        }
    }
    return l;
}

std::vector<MetricRow> rows_of(const std::vector<std::string>& tasks, const std::vector<double>& values) {
    std::vector<MetricRow> rows;
    for (std::size_t i = 0; i < tasks.size(); ++i) rows.push_back({tasks[i], "m", values[i], MetricUnit::Raw, true});
    return rows;
}

std::vector<TaskSpec> specs_of(const std::vector<std::string>& tasks, const std::vector<bool>& lower) {
    std::vector<TaskSpec> s;
    for (std::size_t i = 0; i < tasks.size(); ++i) s.push_back({tasks[i], TaskKind::Depth, 2, 1.0, lower[i]});
    return s;
}

}  // namespace

TEST_CASE("head output shapes") {
    ModelConfig c = tiny_config();
    ParamStore store;
    Rng rng(1);
    for (auto spec : {TaskSpec::make("seg", TaskKind::Semseg, 5), TaskSpec::make("normal", TaskKind::Normal),
                      TaskSpec::make("depth", TaskKind::Depth), TaskSpec::make("edge", TaskKind::Boundary)}) {
        HeadParams h = make_head_params(c, spec, "head." + spec.name, store, rng);
        Var out = head_forward(fused_levels(c, 3), spec, h);
        CHECK(out.rows() == 16 * 16);
        CHECK(out.cols() == spec.output_channels());
    }
    CHECK(quarter_grid(c) == Grid{4, 4});
    MultiLevelFeatures three = fused_levels(c, 3);
    three.erase(three.begin());
    HeadParams h = make_head_params(c, TaskSpec::make("x", TaskKind::Depth), "head.x", store, rng);
    CHECK_THROWS_AS(head_forward(three, TaskSpec::make("x", TaskKind::Depth), h), ConfigError);
}

TEST_CASE("heads and task losses pass finite-difference checks") {
    ModelConfig c = tiny_config();
    c.image_size = 8;
    c.patch_size = 2;  // 4x4 tokens, 2x2 quarter grid, 8x8 labels
    const Grid labels{8, 8};
    std::vector<std::pair<TaskSpec, TaskLabel>> cases{
        {TaskSpec::make("seg", TaskKind::Semseg, 3), class_label(labels, 3, 1)},
        {TaskSpec::make("parts", TaskKind::Parsing, 4), class_label(labels, 4, 2)},
        {TaskSpec::make("sal", TaskKind::Saliency), binary_label(labels, 3)},
        {TaskSpec::make("edge", TaskKind::Boundary), binary_label(labels, 4, 0.1)},
        {TaskSpec::make("normal", TaskKind::Normal), dense_label(labels, 3, 5, true)},
        {TaskSpec::make("depth", TaskKind::Depth), dense_label(labels, 1, 6, false)},
    };
    for (auto& [spec, label] : cases) {
        CAPTURE(spec.name);
        ParamStore store;
        Rng rng(7);
        HeadParams h = make_head_params(c, spec, "head", store, rng);
        for (auto& e : store.entries()) {
            Tensor& v = e.var.mutable_value();
            for (std::size_t i = 0; i < v.size(); ++i) v.data[i] += 0.05 * std::sin(1.7 * i + 0.3);
        }
        std::vector<Var> fused_vars;
        MultiLevelFeatures fused;
        for (int l : select_levels(c.depth)) {
            Var v = Var::parameter(probe_tensor(16, 16, 40 + l));
            fused_vars.push_back(v);
            fused[l] = TokenMap{v, c.grid(), l};
        }
        std::vector<std::pair<std::string, Var>> params;
        for (auto& e : store.entries()) params.emplace_back(e.name, e.var);
        params.emplace_back("fused1", fused_vars[0]);
        params.emplace_back("fused4", fused_vars[3]);
        auto r = check_gradients(params, [&] { return task_loss(head_forward(fused, spec, h), label, spec); }, 1e-5, 12);
        INFO(r.worst);
        CHECK(r.max_rel_error <= 1e-4);
    }
}

TEST_CASE("cross-entropy closed forms") {
    const Grid g{2, 2};
    TaskSpec spec = TaskSpec::make("seg", TaskKind::Semseg, 3);
    TaskLabel l;
    l.grid = g;
    l.classes = {0, 2, 1, kIgnoreLabel};
    Tensor onehot(4, 3, -1e3);
    for (int i = 0; i < 3; ++i) onehot(i, l.classes[i]) = 0.0;
    CHECK(task_loss(Var::constant(onehot), l, spec).item() == 0.0);
    CHECK(task_loss(Var::constant(Tensor(4, 3)), l, spec).item() == doctest::Approx(std::log(3.0)).epsilon(1e-15));
    l.classes = {kIgnoreLabel, kIgnoreLabel, kIgnoreLabel, kIgnoreLabel};
    CHECK_THROWS_AS(task_loss(Var::constant(Tensor(4, 3)), l, spec), NumericError);
}

TEST_CASE("boundary loss at p = 0.5 has the weighted closed form") {
    TaskLabel l = binary_label({6, 5}, 9, 0.2);
    double p = 0, q = 0;
    for (double v : l.values.data) (v > 0.5 ? p : q) += 1;
    REQUIRE(p > 0);
    const double expect = -(0.95 * p + 0.05 * q) * std::log(0.5) / (p + q);
    TaskSpec spec = TaskSpec::make("edge", TaskKind::Boundary);
    CHECK(task_loss(Var::constant(Tensor(30, 1)), l, spec).item() == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("saliency balance is computed over the batch") {
    TaskLabel a = binary_label({4, 4}, 1, 0.5), b = binary_label({4, 4}, 2, 0.1);
    BinaryBalance w = saliency_balance({&a, &b});
    double pos = 0;
    for (double v : a.values.data) pos += v;
    for (double v : b.values.data) pos += v;
    CHECK(w.negative == doctest::Approx(pos / 32));
    CHECK(w.positive == doctest::Approx(1 - pos / 32));
    TaskSpec spec = TaskSpec::make("sal", TaskKind::Saliency);
    const double batch = task_loss(Var::constant(Tensor(16, 1)), a, spec, &w).item();
    const double alone = task_loss(Var::constant(Tensor(16, 1)), a, spec).item();
    CHECK(batch != doctest::Approx(alone));
}

TEST_CASE("regression losses") {
    TaskLabel depth = dense_label({4, 4}, 1, 3, false);
    Tensor pred = depth.values;
    for (double& v : pred.data) v += 0.1;
    CHECK(task_loss(Var::constant(pred), depth, TaskSpec::make("d", TaskKind::Depth)).item() ==
          doctest::Approx(0.1).epsilon(1e-14));
    TaskLabel n = dense_label({4, 4}, 3, 4, true);
    CHECK(task_loss(Var::constant(n.values), n, TaskSpec::make("n", TaskKind::Normal)).item() == 0.0);
    CHECK_THROWS_AS(task_loss(Var::constant(Tensor(16, 2)), n, TaskSpec::make("n", TaskKind::Normal)), ConfigError);
}

TEST_CASE("mIoU examples") {
    SegmentationScore s(2);
    s.add({0, 1, 1, 0}, {0, 1, 1, 0});
    CHECK(*s.miou() == 100.0);
    SegmentationScore t(2);
    t.add({0, 0, 1, 1}, {0, 1, 1, 1});
    CHECK(*t.miou() == doctest::Approx(100.0 * (0.5 + 2.0 / 3.0) / 2.0).epsilon(1e-15));
    CHECK(*t.miou() == doctest::Approx(58.3333333333).epsilon(1e-10));
    SegmentationScore u(3);
    CHECK_FALSE(u.miou().has_value());
    CHECK_THROWS_AS(u.add({3}, {0}), ConfigError);
}

TEST_CASE("mIoU equals brute-force enumeration on all binary 2x4 mask pairs") {
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
            for (int c = 0; c < 2; ++c) {
                int inter = 0, uni = 0;
                for (int i = 0; i < 8; ++i) {
                    inter += pred[i] == c && gt[i] == c;
                    uni += pred[i] == c || gt[i] == c;
                }
                if (uni == 0) continue;
                sum += static_cast<double>(inter) / uni;
                ++present;
            }
            SegmentationScore s(2);
            s.add(pred, gt);
            if (std::abs(*s.miou() - 100.0 * sum / present) > 1e-12) ++mismatches;
        }
    CHECK(mismatches == 0);
}

TEST_CASE("normal error analytic angles") {
    Tensor gt(3, 3, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
    NormalError same, perp, opposite;
    same.add(gt, gt);
    Tensor p(3, 3, std::vector<double>{0, 2, 0, 0, 0, 3, 5, 0, 0});
    perp.add(p, gt);
    Tensor neg = gt;
    for (double& v : neg.data) v = -v;
    opposite.add(neg, gt);
    CHECK(*same.mean_error() == 0.0);
    CHECK(*perp.mean_error() == 90.0);
    CHECK(*opposite.mean_error() == 180.0);
    NormalError zero;
    zero.add(Tensor(3, 3), gt);
    CHECK(*zero.mean_error() == 90.0);
}

TEST_CASE("depth RMSE") {
    TaskLabel d = dense_label({4, 4}, 1, 5, false);
    DepthRmse same;
    same.add(d.values, d.values);
    CHECK(*same.rmse() == 0.0);
    Tensor off = d.values;
    for (double& v : off.data) v += 0.5;
    DepthRmse shifted;
    shifted.add(off, d.values);
    CHECK(*shifted.rmse() == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("maxF dominates every single-threshold F") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        MaxFScore s;
        std::vector<double> probs(200), gt(200);
        for (std::size_t i = 0; i < probs.size(); ++i) {
            gt[i] = u(rng) < 0.3 ? 1.0 : 0.0;
            probs[i] = std::clamp(0.6 * gt[i] + 0.7 * u(rng) - 0.1, 0.0, 1.0);
        }
        s.add(probs, gt);
        const double best = *s.max_f();
        CHECK(best >= 0.0);
        CHECK(best <= 100.0);
        // Independent F at a handful of thresholds.
        for (int i : {0, 37, 128, 200, 255}) {
            const double t = i / 255.0;
            double tp = 0, fp = 0, pos = 0;
            for (std::size_t k = 0; k < probs.size(); ++k) {
                pos += gt[k];
                if (probs[k] >= t) (gt[k] > 0.5 ? tp : fp) += 1;
            }
            const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0, rec = tp / pos;
            const double f = prec + rec > 0 ? 100.0 * 1.3 * prec * rec / (0.3 * prec + rec) : 0.0;
            CHECK(s.f_at(i) == doctest::Approx(f).epsilon(1e-12));
            CHECK(best >= f);
        }
    }
    MaxFScore empty;
    empty.add({0.2, 0.9}, {0.0, 0.0});
    CHECK_FALSE(empty.max_f().has_value());
    MaxFScore perfect;
    perfect.add({1.0, 0.0, 1.0}, {1.0, 0.0, 1.0});
    CHECK(*perfect.max_f() == doctest::Approx(100.0));
}

TEST_CASE("boundary F with tolerance") {
    const Grid g{32, 32};
    CHECK(BoundaryFScore::radius(g) == 1);
    CHECK(BoundaryFScore::radius({400, 300}) == 4);
    std::vector<double> gt(1024, 0.0), exact(1024, 0.0), shifted(1024, 0.0), far(1024, 0.0);
    for (int y = 0; y < 32; ++y) {
        gt[y * 32 + 10] = 1.0;
        exact[y * 32 + 10] = 1.0;
        shifted[y * 32 + 11] = 0.9;
        far[y * 32 + 20] = 1.0;
    }
    BoundaryFScore a, b, c;
    a.add(exact, gt, g);
    b.add(shifted, gt, g);
    c.add(far, gt, g);
    CHECK(*a.ods_f() == doctest::Approx(100.0));
    CHECK(*b.ods_f() == doctest::Approx(100.0));
    CHECK(*c.ods_f() == 0.0);
    BoundaryFScore none;
    none.add(exact, std::vector<double>(1024, 0.0), g);
    CHECK_FALSE(none.ods_f().has_value());
}

TEST_CASE("task metric rows from raw head output") {
    TaskSpec seg = TaskSpec::make("seg", TaskKind::Semseg, 3);
    TaskLabel l = class_label({4, 4}, 3, 2);
    Tensor logits(16, 3);
    for (int i = 0; i < 16; ++i)
        if (l.classes[i] != kIgnoreLabel) logits(i, l.classes[i]) = 5.0;
    TaskMetric m(seg);
    m.add(logits, l);
    MetricRow r = m.result();
    CHECK(r.metric == "mIoU");
    CHECK(r.value == 100.0);

    TaskMetric sal(TaskSpec::make("sal", TaskKind::Saliency));
    TaskLabel empty = binary_label({4, 4}, 1, 0.0);
    sal.add(Tensor(16, 1), empty);
    CHECK_FALSE(sal.result().defined);

    TaskMetric n(TaskSpec::make("n", TaskKind::Normal));
    TaskLabel nl = dense_label({4, 4}, 3, 8, true);
    Tensor scaled = nl.values;
    for (double& v : scaled.data) v *= 3.0;
    n.add(scaled, nl);
    CHECK(n.result().value == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(n.result().unit == MetricUnit::Degrees);
}

TEST_CASE("multi-task gain reproduces the published tables") {
    const std::vector<std::string> pascal{"semseg", "parsing", "saliency", "normal", "boundary"};
    const auto pascal_specs = specs_of(pascal, {false, false, false, true, false});
    const auto single = rows_of(pascal, {81.61, 72.77, 83.80, 13.87, 75.24});
    const std::vector<std::pair<std::vector<double>, double>> table3{
        {{79.26, 68.28, 84.16, 14.06, 71.59}, -2.97},
        {{79.03, 67.61, 84.81, 14.15, 73.00}, -2.81},
        {{81.41, 70.52, 84.90, 13.51, 75.42}, 0.16},
        {{84.01, 76.99, 84.65, 13.82, 76.27}, 2.30},
    };
    for (const auto& [multi, expect] : table3) CHECK(std::abs(delta_m(rows_of(pascal, multi), single, pascal_specs) - expect) <= 0.02);

    const std::vector<std::string> nyud{"semseg", "depth", "normal", "boundary"};
    const auto nyud_specs = specs_of(nyud, {false, true, true, false});
    const auto nyud_single = rows_of(nyud, {54.19, 0.5560, 19.22, 78.09});
    CHECK(std::abs(delta_m(rows_of(nyud, {52.42, 0.5413, 19.29, 76.50}), nyud_single, nyud_specs) + 0.76) <= 0.02);
    CHECK(std::abs(delta_m(rows_of(nyud, {63.18, 0.4313, 16.25, 79.43}), nyud_single, nyud_specs) - 14.05) <= 0.02);

    CHECK(delta_m(single, single, pascal_specs) == 0.0);
    CHECK_THROWS_AS(delta_m(rows_of({"semseg"}, {1.0}), single, pascal_specs), ConfigError);
}

TEST_CASE("swapping model and baseline flips the sign of each numerator") {
    for (bool lower : {false, true}) {
        const double m = 13.82, s = 13.87;
        const double forward = relative_gain(m, s, lower) * s;
        const double backward = relative_gain(s, m, lower) * m;
        CHECK(forward == doctest::Approx(-backward).epsilon(1e-12));
    }
}

TEST_CASE("bias report arithmetic") {
    const std::vector<std::string> tasks{"a", "b"};
    const auto specs = specs_of(tasks, {false, false});
    BiasReport same = bias_report(rows_of(tasks, {5, 8}), rows_of(tasks, {5, 8}), specs);
    CHECK(same.mu == 0.0);
    CHECK(same.sigma == 0.0);
    CHECK_FALSE(same.mu_over_sigma.has_value());

    BiasReport sym = bias_report(std::vector<double>{10.0, -10.0});
    CHECK(sym.mu == 0.0);
    CHECK(sym.sigma == 10.0);
    CHECK(*sym.mu_over_sigma == 0.0);

    BiasReport flat = bias_report(std::vector<double>{5.0, 5.0, 5.0});
    CHECK(flat.mu == 5.0);
    CHECK(flat.sigma == 0.0);
    CHECK_FALSE(flat.mu_over_sigma.has_value());
    CHECK(flat.to_json()["mu_over_sigma"].is_null());

    BiasReport rel = bias_report(rows_of(tasks, {110, 90}), rows_of(tasks, {100, 100}), specs);
    CHECK(rel.improvement[0].second == doctest::Approx(10.0));
    CHECK(rel.improvement[1].second == doctest::Approx(-10.0));
}

TEST_CASE("representation similarity") {
    const Grid g{2, 2};
    auto features = [&](unsigned seed) {
        MultiLevelFeatures f;
        for (int l : {1, 2}) f[l] = TokenMap{Var::constant(probe_tensor(4, 3, seed + l)), g, l};
        return f;
    };
    MultiLevelFeatures t1 = features(1), t2 = features(5);
    RepSimilarity same = rep_similarity({t1, t2}, {t1, t2});
    CHECK(same.per_teacher[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(same.average == doctest::Approx(1.0).epsilon(1e-14));

    MultiLevelFeatures a, b;
    a[1] = TokenMap{Var::constant(Tensor(2, 2, std::vector<double>{1, 0, 0, 1})), {1, 2}, 1};
    b[1] = TokenMap{Var::constant(Tensor(2, 2, std::vector<double>{0, 1, -1, 0})), {1, 2}, 1};
    CHECK(rep_similarity({a}, {b}).average == 0.0);

    // Similarities 0.8 and 0.6 by construction.
    MultiLevelFeatures s1, s2, u;
    u[1] = TokenMap{Var::constant(Tensor(1, 2, std::vector<double>{1, 0})), {1, 1}, 1};
    s1[1] = TokenMap{Var::constant(Tensor(1, 2, std::vector<double>{0.8, 0.6})), {1, 1}, 1};
    s2[1] = TokenMap{Var::constant(Tensor(1, 2, std::vector<double>{0.6, 0.8})), {1, 1}, 1};
    RepSimilarity mixed = rep_similarity({s1, s2}, {u, u});
    CHECK(mixed.average == doctest::Approx(0.7).epsilon(1e-14));

    MultiLevelFeatures zero;
    zero[1] = TokenMap{Var::constant(Tensor(1, 2)), {1, 1}, 1};
    CHECK_THROWS_AS(rep_similarity({zero}, {u}), NumericError);
}

TEST_CASE("metric csv round trip with directions") {
    std::vector<MetricRow> rows{{"seg", "mIoU", 58.25, MetricUnit::Percent, true},
                                {"normal", "mErr", 13.87, MetricUnit::Degrees, true}};
    std::ostringstream os;
    write_metric_csv(rows, os);
    std::istringstream is(os.str());
    auto back = read_metric_csv(is);
    REQUIRE(back.size() == 2);
    CHECK(back[1].value == 13.87);

    std::istringstream with_dir("task,metric,value,lower_is_better\nseg,mIoU,50,0\nnormal,mErr,14,1\n");
    std::vector<std::pair<std::string, bool>> dirs;
    read_metric_csv(with_dir, &dirs);
    REQUIRE(dirs.size() == 2);
    CHECK(dirs[1].second);
    std::istringstream bad("seg,mIoU,abc\n");
    CHECK_THROWS_AS(read_metric_csv(bad), ConfigError);
}
