// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "mtd/dataset.hpp"
#include "mtd/errors.hpp"

using namespace mtd;

namespace {

std::vector<SyntheticTeacherSpec> committee() {
    std::vector<SyntheticTeacherSpec> c(3);
    c[0].teacher_id = "sem";
    c[0].seed = 11;
    c[0].bias_kind = BiasKind::LowpassSemantic;
    c[1].teacher_id = "edge";
    c[1].seed = 12;
    c[1].bias_kind = BiasKind::HighpassEdge;
    c[2].teacher_id = "mix";
    c[2].seed = 13;
    c[2].bias_kind = BiasKind::IdentityMixed;
    return c;
}

SyntheticDatasetSpec small_spec(int n = 6) {
    SyntheticDatasetSpec s;
    s.seed = 5;
    s.num_samples = n;
    s.image_size = 16;
    s.tasks = {{TaskSpec::make("seg", TaskKind::Semseg, 4), "sem"},
               {TaskSpec::make("edge", TaskKind::Boundary), "edge"},
               {TaskSpec::make("sal", TaskKind::Saliency), "mix"},
               {TaskSpec::make("normal", TaskKind::Normal), "mix"},
               {TaskSpec::make("depth", TaskKind::Depth), "sem"}};
    return s;
}

}  // namespace

TEST_CASE("dataset is deterministic and has the requested size") {
    Dataset a = make_synthetic_dataset(small_spec(), committee());
    Dataset b = make_synthetic_dataset(small_spec(), committee());
    REQUIRE(a.size() == 6);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.samples[i].image == b.samples[i].image);
        for (const auto& t : a.tasks) {
            const TaskLabel& x = a.samples[i].labels.at(t.name);
            const TaskLabel& y = b.samples[i].labels.at(t.name);
            CHECK(x.classes == y.classes);
            CHECK(x.values == y.values);
        }
    }
    SyntheticDatasetSpec other = small_spec();
    other.seed = 6;
    CHECK_FALSE(make_synthetic_dataset(other, committee()).samples[0].image == a.samples[0].image);
    CHECK(make_synthetic_dataset(small_spec(0), committee()).size() == 0);
}

TEST_CASE("labels are well formed") {
    Dataset d = make_synthetic_dataset(small_spec(8), committee());
    std::vector<int> counts(4, 0);
    int positive = 0, edges = 0;
    for (const auto& s : d.samples) {
        for (double v : s.image.data) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
        for (int c : s.labels.at("seg").classes) {
            REQUIRE(c >= 0);
            REQUIRE(c < 4);
            ++counts[c];
        }
        for (double v : s.labels.at("sal").values.data) positive += v == 1.0;
        for (double v : s.labels.at("edge").values.data) edges += v == 1.0;
        for (double v : s.labels.at("depth").values.data) CHECK(v > 0.0);
        const Tensor& n = s.labels.at("normal").values;
        for (int i = 0; i < n.rows; ++i) CHECK(n(i, 0) * n(i, 0) + n(i, 1) * n(i, 1) + n(i, 2) * n(i, 2) == doctest::Approx(1.0));
    }
    int used = 0;
    for (int c : counts) used += c > 0;
    CHECK(used >= 2);
    CHECK(positive > 0);
    CHECK(positive < 8 * 256);
    CHECK(edges > 0);
}

TEST_CASE("labels depend only on the affinity teacher") {
    CHECK(verify_affinity_isolation(small_spec(3), committee()));

    // Changing the affinity teacher does change its labels.
    auto changed = committee();
    changed[0].seed = 99;
    Dataset a = make_synthetic_dataset(small_spec(3), committee());
    Dataset b = make_synthetic_dataset(small_spec(3), changed);
    CHECK(a.samples[0].labels.at("edge").values == b.samples[0].labels.at("edge").values);
    CHECK(a.samples[0].labels.at("depth").values != b.samples[0].labels.at("depth").values);
}

TEST_CASE("affinity must name a synthetic committee member") {
    SyntheticDatasetSpec s = small_spec(1);
    s.tasks[0].affinity = "missing";
    CHECK_THROWS_AS(make_synthetic_dataset(s, committee()), ConfigError);
    s.tasks[0].affinity = "";
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("identity augmentation is exact") {
    Dataset d = make_synthetic_dataset(small_spec(2), committee());
    Sample out = apply_augment(d.samples[1], d.tasks, AugmentParams{});
    CHECK(out.image == d.samples[1].image);
    for (const auto& t : d.tasks) {
        CHECK(out.labels.at(t.name).classes == d.samples[1].labels.at(t.name).classes);
        CHECK(out.labels.at(t.name).values == d.samples[1].labels.at(t.name).values);
    }
}

TEST_CASE("flip is an involution and negates normal x") {
    Dataset d = make_synthetic_dataset(small_spec(1), committee());
    AugmentParams flip;
    flip.flip = true;
    const Sample& s = d.samples[0];
    Sample once = apply_augment(s, d.tasks, flip);
    Sample twice = apply_augment(once, d.tasks, flip);
    CHECK(twice.image == s.image);
    CHECK(twice.labels.at("seg").classes == s.labels.at("seg").classes);
    CHECK(twice.labels.at("normal").values == s.labels.at("normal").values);
    const Tensor& n0 = s.labels.at("normal").values;
    const Tensor& n1 = once.labels.at("normal").values;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            CHECK(n1(y * 16 + x, 0) == -n0(y * 16 + 15 - x, 0));
            CHECK(n1(y * 16 + x, 1) == n0(y * 16 + 15 - x, 1));
            CHECK(once.image.at(0, y, x) == s.image.at(0, y, 15 - x));
        }
}

TEST_CASE("drawn augmentations respect the policy and pad with invalid labels") {
    Dataset d = make_synthetic_dataset(small_spec(1), committee());
    Rng rng(3);
    AugmentPolicy policy;
    bool saw_pad = false;
    for (int i = 0; i < 40; ++i) {
        AugmentParams p = draw_augment(policy, 16, rng);
        CHECK(p.scale >= 0.5);
        CHECK(p.scale <= 2.0);
        CHECK(std::abs(p.brightness) <= 0.1);
        CHECK(std::abs(p.contrast - 1.0) <= 0.1);
        Sample out = apply_augment(d.samples[0], d.tasks, p);
        if (p.scale < 0.9) {
            int ignored = 0;
            for (int c : out.labels.at("seg").classes) ignored += c == kIgnoreLabel;
            int invalid = 0;
            for (char v : out.labels.at("sal").valid) invalid += v == 0;
            CHECK(ignored > 0);
            CHECK(ignored == invalid);
            saw_pad = true;
        }
    }
    CHECK(saw_pad);
}
