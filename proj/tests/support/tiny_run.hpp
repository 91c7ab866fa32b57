// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mtd/run_config.hpp"

#include <filesystem>
#include <string>

namespace mtd::testing {

/// Two orthogonal 4x4 teachers, two tasks, a 16-pixel student.
inline RunConfig tiny_run(std::uint64_t seed = 3) {
    RunConfig c;
    c.seed = seed;
    c.output_dir = (std::filesystem::temp_directory_path() / ("mtd_test_" + std::to_string(seed))).string();
    c.model.image_size = 16;
    c.model.patch_size = 4;
    c.model.depth = 4;
    c.model.embed_dim = 16;
    c.model.num_heads = 2;
    c.model.head_channels = 8;
    SyntheticTeacherSpec a;
    a.teacher_id = "low";
    a.seed = 11;
    a.channel_dim = 16;
    a.bias_kind = BiasKind::LowpassSemantic;
    SyntheticTeacherSpec b = a;
    b.teacher_id = "high";
    b.seed = 12;
    b.channel_dim = 24;
    b.bias_kind = BiasKind::HighpassEdge;
    c.committee = {{CommitteeEntry::Kind::Synthetic, a, ""}, {CommitteeEntry::Kind::Synthetic, b, ""}};
    c.dataset.seed = 5;
    c.dataset.num_train = 16;
    c.dataset.num_val = 4;
    c.dataset.tasks = {{TaskSpec::make("seg", TaskKind::Semseg, 3), "low"}, {TaskSpec::make("sal", TaskKind::Saliency), "high"}};
    c.stage1.steps = 4;
    c.stage1.batch_size = 2;
    c.stage2.steps = 4;
    c.stage2.batch_size = 2;
    c.stage2.lr = 1e-3;
    c.skip_stage1 = false;
    c.resolve_model();
    return c;
}

}  // namespace mtd::testing
