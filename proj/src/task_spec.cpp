// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/task_spec.hpp"

#include "mtd/errors.hpp"

namespace mtd {

const char* to_string(TaskKind k) {
    switch (k) {
        case TaskKind::Semseg: return "semseg";
        case TaskKind::Parsing: return "parsing";
        case TaskKind::Saliency: return "saliency";
        case TaskKind::Normal: return "normal";
        case TaskKind::Boundary: return "boundary";
        case TaskKind::Depth: return "depth";
    }
    return "?";
}

TaskKind task_kind_from_string(const std::string& s) {
    for (TaskKind k : {TaskKind::Semseg, TaskKind::Parsing, TaskKind::Saliency, TaskKind::Normal,
                       TaskKind::Boundary, TaskKind::Depth}) {
        if (s == to_string(k)) return k;
    }
    throw ConfigError("unknown task kind '" + s + "'");
}

double default_loss_weight(TaskKind k) {
    switch (k) {
        case TaskKind::Semseg: return 1.0;
        case TaskKind::Parsing: return 2.0;
        case TaskKind::Saliency: return 5.0;
        case TaskKind::Normal: return 10.0;
        case TaskKind::Boundary: return 50.0;
        case TaskKind::Depth: return 1.0;
    }
    return 1.0;
}

bool default_lower_is_better(TaskKind k) { return k == TaskKind::Normal || k == TaskKind::Depth; }

const char* metric_name(TaskKind k) {
    switch (k) {
        case TaskKind::Semseg:
        case TaskKind::Parsing: return "mIoU";
        case TaskKind::Saliency: return "maxF";
        case TaskKind::Normal: return "mErr";
        case TaskKind::Boundary: return "odsF";
        case TaskKind::Depth: return "RMSE";
    }
    return "?";
}

int TaskSpec::output_channels() const {
    switch (kind) {
        case TaskKind::Semseg:
        case TaskKind::Parsing: return num_classes;
        case TaskKind::Normal: return 3;
        default: return 1;
    }
}

void TaskSpec::validate() const {
    if (name.empty()) throw ConfigError("task spec without a name");
    if (!(loss_weight > 0.0)) throw ConfigError("task " + name + ": loss weight must be positive");
    if (is_segmentation() && num_classes < 2) throw ConfigError("task " + name + ": need at least 2 classes");
}

TaskSpec TaskSpec::make(std::string name, TaskKind kind, int num_classes) {
    TaskSpec s;
    s.name = std::move(name);
    s.kind = kind;
    s.num_classes = num_classes;
    s.loss_weight = default_loss_weight(kind);
    s.lower_is_better = default_lower_is_better(kind);
    return s;
}

}  // namespace mtd
