// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/run_config.hpp"

#include "mtd/errors.hpp"

#include <cstdlib>
#include <fstream>
#include <initializer_list>

namespace mtd {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json grid_json(Grid g) { return json::array({g.h, g.w}); }

Grid grid_from(const json& j) {
    if (!j.is_array() || j.size() != 2) throw ConfigError("grid must be [h, w]");
    return {j[0].get<int>(), j[1].get<int>()};
}

json task_json(const TaskSpec& t) {
    return {{"name", t.name},
            {"kind", to_string(t.kind)},
            {"num_classes", t.num_classes},
            {"loss_weight", t.loss_weight},
            {"lower_is_better", t.lower_is_better}};
}

TaskSpec task_from(const json& j) {
    check_keys(j, {"name", "kind", "num_classes", "loss_weight", "lower_is_better", "affinity"}, "task");
    TaskSpec t = TaskSpec::make(j.at("name").get<std::string>(), task_kind_from_string(j.at("kind").get<std::string>()),
                                j.value("num_classes", 2));
    read(j, "loss_weight", t.loss_weight);
    read(j, "lower_is_better", t.lower_is_better);
    return t;
}

json stage_json(const StageConfig& s) {
    return {{"steps", s.steps},         {"batch_size", s.batch_size}, {"lr", s.lr},
            {"weight_decay", s.weight_decay}, {"schedule", to_string(s.schedule)},
            {"warmup_fraction", s.warmup_fraction}, {"clip", s.clip}};
}

void stage_from(const json& j, StageConfig& s) {
    check_keys(j, {"steps", "batch_size", "lr", "weight_decay", "schedule", "warmup_fraction", "clip"}, "stage");
    read(j, "steps", s.steps);
    read(j, "batch_size", s.batch_size);
    read(j, "lr", s.lr);
    read(j, "weight_decay", s.weight_decay);
    if (j.contains("schedule")) s.schedule = schedule_from_string(j.at("schedule").get<std::string>());
    read(j, "warmup_fraction", s.warmup_fraction);
    read(j, "clip", s.clip);
}

}  // namespace

int StageConfig::warmup_steps() const { return static_cast<int>(std::lround(warmup_fraction * steps)); }

LrSchedule StageConfig::lr_schedule() const {
    LrSchedule s;
    s.kind = schedule;
    s.base_lr = lr;
    s.total_steps = steps;
    s.warmup_steps = warmup_steps();
    return s;
}

void StageConfig::validate(const std::string& which) const {
    if (steps < 0) throw ConfigError(which + ": steps must be >= 0");
    if (batch_size < 1) throw ConfigError(which + ": batch_size must be >= 1");
    if (!(lr >= 0.0)) throw ConfigError(which + ": lr must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError(which + ": weight_decay must be >= 0");
    if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw ConfigError(which + ": warmup_fraction outside [0, 1]");
}

void RunConfig::validate() const {
    distill.validate();
    stage1.validate("stage1");
    stage2.validate("stage2");
    if (committee.empty()) throw ConfigError("committee: at least one teacher is required");
    for (std::size_t i = 0; i < committee.size(); ++i) {
        const auto& e = committee[i];
        if (e.kind == CommitteeEntry::Kind::Synthetic) e.synthetic.validate();
        else if (e.path.empty()) throw ConfigError("committee: file member without a path");
    }
    if (dataset.num_train < 1 || dataset.num_val < 0) throw ConfigError("dataset: need num_train >= 1, num_val >= 0");
    SyntheticDatasetSpec probe{dataset.seed, dataset.num_train, model.image_size, dataset.tasks, "train"};
    probe.validate();
    if (dataset.policy.min_scale <= 0.0 || dataset.policy.max_scale < dataset.policy.min_scale) {
        throw ConfigError("dataset.augment_policy: need 0 < min_scale <= max_scale");
    }
    ModelConfig m = model;
    m.tasks.clear();
    for (const auto& t : dataset.tasks) m.tasks.push_back(t.spec);
    m.validate(/*require_teachers=*/false);
}

void RunConfig::resolve_model() {
    model.tasks.clear();
    for (const auto& t : dataset.tasks) model.tasks.push_back(t.spec);
    model.teachers.clear();
    for (const auto& e : committee) {
        if (e.kind == CommitteeEntry::Kind::Synthetic) {
            model.teachers.push_back(e.synthetic.shape());
        } else {
            FeatureFileReader reader(e.path);
            const auto& h = reader.header();
            if (h.shapes.empty()) throw FeatureFileError(FeatureFileErrc::CorruptHeader, e.path + ": no levels");
            model.teachers.push_back({h.teacher_id, h.shapes[0][2], {h.shapes[0][0], h.shapes[0][1]}, TeacherSource::File});
        }
    }
    model.seed = seed;
    model.validate();
}

json to_json(const ModelConfig& c) {
    json teachers = json::array();
    for (const auto& t : c.teachers) {
        teachers.push_back({{"teacher_id", t.teacher_id},
                            {"channel_dim", t.channel_dim},
                            {"grid", grid_json(t.grid)},
                            {"kind", t.kind == TeacherSource::File ? "file" : "synthetic"}});
    }
    json tasks = json::array();
    for (const auto& t : c.tasks) tasks.push_back(task_json(t));
    return {{"image_size", c.image_size},
            {"patch_size", c.patch_size},
            {"depth", c.depth},
            {"embed_dim", c.embed_dim},
            {"num_heads", c.num_heads},
            {"mlp_ratio", c.mlp_ratio},
            {"adapter_reduction", c.adapter_reduction},
            {"router_hidden", c.router_hidden},
            {"head_channels", c.head_channels},
            {"use_adapters", c.use_adapters},
            {"fusion", c.fusion == FusionMode::Mixture ? "mixture" : "addition"},
            {"teachers", teachers},
            {"tasks", tasks},
            {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
    check_keys(j,
               {"image_size", "patch_size", "depth", "embed_dim", "num_heads", "mlp_ratio", "adapter_reduction",
                "router_hidden", "head_channels", "use_adapters", "fusion", "teachers", "tasks", "seed"},
               "model");
    ModelConfig c;
    read(j, "image_size", c.image_size);
    read(j, "patch_size", c.patch_size);
    read(j, "depth", c.depth);
    read(j, "embed_dim", c.embed_dim);
    read(j, "num_heads", c.num_heads);
    read(j, "mlp_ratio", c.mlp_ratio);
    read(j, "adapter_reduction", c.adapter_reduction);
    read(j, "router_hidden", c.router_hidden);
    read(j, "head_channels", c.head_channels);
    read(j, "use_adapters", c.use_adapters);
    read(j, "seed", c.seed);
    if (j.contains("fusion")) {
        const auto f = j.at("fusion").get<std::string>();
        if (f == "mixture") c.fusion = FusionMode::Mixture;
        else if (f == "addition") c.fusion = FusionMode::Addition;
        else throw ConfigError("model.fusion: expected mixture or addition, got '" + f + "'");
    }
    if (j.contains("teachers")) {
        for (const auto& t : j.at("teachers")) {
            check_keys(t, {"teacher_id", "channel_dim", "grid", "kind"}, "model.teachers");
            TeacherSpec s{t.at("teacher_id").get<std::string>(), t.at("channel_dim").get<int>(), grid_from(t.at("grid")),
                          t.value("kind", "synthetic") == "file" ? TeacherSource::File : TeacherSource::Synthetic};
            c.teachers.push_back(s);
        }
    }
    if (j.contains("tasks"))
        for (const auto& t : j.at("tasks")) c.tasks.push_back(task_from(t));
    return c;
}

json to_json(const RunConfig& c) {
    json committee = json::array();
    for (const auto& e : c.committee) {
        if (e.kind == CommitteeEntry::Kind::File) {
            committee.push_back({{"kind", "file"}, {"path", e.path}});
            continue;
        }
        const auto& s = e.synthetic;
        committee.push_back({{"kind", "synthetic"},
                             {"teacher_id", s.teacher_id},
                             {"seed", s.seed},
                             {"channel_dim", s.channel_dim},
                             {"grid", grid_json(s.grid)},
                             {"bias_kind", to_string(s.bias_kind)},
                             {"bias_strength", s.bias_strength}});
    }
    json tasks = json::array();
    for (const auto& t : c.dataset.tasks) {
        json tj = task_json(t.spec);
        tj["affinity"] = t.affinity;
        tasks.push_back(tj);
    }
    json model = to_json(c.model);
    model.erase("teachers");
    model.erase("tasks");
    model.erase("seed");
    const auto& p = c.dataset.policy;
    return {{"seed", c.seed},
            {"output_dir", c.output_dir},
            {"model", model},
            {"distill",
             {{"alpha", c.distill.alpha},
              {"beta", c.distill.beta},
              {"gamma", c.distill.gamma},
              {"smooth_l1_delta", c.distill.smooth_l1_delta}}},
            {"committee", committee},
            {"dataset",
             {{"seed", c.dataset.seed},
              {"num_train", c.dataset.num_train},
              {"num_val", c.dataset.num_val},
              {"tasks", tasks},
              {"augment", c.dataset.augment},
              {"augment_policy",
               {{"min_scale", p.min_scale}, {"max_scale", p.max_scale}, {"flip", p.flip}, {"jitter", p.jitter}}}}},
            {"stage1", stage_json(c.stage1)},
            {"stage2", stage_json(c.stage2)},
            {"stage1_checkpoint", c.stage1_checkpoint},
            {"skip_stage1", c.skip_stage1}};
}

RunConfig run_config_from_json(const json& j) {
    try {
        check_keys(j,
                   {"seed", "output_dir", "model", "distill", "committee", "dataset", "stage1", "stage2",
                    "stage1_checkpoint", "skip_stage1"},
                   "config");
        RunConfig c;
        read(j, "seed", c.seed);
        read(j, "output_dir", c.output_dir);
        if (j.contains("model")) {
            if (j.at("model").contains("teachers") || j.at("model").contains("tasks")) {
                throw ConfigError("model: teachers and tasks come from the committee and dataset sections");
            }
            c.model = model_config_from_json(j.at("model"));
        }
        if (j.contains("distill")) {
            const json& d = j.at("distill");
            check_keys(d, {"alpha", "beta", "gamma", "smooth_l1_delta"}, "distill");
            read(d, "alpha", c.distill.alpha);
            read(d, "beta", c.distill.beta);
            read(d, "gamma", c.distill.gamma);
            read(d, "smooth_l1_delta", c.distill.smooth_l1_delta);
        }
        if (j.contains("committee")) {
            for (const auto& m : j.at("committee")) {
                CommitteeEntry e;
                const std::string kind = m.value("kind", "synthetic");
                if (kind == "file") {
                    check_keys(m, {"kind", "path"}, "committee");
                    e.kind = CommitteeEntry::Kind::File;
                    e.path = m.at("path").get<std::string>();
                } else if (kind == "synthetic") {
                    check_keys(m, {"kind", "teacher_id", "seed", "channel_dim", "grid", "bias_kind", "bias_strength"},
                               "committee");
                    auto& s = e.synthetic;
                    s.teacher_id = m.at("teacher_id").get<std::string>();
                    read(m, "seed", s.seed);
                    read(m, "channel_dim", s.channel_dim);
                    if (m.contains("grid")) s.grid = grid_from(m.at("grid"));
                    if (m.contains("bias_kind")) s.bias_kind = bias_kind_from_string(m.at("bias_kind").get<std::string>());
                    read(m, "bias_strength", s.bias_strength);
                } else {
                    throw ConfigError("committee: unknown member kind '" + kind + "'");
                }
                c.committee.push_back(std::move(e));
            }
        }
        if (j.contains("dataset")) {
            const json& d = j.at("dataset");
            check_keys(d, {"seed", "num_train", "num_val", "tasks", "augment", "augment_policy"}, "dataset");
            read(d, "seed", c.dataset.seed);
            read(d, "num_train", c.dataset.num_train);
            read(d, "num_val", c.dataset.num_val);
            read(d, "augment", c.dataset.augment);
            if (d.contains("tasks")) {
                for (const auto& t : d.at("tasks")) c.dataset.tasks.push_back({task_from(t), t.value("affinity", "")});
            }
            if (d.contains("augment_policy")) {
                const json& p = d.at("augment_policy");
                check_keys(p, {"min_scale", "max_scale", "flip", "jitter"}, "dataset.augment_policy");
                read(p, "min_scale", c.dataset.policy.min_scale);
                read(p, "max_scale", c.dataset.policy.max_scale);
                read(p, "flip", c.dataset.policy.flip);
                read(p, "jitter", c.dataset.policy.jitter);
            }
        }
        if (j.contains("stage1")) stage_from(j.at("stage1"), c.stage1);
        if (j.contains("stage2")) stage_from(j.at("stage2"), c.stage2);
        read(j, "stage1_checkpoint", c.stage1_checkpoint);
        read(j, "skip_stage1", c.skip_stage1);
        c.model.seed = c.seed;
        c.model.tasks.clear();
        for (const auto& t : c.dataset.tasks) c.model.tasks.push_back(t.spec);
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    RunConfig c = run_config_from_json(j);
    c.validate();
    return c;
}

std::filesystem::path resolve_output_dir(const RunConfig& c) {
    std::filesystem::path p(c.output_dir);
    const char* root = std::getenv("MTD_OUTPUT_ROOT");
    if (p.is_relative() && root && *root) p = std::filesystem::path(root) / p;
    return p;
}

Committee build_committee(const RunConfig& c) {
    Committee out;
    const std::vector<int> levels = select_levels(c.model.depth);
    for (const auto& e : c.committee) {
        if (e.kind == CommitteeEntry::Kind::Synthetic) {
            out.push_back(std::make_shared<SyntheticTeacher>(e.synthetic, c.model.image_size, levels));
        } else {
            out.push_back(std::make_shared<FileTeacher>(e.path, levels));
        }
    }
    return out;
}

std::vector<SyntheticTeacherSpec> synthetic_members(const RunConfig& c) {
    std::vector<SyntheticTeacherSpec> out;
    for (const auto& e : c.committee)
        if (e.kind == CommitteeEntry::Kind::Synthetic) out.push_back(e.synthetic);
    return out;
}

}  // namespace mtd
