// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/training.hpp"

#include "mtd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mtd {

using nlohmann::json;

namespace {

SyntheticDatasetSpec split_spec(const RunConfig& c, const char* split, int count) {
    return {c.dataset.seed, count, c.model.image_size, c.dataset.tasks, split};
}

std::vector<MultiLevelFeatures> teacher_features(const Image& image, std::size_t index, const Committee& committee) {
    return committee_forward(image, index, committee);
}

/// Epoch-wise shuffled indices drawn from the data-order stream.
class BatchSampler {
public:
    BatchSampler(std::size_t n, Rng& rng) : order_(n), rng_(rng) { reshuffle(); }

    std::vector<std::size_t> next(int batch) {
        std::vector<std::size_t> out;
        for (int b = 0; b < batch; ++b) {
            if (pos_ == order_.size()) reshuffle();
            out.push_back(order_[pos_++]);
        }
        return out;
    }

private:
    void reshuffle() {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        // Fisher-Yates with explicit draws; std::shuffle is not specified
        // identically across standard libraries.
        for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_() % i]);
        pos_ = 0;
    }

    std::vector<std::size_t> order_;
    Rng& rng_;
    std::size_t pos_ = 0;
};

void add_scaled(std::vector<std::vector<double>>& acc, const std::vector<std::vector<double>>& v, double s) {
    if (acc.empty()) {
        acc = v;
        for (auto& row : acc)
            for (double& x : row) x *= s;
        return;
    }
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = 0; j < v[i].size(); ++j) acc[i][j] += s * v[i][j];
}

StageLog run_stage(const RunConfig& cfg, Student& student, const PreparedData& data, int stage,
                   const StageOptions& options) {
    const StageConfig& sc = stage == 1 ? cfg.stage1 : cfg.stage2;
    const bool joint = stage == 2;
    std::set<ParamGroup> groups{ParamGroup::Stem, ParamGroup::Adapter, ParamGroup::Align};
    if (joint) groups.insert({ParamGroup::Router, ParamGroup::Head});
    if (data.train.size() == 0) throw ConfigError("training split is empty");

    AdamW opt(student.params(), groups, sc.weight_decay);
    opt.zero_grad();
    RunStreams streams(cfg.seed);
    BatchSampler sampler(data.train.size(), streams.data_order);
    const LrSchedule schedule = sc.lr_schedule();
    const auto& specs = cfg.model.tasks;
    const double gamma = joint ? cfg.distill.gamma : 1.0;
    const double inv_b = 1.0 / sc.batch_size;

    StageLog log;
    for (int step = 0; step < sc.steps; ++step) {
        const auto batch = sampler.next(sc.batch_size);
        std::vector<Sample> augmented;
        std::vector<std::vector<MultiLevelFeatures>> aug_features;
        if (cfg.dataset.augment) {
            for (std::size_t i : batch) {
                augmented.push_back(augment(data.train.samples[i], data.train.tasks, cfg.dataset.policy, streams.augmentation));
                aug_features.push_back(teacher_features(augmented.back().image, i, data.committee));
            }
        }
        auto sample_at = [&](std::size_t b) -> const Sample& {
            return cfg.dataset.augment ? augmented[b] : data.train.samples[batch[b]];
        };
        auto features_at = [&](std::size_t b) -> const std::vector<MultiLevelFeatures>& {
            return cfg.dataset.augment ? aug_features[b] : data.train_features[batch[b]];
        };

        std::map<std::string, BinaryBalance> balance;
        if (joint) {
            for (const auto& t : specs) {
                if (t.kind != TaskKind::Saliency) continue;
                std::vector<const TaskLabel*> labels;
                for (std::size_t b = 0; b < batch.size(); ++b) labels.push_back(&sample_at(b).labels.at(t.name));
                balance[t.name] = saliency_balance(labels);
            }
        }

        LossBreakdown rec;
        rec.step = step;
        try {
            for (std::size_t b = 0; b < batch.size(); ++b) {
                const Sample& s = sample_at(b);
                Student::Output out = student.forward(s.image, joint, joint, &streams.router_noise);
                DistillTerms d = distill_loss(out.distill, features_at(b), cfg.distill);
                Var total = d.total;
                if (joint) {
                    std::map<std::string, Var> tl;
                    for (const auto& t : specs) {
                        auto it = balance.find(t.name);
                        tl[t.name] = task_loss(out.predictions.at(t.name), s.labels.at(t.name), t,
                                               it == balance.end() ? nullptr : &it->second);
                    }
                    total = joint_loss(d.total, tl, specs, gamma);
                    for (const auto& [name, v] : tl) rec.task_losses[name] += inv_b * v.item();
                }
                if (!std::isfinite(total.item())) {
                    throw NumericError("non-finite loss at stage " + std::to_string(stage) + " step " +
                                       std::to_string(step));
                }
                total.backward(inv_b);
                rec.distill_total += inv_b * d.total.item();
                add_scaled(rec.per_teacher_per_level, d.per_teacher_per_level, inv_b);
            }
        } catch (const NumericError&) {
            opt.zero_grad();
            if (!options.crash_checkpoint.empty()) {
                save_checkpoint(options.crash_checkpoint, student.config(), cfg.seed, student.params(),
                                CheckpointDType::F64, {{"run_config", to_json(cfg)}, {"stage", stage}, {"step", step}});
            }
            throw;
        }
        rec.grand_total = joint ? joint_loss(rec.distill_total, rec.task_losses, specs, gamma) : rec.distill_total;

        opt.clip(sc.clip);
        const double lr = schedule.at(step);
        opt.step(lr);
        opt.zero_grad();
        log.steps.push_back(rec);
        log.lr.push_back(lr);
        if (options.on_step) options.on_step(rec);
    }
    return log;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::trunc);
    if (!f) throw ConfigError("cannot write " + p.string());
    f << text;
}

std::filesystem::path prepare_dir(const RunConfig& c) {
    const auto dir = resolve_output_dir(c);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
    write_text(dir / "config.json", to_json(c).dump(2) + "\n");
    return dir;
}

json run_extra(const RunConfig& c, int stage, const EvalReport& r) {
    return {{"run_config", to_json(c)}, {"stage", stage}, {"report", r.to_json()}};
}

void write_reports(const std::filesystem::path& dir, const EvalReport& r, bool with_heads) {
    write_text(dir / "report.json", r.to_json().dump(2) + "\n");
    if (!with_heads) return;
    std::ostringstream m, g;
    write_metric_csv(r.metrics, m);
    r.gates.write_csv(g);
    write_text(dir / "metrics.csv", m.str());
    write_text(dir / "gates.csv", g.str());
}

void write_log(const std::filesystem::path& p, const StageLog& log) {
    std::ostringstream os;
    log.write_jsonl(os);
    write_text(p, os.str());
}

}  // namespace

PreparedData prepare_data(const RunConfig& config) {
    PreparedData d;
    d.committee = build_committee(config);
    const auto members = synthetic_members(config);
    d.train = make_synthetic_dataset(split_spec(config, "train", config.dataset.num_train), members);
    d.val = make_synthetic_dataset(split_spec(config, "val", config.dataset.num_val), members);
    for (const auto& t : d.committee) {
        if (t->spec().kind != TeacherSource::File) continue;
        if (config.dataset.augment) {
            throw ConfigError("teacher " + t->spec().teacher_id + ": feature files cannot follow augmented images");
        }
    }
    for (std::size_t i = 0; i < d.train.size(); ++i)
        d.train_features.push_back(teacher_features(d.train.samples[i].image, i, d.committee));
    for (std::size_t i = 0; i < d.val.size(); ++i)
        d.val_features.push_back(teacher_features(d.val.samples[i].image, d.train.size() + i, d.committee));
    return d;
}

std::unique_ptr<Student> make_student(const RunConfig& config) {
    RunStreams streams(config.seed);
    return std::make_unique<Student>(config.model, streams.init);
}

void StageLog::write_jsonl(std::ostream& out) const {
    for (std::size_t i = 0; i < steps.size(); ++i) {
        json j = steps[i].to_json();
        j["lr"] = lr[i];
        out << j.dump() << '\n';
    }
}

StageLog train_stage1(const RunConfig& config, Student& student, const PreparedData& data, const StageOptions& options) {
    return run_stage(config, student, data, 1, options);
}

StageLog train_stage2(const RunConfig& config, Student& student, const PreparedData& data, const StageOptions& options) {
    return run_stage(config, student, data, 2, options);
}

json EvalReport::to_json() const {
    json metrics_json = json::array();
    for (const auto& m : metrics) {
        metrics_json.push_back({{"task", m.task}, {"metric", m.metric}, {"unit", mtd::to_string(m.unit)},
                                {"value", m.defined ? json(m.value) : json(nullptr)}});
    }
    json gates_json = json::array();
    for (const auto& r : gates.rows()) gates_json.push_back({{"task", r.task}, {"level", r.level}, {"mean", r.mean}});
    return {{"metrics", metrics_json},
            {"gates", gates_json},
            {"rep_similarity", {{"per_teacher", rep.per_teacher}, {"average", rep.average}}},
            {"distill_loss", distill_loss},
            {"task_losses", task_losses},
            {"joint_loss", joint_loss}};
}

EvalReport evaluate(const Student& student, const PreparedData& data, const DistillConfig& distill, bool with_heads) {
    if (data.val.size() == 0) throw ConfigError("validation split is empty");
    const auto& specs = student.config().tasks;
    std::vector<TaskMetric> metrics;
    for (const auto& t : specs) metrics.emplace_back(t);
    EvalReport r;
    r.rep.per_teacher.assign(data.committee.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(data.val.size());
    for (std::size_t i = 0; i < data.val.size(); ++i) {
        const Sample& s = data.val.samples[i];
        Student::Output out = student.forward(s.image, with_heads, false, nullptr);
        r.distill_loss += inv_n * distill_loss(out.distill, data.val_features[i], distill).total.item();
        const RepSimilarity rs = rep_similarity(out.distill, data.val_features[i]);
        for (std::size_t k = 0; k < rs.per_teacher.size(); ++k) r.rep.per_teacher[k] += inv_n * rs.per_teacher[k];
        if (!with_heads) continue;
        for (std::size_t t = 0; t < specs.size(); ++t) {
            const Var& pred = out.predictions.at(specs[t].name);
            const TaskLabel& gt = s.labels.at(specs[t].name);
            metrics[t].add(pred.value(), gt);
            r.task_losses[specs[t].name] += inv_n * task_loss(pred, gt, specs[t]).item();
        }
        for (const auto& [task, per_level] : out.gates)
            for (const auto& [level, g] : per_level) r.gates.add(task, level, g.values());
    }
    for (double v : r.rep.per_teacher) r.rep.average += v / static_cast<double>(r.rep.per_teacher.size());
    if (with_heads) {
        for (const auto& m : metrics) r.metrics.push_back(m.result());
        r.joint_loss = joint_loss(r.distill_loss, r.task_losses, specs, 1.0);
    } else {
        r.joint_loss = r.distill_loss;
    }
    return r;
}

PipelineResult run_pipeline(const RunConfig& config, const PreparedData& data) {
    auto student = make_student(config);
    PipelineResult r;
    if (!config.skip_stage1) r.stage1 = train_stage1(config, *student, data);
    r.after_stage1 = evaluate(*student, data, config.distill, false);
    r.stage2 = train_stage2(config, *student, data);
    r.final = evaluate(*student, data, config.distill, true);
    return r;
}

RunConfig ablation_config(const RunConfig& base, const std::string& variant) {
    RunConfig c = base;
    if (variant == "no_tsap") {
        c.model.use_adapters = false;
    } else if (variant == "no_mor" || variant == "addition_fusion") {
        c.model.fusion = FusionMode::Addition;
    } else if (variant == "no_stage1") {
        c.skip_stage1 = true;
    } else if (variant == "no_stage2_distill") {
        c.distill.gamma = 0.0;
    } else {
        std::string names;
        for (const char* v : kAblationVariants) names += std::string(names.empty() ? "" : ", ") + v;
        throw ConfigError("unknown ablation variant '" + variant + "' (expected one of " + names + ")");
    }
    c.output_dir = (std::filesystem::path(base.output_dir) / variant).string();
    return c;
}

RunConfig checkpoint_run_config(const Checkpoint& ckpt) {
    if (!ckpt.extra.contains("run_config")) throw ConfigError("checkpoint carries no run config");
    RunConfig c = run_config_from_json(ckpt.extra.at("run_config"));
    c.validate();
    return c;
}

DistillArtifacts run_distill(RunConfig config) {
    config.validate();
    config.resolve_model();
    const auto dir = prepare_dir(config);
    const PreparedData data = prepare_data(config);
    auto student = make_student(config);
    DistillArtifacts a;
    StageOptions opts;
    opts.crash_checkpoint = (dir / "stage1.last_good.ckpt").string();
    a.log = train_stage1(config, *student, data, opts);
    write_log(dir / "loss_stage1.jsonl", a.log);
    a.report = evaluate(*student, data, config.distill, false);
    a.checkpoint = dir / "stage1.ckpt";
    save_checkpoint(a.checkpoint.string(), student->config(), config.seed, student->params(), CheckpointDType::F64,
                    run_extra(config, 1, a.report));
    write_reports(dir, a.report, false);
    return a;
}

TrainArtifacts run_train(RunConfig config) {
    config.validate();
    if (!config.skip_stage1 && config.stage1_checkpoint.empty()) {
        throw ConfigError("stage 2 needs stage1_checkpoint unless skip_stage1 is set");
    }
    config.resolve_model();
    const auto dir = prepare_dir(config);
    const PreparedData data = prepare_data(config);
    auto student = make_student(config);
    if (!config.skip_stage1) {
        const Checkpoint ckpt = load_checkpoint(config.stage1_checkpoint);
        restore(ckpt, student->params(), {ParamGroup::Stem, ParamGroup::Adapter, ParamGroup::Align});
    }
    TrainArtifacts a;
    StageOptions opts;
    opts.crash_checkpoint = (dir / "stage2.last_good.ckpt").string();
    a.log = train_stage2(config, *student, data, opts);
    write_log(dir / "loss_stage2.jsonl", a.log);
    a.report = evaluate(*student, data, config.distill, true);
    a.checkpoint = dir / "stage2.ckpt";
    save_checkpoint(a.checkpoint.string(), student->config(), config.seed, student->params(), CheckpointDType::F64,
                    run_extra(config, 2, a.report));
    write_reports(dir, a.report, true);
    return a;
}

EvalArtifacts run_eval(const std::string& checkpoint, const std::vector<MetricRow>* baseline,
                       const std::filesystem::path& out_dir) {
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    RunConfig config = checkpoint_run_config(ckpt);
    config.resolve_model();
    if (to_json(config.model) != to_json(ckpt.config)) {
        throw ConfigError("checkpoint model config does not match its embedded run config");
    }
    const PreparedData data = prepare_data(config);
    auto student = make_student(config);
    restore(ckpt, student->params(),
            {ParamGroup::Stem, ParamGroup::Adapter, ParamGroup::Align, ParamGroup::Router, ParamGroup::Head});
    EvalArtifacts a;
    a.report = evaluate(*student, data, config.distill, true);
    if (baseline) {
        a.delta_m = delta_m(a.report.metrics, *baseline, config.model.tasks);
        a.bias = bias_report(a.report.metrics, *baseline, config.model.tasks);
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw ConfigError("cannot create " + out_dir.string() + ": " + ec.message());
    write_reports(out_dir, a.report, true);
    if (baseline) {
        json j = {{"delta_m", *a.delta_m}, {"bias", a.bias->to_json()}};
        write_text(out_dir / "delta_m.json", j.dump(2) + "\n");
    }
    return a;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

AblationArtifacts run_ablation(RunConfig config, const std::string& variant) {
    config.validate();
    config.resolve_model();
    RunConfig other = ablation_config(config, variant);
    other.resolve_model();
    const auto dir = prepare_dir(config);
    write_text(dir / ("config." + variant + ".json"), to_json(other).dump(2) + "\n");
    const PreparedData data = prepare_data(config);
    AblationArtifacts a;
    a.base = run_pipeline(config, data);
    a.variant = run_pipeline(other, data);
    auto row = [&](std::string q, double b, double v) { a.table.push_back({std::move(q), fmt(b), fmt(v)}); };
    row("rep_similarity_after_stage1", a.base.after_stage1.rep.average, a.variant.after_stage1.rep.average);
    row("distill_loss_after_stage1", a.base.after_stage1.distill_loss, a.variant.after_stage1.distill_loss);
    row("final_distill_loss", a.base.final.distill_loss, a.variant.final.distill_loss);
    row("final_joint_loss", a.base.final.joint_loss, a.variant.final.joint_loss);
    for (std::size_t i = 0; i < a.base.final.metrics.size(); ++i) {
        const auto& b = a.base.final.metrics[i];
        row(b.task + "." + b.metric, b.value, a.variant.final.metrics[i].value);
    }
    const int top = config.model.depth;
    for (const auto& g : a.base.final.gates.rows()) {
        if (g.level != top) continue;
        for (std::size_t k = 0; k < g.mean.size(); ++k) {
            const auto& v = a.variant.final.gates;
            double other = std::nan("");
            for (const auto& h : v.rows())
                if (h.task == g.task && h.level == top && k < h.mean.size()) other = h.mean[k];
            row("gate." + g.task + ".top.expert" + std::to_string(k), g.mean[k], other);
        }
    }
    std::ostringstream os;
    os << "quantity,base," << variant << '\n';
    for (const auto& r : a.table) os << r[0] << ',' << r[1] << ',' << r[2] << '\n';
    write_text(dir / ("comparison." + variant + ".csv"), os.str());
    return a;
}

}  // namespace mtd
