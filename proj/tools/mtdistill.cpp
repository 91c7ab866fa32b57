// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 success, 1 configuration or file
// error, 2 numeric failure.

#include "mtd/errors.hpp"
#include "mtd/report.hpp"
#include "mtd/training.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

using namespace mtd;

namespace {

struct RunOverrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
};

void add_run_options(CLI::App* cmd, RunOverrides& o) {
    cmd->add_option("-c,--config", o.config, "run config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "override the run seed");
    cmd->add_option("-o,--output-dir", o.output_dir, "override output_dir");
}

RunConfig load(const RunOverrides& o) {
    RunConfig c = load_run_config(o.config);
    if (o.seed) {
        c.seed = *o.seed;
        c.model.seed = *o.seed;
    }
    if (o.output_dir) c.output_dir = *o.output_dir;
    return c;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    return in;
}

void print_report(const EvalReport& r) {
    std::printf("rep_similarity %.6f\n", r.rep.average);
    std::printf("distill_loss %.6f\n", r.distill_loss);
    for (const auto& m : r.metrics) {
        if (m.defined) std::printf("%s %s %.4f\n", m.task.c_str(), m.metric.c_str(), m.value);
        else std::printf("%s %s undefined\n", m.task.c_str(), m.metric.c_str());
    }
    if (!r.metrics.empty()) std::printf("joint_loss %.6f\n", r.joint_loss);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-teacher distillation for multi-task dense prediction"};
    app.require_subcommand(1);

    RunOverrides distill_o, train_o, ablate_o;
    auto* distill = app.add_subcommand("distill", "stage 1: distil the committee into stem and adapter paths");
    add_run_options(distill, distill_o);

    auto* train = app.add_subcommand("train", "stage 2: joint multi-task training");
    add_run_options(train, train_o);
    std::optional<std::string> stage1_ckpt;
    bool skip_stage1 = false;
    train->add_option("--stage1-checkpoint", stage1_ckpt, "checkpoint written by distill");
    train->add_flag("--skip-stage1", skip_stage1, "start from initialization");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on its validation split");
    std::string eval_ckpt, eval_baseline, eval_out = "eval";
    eval->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
    eval->add_option("--baseline", eval_baseline, "single-task metric CSV for delta_m");
    eval->add_option("-o,--output-dir", eval_out);

    auto* ablate = app.add_subcommand("ablate", "paired base vs variant runs");
    add_run_options(ablate, ablate_o);
    std::string variant;
    ablate->add_option("--variant", variant)
        ->required()
        ->check(CLI::IsMember(std::vector<std::string>(std::begin(kAblationVariants), std::end(kAblationVariants))));

    auto* report = app.add_subcommand("report", "delta_m and bias report from metric CSVs");
    std::string multi_csv, single_csv, report_out;
    report->add_option("--multi", multi_csv)->required()->check(CLI::ExistingFile);
    report->add_option("--single", single_csv)->required()->check(CLI::ExistingFile);
    report->add_option("--json", report_out, "also write the report as JSON");

    auto* plot = app.add_subcommand("plot", "SVG of a loss log (.jsonl) or gate table (.csv)");
    std::string plot_in, plot_out;
    plot->add_option("input", plot_in)->required()->check(CLI::ExistingFile);
    plot->add_option("-o,--output", plot_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Usage errors count as configuration errors.
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*distill) {
            auto a = run_distill(load(distill_o));
            std::printf("stage1 steps %zu\n", a.log.steps.size());
            if (!a.log.steps.empty()) {
                std::printf("distill_loss first %.6f last %.6f\n", a.log.steps.front().distill_total,
                            a.log.steps.back().distill_total);
            }
            print_report(a.report);
            std::printf("checkpoint %s\n", a.checkpoint.string().c_str());
        } else if (*train) {
            RunConfig c = load(train_o);
            if (stage1_ckpt) c.stage1_checkpoint = *stage1_ckpt;
            if (skip_stage1) c.skip_stage1 = true;
            auto a = run_train(c);
            std::printf("stage2 steps %zu\n", a.log.steps.size());
            print_report(a.report);
            std::printf("checkpoint %s\n", a.checkpoint.string().c_str());
        } else if (*eval) {
            std::vector<MetricRow> baseline;
            if (!eval_baseline.empty()) {
                auto in = open_in(eval_baseline);
                baseline = read_metric_csv(in);
            }
            auto a = run_eval(eval_ckpt, eval_baseline.empty() ? nullptr : &baseline, eval_out);
            print_report(a.report);
            if (a.delta_m) std::printf("delta_m %.4f\n", *a.delta_m);
        } else if (*ablate) {
            auto a = run_ablation(load(ablate_o), variant);
            std::printf("%-32s %14s %14s\n", "quantity", "base", variant.c_str());
            for (const auto& r : a.table) std::printf("%-32s %14s %14s\n", r[0].c_str(), r[1].c_str(), r[2].c_str());
        } else if (*report) {
            auto m = open_in(multi_csv);
            auto s = open_in(single_csv);
            const DeltaReport r = report_from_csv(m, s);
            std::printf("delta_m %.4f\n", r.delta_m);
            for (const auto& [task, v] : r.bias.improvement) std::printf("  %s %+.4f\n", task.c_str(), v);
            std::printf("mu %.4f sigma %.4f", r.bias.mu, r.bias.sigma);
            if (r.bias.mu_over_sigma) std::printf(" mu/sigma %.4f", *r.bias.mu_over_sigma);
            std::printf("\n");
            if (!report_out.empty()) {
                std::ofstream out(report_out);
                if (!out) throw ConfigError("cannot write " + report_out);
                out << nlohmann::json{{"delta_m", r.delta_m}, {"bias", r.bias.to_json()}}.dump(2) << '\n';
            }
        } else if (*plot) {
            auto in = open_in(plot_in);
            const bool is_log = plot_in.size() >= 6 && plot_in.substr(plot_in.size() - 6) == ".jsonl";
            const std::string svg = is_log ? loss_curve_svg(read_loss_log(in)) : gate_heatmap_svg(read_gate_csv(in));
            std::ofstream out(plot_out);
            if (!out) throw ConfigError("cannot write " + plot_out);
            out << svg;
        }
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const FeatureFileError& e) {
        std::fprintf(stderr, "feature file error: %s\n", e.what());
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
