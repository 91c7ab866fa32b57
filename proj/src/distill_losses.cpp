// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/distill_losses.hpp"

#include "mtd/errors.hpp"

#include <cmath>

namespace mtd {

void DistillConfig::validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0) throw ConfigError("distill weights alpha, beta, gamma must be >= 0");
    if (!(smooth_l1_delta > 0)) throw ConfigError("smooth_l1_delta must be > 0");
}

namespace {

void require_aligned(const TokenMap& r, const TokenMap& t, const char* where) {
    if (r.grid != t.grid || r.channels() != t.channels()) {
        throw ConfigError(std::string(where) + ": student " + r.values().shape_str() + " vs teacher " +
                          t.values().shape_str());
    }
}

const TaskSpec& spec_for(const std::string& task, const std::vector<TaskSpec>& specs) {
    for (const auto& s : specs)
        if (s.name == task) return s;
    throw ConfigError("no loss weight for task " + task);
}

}  // namespace

Var cosine_loss(const TokenMap& r, const TokenMap& t) {
    require_aligned(r, t, "cosine_loss");
    return ag::cosine_distance(r.tokens, t.tokens);
}

Var smooth_l1_loss(const TokenMap& r, const TokenMap& t, double delta) {
    require_aligned(r, t, "smooth_l1_loss");
    return ag::smooth_l1(r.tokens, t.tokens, delta);
}

DistillTerms distill_loss(const std::vector<MultiLevelFeatures>& student,
                          const std::vector<MultiLevelFeatures>& teachers, const DistillConfig& cfg) {
    if (student.size() != teachers.size()) {
        throw ConfigError("distill_loss: " + std::to_string(student.size()) + " student branches for " +
                          std::to_string(teachers.size()) + " teachers");
    }
    DistillTerms out;
    std::vector<Var> terms;
    for (std::size_t i = 0; i < student.size(); ++i) {
        const auto& s = student[i];
        const auto& t = teachers[i];
        if (s.size() != t.size()) throw ConfigError("distill_loss: level sets differ for teacher " + std::to_string(i));
        std::vector<double> row;
        for (const auto& [level, rep] : s) {
            auto it = t.find(level);
            if (it == t.end()) {
                throw ConfigError("distill_loss: teacher " + std::to_string(i) + " has no level " + std::to_string(level));
            }
            Var pair = ag::add(ag::scale(cosine_loss(rep, it->second), cfg.alpha),
                               ag::scale(smooth_l1_loss(rep, it->second, cfg.smooth_l1_delta), cfg.beta));
            row.push_back(pair.item());
            terms.push_back(pair);
        }
        out.per_teacher_per_level.push_back(std::move(row));
    }
    out.total = terms.empty() ? Var::constant(Tensor(1, 1)) : ag::add_n(terms);
    return out;
}

double joint_loss(double distill, const std::map<std::string, double>& task_losses,
                  const std::vector<TaskSpec>& specs, double gamma) {
    double total = gamma * distill;
    for (const auto& [name, loss] : task_losses) total += spec_for(name, specs).loss_weight * loss;
    return total;
}

Var joint_loss(const Var& distill, const std::map<std::string, Var>& task_losses,
               const std::vector<TaskSpec>& specs, double gamma) {
    std::vector<Var> terms;
    if (gamma != 0.0) terms.push_back(ag::scale(distill, gamma));
    for (const auto& [name, loss] : task_losses) terms.push_back(ag::scale(loss, spec_for(name, specs).loss_weight));
    return terms.empty() ? Var::constant(Tensor(1, 1)) : ag::add_n(terms);
}

bool LossBreakdown::consistent(const std::vector<TaskSpec>& specs, double gamma) const {
    const double expect = joint_loss(distill_total, task_losses, specs, gamma);
    return std::abs(expect - grand_total) <= 1e-9 * std::max(1.0, std::abs(expect));
}

nlohmann::json LossBreakdown::to_json() const {
    return {{"step", step},
            {"distill_total", distill_total},
            {"per_teacher_per_level", per_teacher_per_level},
            {"task_losses", task_losses},
            {"grand_total", grand_total}};
}

LossBreakdown LossBreakdown::from_json(const nlohmann::json& j) {
    LossBreakdown b;
    b.step = j.at("step").get<long>();
    b.distill_total = j.at("distill_total").get<double>();
    b.per_teacher_per_level = j.value("per_teacher_per_level", std::vector<std::vector<double>>{});
    b.task_losses = j.value("task_losses", std::map<std::string, double>{});
    b.grand_total = j.at("grand_total").get<double>();
    return b;
}

}  // namespace mtd
