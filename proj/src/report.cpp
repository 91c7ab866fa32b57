// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/report.hpp"

#include "mtd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <sstream>

namespace mtd {

namespace {

bool lower_by_metric(const std::string& metric) {
    std::string m = metric;
    std::transform(m.begin(), m.end(), m.begin(), [](unsigned char c) { return std::tolower(c); });
    return m == "merr" || m == "rmse";
}

std::string num(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

}  // namespace

DeltaReport report_from_csv(std::istream& multi, std::istream& single) {
    std::vector<std::pair<std::string, bool>> dir_multi, dir_single;
    const auto m = read_metric_csv(multi, &dir_multi);
    const auto s = read_metric_csv(single, &dir_single);
    std::map<std::string, bool> dirs;
    for (const auto& [t, d] : dir_multi) dirs[t] = d;
    for (const auto& [t, d] : dir_single) dirs[t] = d;
    DeltaReport r;
    for (const auto& row : s) {
        TaskSpec spec;
        spec.name = row.task;
        auto it = dirs.find(row.task);
        spec.lower_is_better = it != dirs.end() ? it->second : lower_by_metric(row.metric);
        r.specs.push_back(spec);
    }
    if (m.size() != s.size()) throw ConfigError("multi-task and single-task tables list different task sets");
    r.delta_m = delta_m(m, s, r.specs);
    r.bias = bias_report(m, s, r.specs);
    return r;
}

std::vector<LossBreakdown> read_loss_log(std::istream& in) {
    std::vector<LossBreakdown> out;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            out.push_back(LossBreakdown::from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("loss log line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::vector<GateReport::Row> read_gate_csv(std::istream& in) {
    std::vector<GateReport::Row> rows;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.rfind("task,", 0) == 0) continue;
        std::stringstream ss(line);
        std::string task, level, expert, weight;
        std::getline(ss, task, ',');
        std::getline(ss, level, ',');
        std::getline(ss, expert, ',');
        std::getline(ss, weight, ',');
        try {
            const int l = std::stoi(level);
            const auto k = static_cast<std::size_t>(std::stoi(expert));
            if (rows.empty() || rows.back().task != task || rows.back().level != l) rows.push_back({task, l, {}});
            if (rows.back().mean.size() != k) throw ConfigError("expert ids out of order");
            rows.back().mean.push_back(std::stod(weight));
        } catch (const std::exception& e) {
            throw ConfigError("gate csv line " + std::to_string(n) + ": " + e.what());
        }
    }
    return rows;
}

std::string loss_curve_svg(const std::vector<LossBreakdown>& log) {
    if (log.empty()) throw ConfigError("loss log is empty");
    std::vector<std::pair<std::string, std::vector<double>>> series{{"total", {}}, {"distill", {}}};
    for (const auto& [name, v] : log.front().task_losses) series.push_back({name, {}});
    for (const auto& r : log) {
        series[0].second.push_back(r.grand_total);
        series[1].second.push_back(r.distill_total);
        for (std::size_t s = 2; s < series.size(); ++s) series[s].second.push_back(r.task_losses.at(series[s].first));
    }
    double lo = 1e300, hi = -1e300;
    for (const auto& [name, v] : series)
        for (double x : v)
            if (std::isfinite(x) && x > 0.0) {
                lo = std::min(lo, std::log10(x));
                hi = std::max(hi, std::log10(x));
            }
    if (lo > hi) lo = hi = 0.0;
    if (hi - lo < 1e-9) hi = lo + 1.0;
    const double W = 640, H = 400, L = 60, R = 150, T = 20, B = 40;
    const char* colours[] = {"#000000", "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
       << "\" fill=\"none\" stroke=\"#888\"/>\n";
    os << "<text x=\"" << L << "\" y=\"" << H - 10 << "\" font-size=\"12\">step 0.." << log.back().step
       << "  (log10 loss " << num(lo) << " .. " << num(hi) << ")</text>\n";
    const double n = std::max<std::size_t>(1, log.size() - 1);
    for (std::size_t s = 0; s < series.size(); ++s) {
        os << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << colours[s % 7] << "\" points=\"";
        for (std::size_t i = 0; i < series[s].second.size(); ++i) {
            const double v = series[s].second[i];
            if (!(v > 0.0) || !std::isfinite(v)) continue;
            const double x = L + (W - L - R) * i / n;
            const double y = T + (H - T - B) * (1.0 - (std::log10(v) - lo) / (hi - lo));
            os << x << ',' << y << ' ';
        }
        os << "\"/>\n";
        os << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (s + 1) << "\" font-size=\"12\" fill=\""
           << colours[s % 7] << "\">" << series[s].first << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string gate_heatmap_svg(const std::vector<GateReport::Row>& rows) {
    if (rows.empty()) throw ConfigError("gate table is empty");
    std::size_t experts = 0;
    for (const auto& r : rows) experts = std::max(experts, r.mean.size());
    const double cell = 48, left = 140, top = 30;
    const double W = left + cell * experts + 20, H = top + cell * rows.size() + 20;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t k = 0; k < experts; ++k) {
        os << "<text x=\"" << left + cell * k + 8 << "\" y=\"" << top - 10 << "\" font-size=\"12\">"
           << (k == 0 ? std::string("stem") : "path " + std::to_string(k)) << "</text>\n";
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double y = top + cell * i;
        os << "<text x=\"8\" y=\"" << y + cell / 2 + 4 << "\" font-size=\"12\">" << rows[i].task << " L"
           << rows[i].level << "</text>\n";
        for (std::size_t k = 0; k < rows[i].mean.size(); ++k) {
            const double w = std::clamp(rows[i].mean[k], 0.0, 1.0);
            const int shade = static_cast<int>(std::lround(255 * (1.0 - w)));
            os << "<rect x=\"" << left + cell * k << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
               << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\" stroke=\"#ccc\"/>\n";
            os << "<text x=\"" << left + cell * k + 8 << "\" y=\"" << y + cell / 2 + 4 << "\" font-size=\"11\">"
               << num(rows[i].mean[k]) << "</text>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace mtd
