#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hbsl/errors.hpp"
#include "hbsl/experiment/report.hpp"

namespace hbsl::experiment {

/// Final-round accuracy per (run, node) with the three table averages:
/// per node over runs, per run over nodes, and the grand mean of all cells.
struct Summary {
    std::vector<std::uint32_t> runs;
    std::vector<data::NodeId> nodes;
    std::map<std::pair<std::uint32_t, data::NodeId>, double> cells;
    std::map<data::NodeId, double> node_mean;
    std::map<std::uint32_t, double> run_mean;
    double grand_mean = 0.0;

    std::size_t cell_count() const noexcept { return cells.size(); }
};

/// Uses each (run, node)'s last reported round.
inline Summary aggregate(const std::vector<RoundReport>& reports) {
    if (reports.empty()) throw EvaluationError("no reports found");
    std::map<std::pair<std::uint32_t, data::NodeId>, const RoundReport*> last;
    for (const auto& r : reports) {
        auto& slot = last[{r.run_id, r.node_id}];
        if (!slot || r.round > slot->round) slot = &r;
    }
    Summary s;
    std::set<std::uint32_t> runs;
    std::set<data::NodeId> nodes;
    std::map<data::NodeId, std::pair<double, std::size_t>> by_node;
    std::map<std::uint32_t, std::pair<double, std::size_t>> by_run;
    double total = 0.0;
    for (const auto& [key, r] : last) {
        s.cells[key] = r->test_accuracy;
        runs.insert(key.first);
        nodes.insert(key.second);
        by_node[key.second].first += r->test_accuracy;
        ++by_node[key.second].second;
        by_run[key.first].first += r->test_accuracy;
        ++by_run[key.first].second;
        total += r->test_accuracy;
    }
    s.runs.assign(runs.begin(), runs.end());
    s.nodes.assign(nodes.begin(), nodes.end());
    for (const auto& [n, acc] : by_node) s.node_mean[n] = acc.first / double(acc.second);
    for (const auto& [r, acc] : by_run) s.run_mean[r] = acc.first / double(acc.second);
    s.grand_mean = total / double(last.size());
    return s;
}

inline constexpr const char* kSummaryCsvHeader = "scope,run_id,node_id,accuracy";

inline std::string to_csv(const Summary& s) {
    std::string out = std::string(kSummaryCsvHeader) + "\n";
    char buf[96];
    for (const auto& [key, acc] : s.cells) {
        std::snprintf(buf, sizeof(buf), "cell,%u,%u,%.6f\n", key.first, unsigned(key.second), acc);
        out += buf;
    }
    for (const auto& [r, acc] : s.run_mean) {
        std::snprintf(buf, sizeof(buf), "run_mean,%u,,%.6f\n", r, acc);
        out += buf;
    }
    for (const auto& [n, acc] : s.node_mean) {
        std::snprintf(buf, sizeof(buf), "node_mean,,%u,%.6f\n", unsigned(n), acc);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "grand_mean,,,%.6f\n", s.grand_mean);
    return out + buf;
}

namespace detail {

inline std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * v);
    return buf;
}

inline std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }

inline std::string signed_points(double d) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+.2f", 100.0 * d);
    return buf;
}

}  // namespace detail

/// Runs x nodes table with average row and column, as percentages.
inline std::string render_table(const Summary& s, const std::string& title) {
    constexpr std::size_t w = 9;
    std::size_t label_w = std::max<std::size_t>(title.size(), 7);
    if (!s.runs.empty()) label_w = std::max(label_w, 4 + std::to_string(s.runs.back()).size());
    std::string out = title + std::string(label_w - title.size(), ' ');
    for (auto n : s.nodes) out += detail::pad("Node " + std::to_string(n), w);
    out += detail::pad("Average", w + 1) + "\n";
    for (auto r : s.runs) {
        std::string row = "Run " + std::to_string(r);
        row += std::string(label_w > row.size() ? label_w - row.size() : 0, ' ');
        for (auto n : s.nodes) {
            auto it = s.cells.find({r, n});
            row += detail::pad(it == s.cells.end() ? "-" : detail::pct(it->second), w);
        }
        out += row + detail::pad(detail::pct(s.run_mean.at(r)), w + 1) + "\n";
    }
    std::string avg = "Average";
    avg += std::string(label_w > avg.size() ? label_w - avg.size() : 0, ' ');
    for (auto n : s.nodes) avg += detail::pad(detail::pct(s.node_mean.at(n)), w);
    return out + avg + detail::pad(detail::pct(s.grand_mean), w + 1) + "\n";
}

/// Side-by-side per-run and per-node means of two experiments with the
/// difference (second minus first) in points.
inline std::string render_comparison(const Summary& a, const std::string& name_a, const Summary& b,
                                     const std::string& name_b) {
    constexpr std::size_t w = 12;
    std::string out = detail::pad("", 10) + detail::pad(name_a, w) + detail::pad(name_b, w) + detail::pad("delta", w) + "\n";
    auto line = [&](const std::string& label, std::optional<double> x, std::optional<double> y) {
        std::string row = label + std::string(label.size() < 10 ? 10 - label.size() : 0, ' ');
        row += detail::pad(x ? detail::pct(*x) : "-", w) + detail::pad(y ? detail::pct(*y) : "-", w);
        row += detail::pad(x && y ? detail::signed_points(*y - *x) : "-", w);
        out += row + "\n";
    };
    auto find = [](const auto& m, auto k) -> std::optional<double> {
        auto it = m.find(k);
        return it == m.end() ? std::nullopt : std::optional<double>(it->second);
    };
    std::set<std::uint32_t> runs(a.runs.begin(), a.runs.end());
    runs.insert(b.runs.begin(), b.runs.end());
    for (auto r : runs) line("Run " + std::to_string(r), find(a.run_mean, r), find(b.run_mean, r));
    std::set<data::NodeId> nodes(a.nodes.begin(), a.nodes.end());
    nodes.insert(b.nodes.begin(), b.nodes.end());
    for (auto n : nodes) line("Node " + std::to_string(n), find(a.node_mean, n), find(b.node_mean, n));
    line("Average", a.grand_mean, b.grand_mean);
    return out;
}

}  // namespace hbsl::experiment
