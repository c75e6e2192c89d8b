#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hbsl/data/dataset.hpp"
#include "hbsl/errors.hpp"

namespace hbsl::experiment {

/// One node's outcome for one round.
struct RoundReport {
    std::uint32_t run_id = 0;
    std::uint32_t round = 0;
    data::NodeId node_id = 0;
    double test_accuracy = 0.0;
    double mean_train_loss = 0.0;
    std::size_t train_size = 0;
    std::size_t feedback_size = 0;

    friend bool operator==(const RoundReport&, const RoundReport&) = default;
};

inline constexpr const char* kReportCsvHeader =
    "run_id,round,node_id,test_accuracy,mean_train_loss,train_size,feedback_size";

inline std::string to_csv_row(const RoundReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%u,%u,%u,%.6f,%.6f,%zu,%zu", r.run_id, r.round, static_cast<unsigned>(r.node_id),
                  r.test_accuracy, r.mean_train_loss, r.train_size, r.feedback_size);
    return buf;
}

inline std::string to_csv(const std::vector<RoundReport>& reports) {
    std::string out = std::string(kReportCsvHeader) + "\n";
    for (const auto& r : reports) out += to_csv_row(r) + "\n";
    return out;
}

inline std::vector<RoundReport> parse_reports_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) return {};
    if (line != kReportCsvHeader) throw DataError("reports.csv: unexpected header '" + line + "'");
    std::vector<RoundReport> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        RoundReport r;
        unsigned node = 0;
        if (std::sscanf(line.c_str(), "%u,%u,%u,%lf,%lf,%zu,%zu", &r.run_id, &r.round, &node, &r.test_accuracy,
                        &r.mean_train_loss, &r.train_size, &r.feedback_size) != 7) {
            throw DataError("reports.csv line " + std::to_string(line_no) + " is malformed");
        }
        r.node_id = static_cast<data::NodeId>(node);
        out.push_back(r);
    }
    return out;
}

inline std::vector<RoundReport> read_reports_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    return parse_reports_csv(in);
}

}  // namespace hbsl::experiment
