#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "hbsl/errors.hpp"
#include "hbsl/log.hpp"

namespace hbsl::data {

/// The six LIAR truthfulness grades.
enum class Grade { pants_fire, false_, barely_true, half_true, mostly_true, true_ };

inline constexpr std::array<std::string_view, 6> kGradeNames = {
    "pants-fire", "false", "barely-true", "half-true", "mostly-true", "true",
};

enum class Label : int { fake = 0, true_ = 1 };

inline std::string_view to_string(Grade g) { return kGradeNames[static_cast<std::size_t>(g)]; }

inline std::optional<Grade> parse_grade(std::string_view s) {
    for (std::size_t i = 0; i < kGradeNames.size(); ++i)
        if (kGradeNames[i] == s) return static_cast<Grade>(i);
    return std::nullopt;
}

/// Only "true" is the True class; the other five grades are Fake.
inline Label binarize_label(Grade g) noexcept { return g == Grade::true_ ? Label::true_ : Label::fake; }

inline Label binarize_label(std::string_view grade) {
    const auto g = parse_grade(grade);
    if (!g) throw DataError("unknown LIAR grade '" + std::string(grade) + "'");
    return binarize_label(*g);
}

struct RawRecord {
    std::string id;
    Grade grade = Grade::false_;
    std::string statement;
};

struct LoadReport {
    std::size_t rows = 0;
    std::size_t kept = 0;
    std::size_t skipped_malformed = 0;
    std::size_t skipped_empty_statement = 0;
    std::size_t skipped_unknown_label = 0;
    std::size_t skipped_duplicate_id = 0;

    std::size_t skipped() const noexcept {
        return skipped_malformed + skipped_empty_statement + skipped_unknown_label + skipped_duplicate_id;
    }

    LoadReport& operator+=(const LoadReport& o) {
        rows += o.rows;
        kept += o.kept;
        skipped_malformed += o.skipped_malformed;
        skipped_empty_statement += o.skipped_empty_statement;
        skipped_unknown_label += o.skipped_unknown_label;
        skipped_duplicate_id += o.skipped_duplicate_id;
        return *this;
    }
};

struct LoadResult {
    std::vector<RawRecord> records;
    LoadReport report;
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        cols.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cols;
}

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Parse one LIAR TSV file: id in column 1, grade in column 2, statement in
/// column 3. Rows that cannot be used are skipped and counted.
inline LoadResult load_liar(const std::filesystem::path& path,
                            std::unordered_set<std::string>* seen_ids = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read LIAR file " + path.string());
    std::unordered_set<std::string> local_seen;
    auto& seen = seen_ids ? *seen_ids : local_seen;

    LoadResult out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        ++out.report.rows;
        const auto cols = detail::split_tabs(line);
        if (cols.size() < 3) {
            ++out.report.skipped_malformed;
            log::warn(path.filename().string() + ":" + std::to_string(line_no) + ": fewer than 3 columns, skipped");
            continue;
        }
        const auto id = detail::trim(cols[0]);
        const auto grade = parse_grade(detail::trim(cols[1]));
        const auto statement = detail::trim(cols[2]);
        if (id.empty()) {
            ++out.report.skipped_malformed;
            continue;
        }
        if (!grade) {
            ++out.report.skipped_unknown_label;
            log::warn(path.filename().string() + ":" + std::to_string(line_no) + ": unknown label '" +
                      std::string(cols[1]) + "', skipped");
            continue;
        }
        if (statement.empty()) {
            ++out.report.skipped_empty_statement;
            continue;
        }
        if (!seen.insert(std::string(id)).second) {
            ++out.report.skipped_duplicate_id;
            continue;
        }
        out.records.push_back(RawRecord{std::string(id), *grade, std::string(statement)});
        ++out.report.kept;
    }
    return out;
}

inline constexpr std::array<std::string_view, 3> kLiarSplits = {"train.tsv", "valid.tsv", "test.tsv"};

/// Pool the official train/valid/test files of a LIAR directory.
inline LoadResult load_liar_dir(const std::filesystem::path& dir) {
    LoadResult out;
    std::unordered_set<std::string> seen;
    bool any = false;
    for (auto name : kLiarSplits) {
        const auto p = dir / name;
        if (!std::filesystem::exists(p)) continue;
        any = true;
        auto part = load_liar(p, &seen);
        out.report += part.report;
        out.records.insert(out.records.end(), std::make_move_iterator(part.records.begin()),
                           std::make_move_iterator(part.records.end()));
    }
    if (!any) throw IoError("no LIAR split files (train.tsv, valid.tsv, test.tsv) in " + dir.string());
    return out;
}

}  // namespace hbsl::data
