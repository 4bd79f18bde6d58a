#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "advkit/errors.hpp"
#include "advkit/metrics.hpp"

namespace advkit {

enum class ReportFormat { csv, markdown };

namespace detail {

inline std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

inline std::string fixed_opt(const std::optional<double>& v, int decimals) {
    return v ? fixed(*v, decimals) : std::string("n/a");
}

/// Signed percentage with two decimals, Table-4 style ("-8.90%").
inline std::string percent(double fraction) {
    return fixed(fraction * 100.0, 2) + "%";
}

inline std::string percent_opt(const std::optional<double>& v) {
    return v ? percent(*v) : std::string("n/a");
}

inline std::string aldp_cell(const AldpValues& a) {
    return "L0=" + fixed_opt(a.l0, 3) + ";L1=" + fixed_opt(a.l1, 3) + ";L2=" +
           fixed_opt(a.l2, 3) + ";Linf=" + fixed_opt(a.linf, 3);
}

struct Row {
    std::string name;
    std::vector<std::string> cells;
};

inline std::string render(const std::vector<std::string>& columns, const std::vector<Row>& rows,
                          const std::vector<std::string>& provenance, ReportFormat format) {
    std::string out;
    if (format == ReportFormat::csv) {
        for (const auto& p : provenance) out += "# " + p + "\n";
        out += "metric";
        for (const auto& c : columns) out += "," + c;
        out += "\n";
        for (const auto& r : rows) {
            out += r.name;
            for (const auto& cell : r.cells) out += "," + cell;
            out += "\n";
        }
    } else {
        for (const auto& p : provenance) out += "> " + p + "\n";
        if (!provenance.empty()) out += "\n";
        out += "| metric |";
        for (const auto& c : columns) out += " " + c + " |";
        out += "\n|---|";
        for (std::size_t i = 0; i < columns.size(); ++i) out += "---|";
        out += "\n";
        for (const auto& r : rows) {
            out += "| " + r.name + " |";
            for (const auto& cell : r.cells) out += " " + cell + " |";
            out += "\n";
        }
    }
    return out;
}

} // namespace detail

/// One column per experiment, one row per Table-1 metric. Numeric cells
/// are fixed at 3 decimals; the CC row is measured wall time and is the
/// only chronometric content.
inline std::string render_attack_report(
    const std::vector<std::pair<std::string, AttackReport>>& experiments,
    const std::vector<std::string>& provenance, ReportFormat format) {
    if (experiments.empty()) throw InputError("attack report with no experiments");
    using detail::Row;
    std::vector<std::string> columns;
    for (const auto& [name, rep] : experiments) columns.push_back(name);

    std::vector<Row> rows = {{"MR", {}},  {"ACAC", {}}, {"ACTC", {}},
                             {"ALDp", {}}, {"ASS", {}},  {"PSD", {}},
                             {"NTE", {}}, {"RGB", {}},  {"CC", {}}};
    for (const auto& [name, r] : experiments) {
        rows[0].cells.push_back(detail::fixed(r.mr, 3));
        rows[1].cells.push_back(detail::fixed_opt(r.acac, 3));
        rows[2].cells.push_back(detail::fixed_opt(r.actc, 3));
        rows[3].cells.push_back(detail::aldp_cell(r.aldp));
        rows[4].cells.push_back(detail::fixed_opt(r.ass, 3));
        rows[5].cells.push_back(detail::fixed_opt(r.psd, 3));
        rows[6].cells.push_back(detail::fixed_opt(r.nte, 3));
        rows[7].cells.push_back(detail::fixed_opt(r.rgb, 3));
        rows[8].cells.push_back(detail::fixed(r.cc, 3));
    }
    return detail::render(columns, rows, provenance, format);
}

/// One column per experiment, one row per Table-2 metric. Accuracy-family
/// rows render as percentages (CAV keeps its sign); COS uses 4 decimals.
inline std::string render_defense_report(
    const std::vector<std::pair<std::string, DefenseReport>>& experiments,
    const std::vector<std::string>& provenance, ReportFormat format) {
    if (experiments.empty()) throw InputError("defense report with no experiments");
    using detail::Row;
    std::vector<std::string> columns;
    for (const auto& [name, rep] : experiments) columns.push_back(name);

    std::vector<Row> rows = {{"ACC_raw", {}}, {"ACC_defended", {}}, {"CAV", {}},
                             {"CRR", {}},     {"CSR", {}},          {"CCV", {}},
                             {"COS", {}}};
    for (const auto& [name, r] : experiments) {
        rows[0].cells.push_back(detail::percent(r.acc_raw));
        rows[1].cells.push_back(detail::percent(r.acc_defended));
        rows[2].cells.push_back(detail::percent(r.cav));
        rows[3].cells.push_back(detail::percent(r.crr));
        rows[4].cells.push_back(detail::percent(r.csr));
        rows[5].cells.push_back(detail::percent_opt(r.ccv));
        rows[6].cells.push_back(detail::fixed_opt(r.cos, 4));
    }
    return detail::render(columns, rows, provenance, format);
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataFormatError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw DataFormatError("write failure on '" + path + "'");
}

} // namespace advkit
