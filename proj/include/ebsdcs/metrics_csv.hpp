#ifndef EBSDCS_METRICS_CSV_HPP
#define EBSDCS_METRICS_CSV_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ebsdcs/errors.hpp"
#include "ebsdcs/map_image.hpp"

namespace ebsdcs {

/// One evaluated reconstruction: quality against ground truth plus the
/// estimated time the subsampled scan would have taken.
struct MetricsRecord {
    double sampling_ratio = 1.0;
    MapKind map_kind = MapKind::BandContrast;
    std::uint64_t seed = 0;
    double ssim = 1.0;
    double psnr_db = std::numeric_limits<double>::infinity();
    double wall_time_s = 0.0;
    double estimated_acquisition_s = 0.0;
};

inline constexpr const char* kMetricsCsvHeader =
    "sampling_ratio,map_kind,seed,ssim,psnr_db,wall_time_s,estimated_acquisition_s";

namespace detail {

inline std::string format_real(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

inline double parse_real(const std::string& field) {
    if (field == "inf") return std::numeric_limits<double>::infinity();
    if (field == "-inf") return -std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(field, &used);
    } catch (const std::exception&) {
        throw FormatError("invalid real field '" + field + "'");
    }
    if (used != field.size()) throw FormatError("invalid real field '" + field + "'");
    return v;
}

} // namespace detail

inline std::string format_metrics_row(const MetricsRecord& r) {
    std::string row = detail::format_real(r.sampling_ratio);
    row += ',';
    row += to_string(r.map_kind);
    row += ',';
    row += std::to_string(r.seed);
    for (double v : {r.ssim, r.psnr_db, r.wall_time_s, r.estimated_acquisition_s}) {
        row += ',';
        row += detail::format_real(v);
    }
    return row;
}

inline void write_metrics_csv(const std::vector<MetricsRecord>& records,
                              const std::filesystem::path& path) {
    if (records.empty()) throw DomainError("refusing to write an empty metrics table");
    detail::write_atomically(
        path,
        [&](std::ostream& out) {
            out << kMetricsCsvHeader << '\n';
            for (const auto& r : records) out << format_metrics_row(r) << '\n';
        },
        false);
}

inline std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open for reading");
    std::string line;
    if (!std::getline(in, line) || line != kMetricsCsvHeader)
        throw FormatError(path.string() + ": missing or unexpected metrics header");

    std::vector<MetricsRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 7) throw FormatError(path.string() + ": expected 7 fields per row");
        MetricsRecord r;
        r.sampling_ratio = detail::parse_real(fields[0]);
        r.map_kind = parse_map_kind(fields[1]);
        r.seed = std::stoull(fields[2]);
        r.ssim = detail::parse_real(fields[3]);
        r.psnr_db = detail::parse_real(fields[4]);
        r.wall_time_s = detail::parse_real(fields[5]);
        r.estimated_acquisition_s = detail::parse_real(fields[6]);
        records.push_back(r);
    }
    return records;
}

} // namespace ebsdcs

#endif
