#pragma once

#include <Eigen/Dense>

#include <array>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "quadpi/common.hpp"
#include "quadpi/features.hpp"
#include "quadpi/mathutil.hpp"

namespace quadpi {

// Row-major storage so that one sample's channels are contiguous in memory.
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum TargetIndex : int { kFx = 0, kFy, kFz, kMx, kMy, kMz, kTargetCount };

inline const std::array<std::string, kTargetCount>& target_names() {
    static const std::array<std::string, kTargetCount> names = {"F_x", "F_y", "F_z",
                                                                "M_x", "M_y", "M_z"};
    return names;
}

inline int target_index(std::string_view name) {
    const auto& names = target_names();
    for (int i = 0; i < kTargetCount; ++i)
        if (names[static_cast<std::size_t>(i)] == name) return i;
    return kTargetCount;
}

// Raw state channel layout used in datasets and CSV files.
inline const std::array<std::string, 13>& raw_state_names() {
    static const std::array<std::string, 13> names = {"u",   "v",     "w",     "p",       "q",
                                                      "r",   "phi",   "theta", "psi",     "omega_1",
                                                      "omega_2", "omega_3", "omega_4"};
    return names;
}

inline Eigen::RowVectorXd raw_state_row(const QuadState& s) {
    Eigen::RowVectorXd row(13);
    row << s.u, s.v, s.w, s.p, s.q, s.r, s.phi, s.theta, s.psi, s.omega[0], s.omega[1], s.omega[2],
        s.omega[3];
    return row;
}

inline QuadState raw_state_from_row(const Eigen::RowVectorXd& row, int s_r) {
    QuadState s;
    s.u = row(0);
    s.v = row(1);
    s.w = row(2);
    s.p = row(3);
    s.q = row(4);
    s.r = row(5);
    s.phi = row(6);
    s.theta = row(7);
    s.psi = row(8);
    s.omega = {row(9), row(10), row(11), row(12)};
    s.s_r = s_r;
    return s;
}

// A block of flight samples: raw states, derived features and the six
// force/moment targets, plus provenance for reproducibility bookkeeping.
struct Dataset {
    Eigen::VectorXd timestamps;  // [s]
    RowMatrixXd raw;             // N x 13 raw state channels
    RowMatrixXd features;        // N x 19 derived input channels
    RowMatrixXd targets;         // N x 6 forces [N] and moments [N m]
    std::string provenance;      // maneuver id + seed
    std::string role;            // "train" | "validation" | ...
    double band = 0.0;           // nominal airspeed band tag [m/s]
    int s_r = 1;

    Eigen::Index rows() const { return features.rows(); }

    void validate() const {
        const Eigen::Index n = features.rows();
        require(raw.rows() == n && targets.rows() == n && timestamps.size() == n,
                "Dataset: row counts disagree across blocks");
        require(features.cols() == kFeatureCount, "Dataset: feature column count mismatch");
        require(raw.cols() == 13, "Dataset: raw column count mismatch");
        require(targets.cols() == kTargetCount, "Dataset: target column count mismatch");
        require(timestamps.allFinite() && raw.allFinite() && features.allFinite() &&
                    targets.allFinite(),
                "Dataset: non-finite entry");
    }

    QuadState state_at(Eigen::Index i) const { return raw_state_from_row(raw.row(i), s_r); }
};

// Vertical concatenation preserving sample order of the inputs.
inline Dataset concat(const std::vector<Dataset>& parts) {
    require(!parts.empty(), "concat: no datasets given");
    Eigen::Index n = 0;
    for (const auto& d : parts) n += d.rows();
    Dataset out;
    out.timestamps.resize(n);
    out.raw.resize(n, 13);
    out.features.resize(n, kFeatureCount);
    out.targets.resize(n, kTargetCount);
    out.s_r = parts.front().s_r;
    out.band = parts.front().band;
    out.role = parts.front().role;
    Eigen::Index at = 0;
    std::string prov;
    for (const auto& d : parts) {
        const Eigen::Index m = d.rows();
        out.timestamps.segment(at, m) = d.timestamps;
        out.raw.middleRows(at, m) = d.raw;
        out.features.middleRows(at, m) = d.features;
        out.targets.middleRows(at, m) = d.targets;
        if (!prov.empty()) prov += ";";
        prov += d.provenance;
        at += m;
    }
    out.provenance = prov;
    return out;
}

// CSV layout: time, 13 raw channels, 19 feature channels, 6 target channels.
// UTF-8, '.' decimal separator, LF line endings, shortest round-trip doubles.
inline void write_csv(const Dataset& d, std::ostream& os) {
    os << "time";
    for (const auto& n : raw_state_names()) os << "," << n;
    for (const auto& n : feature_names()) os << "," << n;
    for (const auto& n : target_names()) os << "," << n;
    os << "\n";
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        os << format_double(d.timestamps(i));
        for (Eigen::Index j = 0; j < 13; ++j) os << "," << format_double(d.raw(i, j));
        for (Eigen::Index j = 0; j < kFeatureCount; ++j) os << "," << format_double(d.features(i, j));
        for (Eigen::Index j = 0; j < kTargetCount; ++j) os << "," << format_double(d.targets(i, j));
        os << "\n";
    }
}

inline void write_csv(const Dataset& d, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    write_csv(d, f);
    if (!f) throw IoError("write failed: " + path);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline Dataset read_csv(std::istream& is, const std::string& origin = "<stream>") {
    std::string header;
    if (!std::getline(is, header)) throw IoError("empty dataset file: " + origin);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    const auto cols = split_csv_line(header);
    const std::size_t expected = 1 + 13 + kFeatureCount + kTargetCount;
    if (cols.size() != expected)
        throw IoError(origin + ": expected " + std::to_string(expected) + " columns, got " +
                      std::to_string(cols.size()));

    std::vector<std::array<double, 1 + 13 + kFeatureCount + kTargetCount>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != expected)
            throw IoError(origin + ": bad field count at data row " + std::to_string(rows.size() + 1));
        std::array<double, 1 + 13 + kFeatureCount + kTargetCount> vals{};
        for (std::size_t j = 0; j < expected; ++j) vals[j] = parse_double(fields[j]);
        rows.push_back(vals);
    }

    Dataset d;
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    d.timestamps.resize(n);
    d.raw.resize(n, 13);
    d.features.resize(n, kFeatureCount);
    d.targets.resize(n, kTargetCount);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& vals = rows[static_cast<std::size_t>(i)];
        std::size_t at = 0;
        d.timestamps(i) = vals[at++];
        for (Eigen::Index j = 0; j < 13; ++j) d.raw(i, j) = vals[at++];
        for (Eigen::Index j = 0; j < kFeatureCount; ++j) d.features(i, j) = vals[at++];
        for (Eigen::Index j = 0; j < kTargetCount; ++j) d.targets(i, j) = vals[at++];
    }
    d.provenance = origin;
    return d;
}

inline Dataset read_csv_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open dataset: " + path);
    return read_csv(f, path);
}

}  // namespace quadpi
