#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "quadpi/common.hpp"
#include "quadpi/interval.hpp"
#include "quadpi/mathutil.hpp"

namespace quadpi::metrics {

enum class ContainmentKind { training_total, model_variation, measurement_variation };

inline const char* containment_name(ContainmentKind k) {
    switch (k) {
        case ContainmentKind::training_total: return "training_total";
        case ContainmentKind::model_variation: return "model_variation";
        case ContainmentKind::measurement_variation: return "measurement_variation";
    }
    return "?";
}

struct PIQualityReport {
    double picp = 0.0;
    double mpiw_abs = 0.0;
    double mpiw_norm = 0.0;  // 0 when no normalization range was supplied
    long n_samples = 0;
    ContainmentKind containment_kind = ContainmentKind::training_total;

    void validate() const {
        require(picp >= 0.0 && picp <= 1.0, "PIQualityReport: picp out of [0,1]");
        require(mpiw_abs >= 0.0, "PIQualityReport: negative width");
    }
};

// Fraction of observations inside their closed interval [L, U].
inline double picp(const std::vector<PredictionInterval>& intervals, const std::vector<double>& y) {
    require(intervals.size() == y.size(), "picp: length mismatch");
    require(!intervals.empty(), "picp: empty input");
    long inside = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (intervals[i].contains(y[i])) ++inside;
    return static_cast<double>(inside) / static_cast<double>(y.size());
}

// Mean interval width; with a normalization range given, the mean width
// divided by that range.
inline double mpiw(const std::vector<PredictionInterval>& intervals, double normalize_range = 0.0) {
    require(!intervals.empty(), "mpiw: empty input");
    CompensatedSum acc;
    for (const auto& piv : intervals) acc.add(piv.width());
    const double mean = acc.value() / static_cast<double>(intervals.size());
    if (normalize_range == 0.0) return mean;
    require(normalize_range > 0.0, "mpiw: degenerate normalization range");
    return mean / normalize_range;
}

// Pooled containment of per-sample realization collections: model-variation
// scores model predictions at perturbed inputs, measurement-variation scores
// noisy measurements; both against the same anchored intervals.
inline PIQualityReport containment_report(const std::vector<PredictionInterval>& intervals,
                                          const std::vector<std::vector<double>>& realizations,
                                          ContainmentKind kind, double normalize_range = 0.0,
                                          bool per_run_average = false) {
    require(intervals.size() == realizations.size(), "containment_report: length mismatch");
    require(!intervals.empty(), "containment_report: empty input");
    for (const auto& r : realizations)
        require(!r.empty(), "containment_report: a sample has no realizations");

    PIQualityReport report;
    report.containment_kind = kind;

    if (!per_run_average) {
        long inside = 0, total = 0;
        for (std::size_t i = 0; i < intervals.size(); ++i) {
            for (double v : realizations[i]) {
                if (intervals[i].contains(v)) ++inside;
                ++total;
            }
        }
        report.picp = static_cast<double>(inside) / static_cast<double>(total);
        report.n_samples = total;
    } else {
        // Per-run averaging requires a rectangular realization layout.
        const std::size_t runs = realizations.front().size();
        for (const auto& r : realizations)
            require(r.size() == runs, "containment_report: per-run averaging needs equal counts");
        CompensatedSum acc;
        for (std::size_t run = 0; run < runs; ++run) {
            long inside = 0;
            for (std::size_t i = 0; i < intervals.size(); ++i)
                if (intervals[i].contains(realizations[i][run])) ++inside;
            acc.add(static_cast<double>(inside) / static_cast<double>(intervals.size()));
        }
        report.picp = acc.value() / static_cast<double>(runs);
        report.n_samples = static_cast<long>(runs * intervals.size());
    }

    report.mpiw_abs = mpiw(intervals);
    report.mpiw_norm = normalize_range > 0.0 ? report.mpiw_abs / normalize_range : 0.0;
    report.validate();
    return report;
}

// CSV row schema shared by the validation and experiment reports.
inline void write_report_header(std::ostream& os) {
    os << "target,method,kind,picp,mpiw_abs,mpiw_norm,n\n";
}

inline void write_report_row(std::ostream& os, const std::string& target, const std::string& method,
                             const std::string& kind, const PIQualityReport& r) {
    os << target << "," << method << "," << kind << "," << format_double(r.picp) << ","
       << format_double(r.mpiw_abs) << "," << format_double(r.mpiw_norm) << "," << r.n_samples
       << "\n";
}

}  // namespace quadpi::metrics
