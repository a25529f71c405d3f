#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quadpi/datagen.hpp"
#include "quadpi/dataset.hpp"
#include "quadpi/metrics.hpp"
#include "quadpi/pi.hpp"
#include "quadpi/polyreg.hpp"

namespace quadpi::harness {

enum class Method { polynomial, bootstrap, quality_driven };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::polynomial: return "polynomial";
        case Method::bootstrap: return "bootstrap";
        case Method::quality_driven: return "quality_driven";
    }
    return "?";
}

inline Method method_from_name(const std::string& n) {
    if (n == "polynomial") return Method::polynomial;
    if (n == "bootstrap") return Method::bootstrap;
    if (n == "quality_driven") return Method::quality_driven;
    throw InvalidInputError("unknown method '" + n + "'");
}

struct TargetModels {
    std::optional<poly::PolynomialModel> polynomial;
    std::optional<pi::NetworkEnsemble> bootstrap;
    std::optional<pi::NetworkEnsemble> quality_driven;
};

using ModelSet = std::array<TargetModels, kTargetCount>;

struct IdentifyConfig {
    std::vector<Method> methods{Method::polynomial, Method::bootstrap, Method::quality_driven};
    std::vector<int> targets{kFx, kFy, kFz, kMx, kMy, kMz};
    std::map<int, std::string> pool_grammars;              // per target
    std::map<int, std::vector<std::string>> ann_inputs;    // per target
    poly::StepwiseCriteria stepwise;
    nn::TrainConfig net_cfg;         // loss field is set per method internally
    pi::EnsembleTrainOptions ensemble;
    std::uint64_t master_seed = 0;
    unsigned jobs = 0;
};

struct IdentifySummary {
    // per (target, method): one status line; polynomial rows carry term/R2 info
    std::vector<std::string> lines;
    bool any_failed = false;
};

// Identifies the requested models on the (already noise-contaminated)
// training data. Failures on one target are recorded and do not abort the
// remaining fits.
inline IdentifySummary identify_models(const Dataset& train, const IdentifyConfig& cfg,
                                       ModelSet& out) {
    IdentifySummary summary;
    for (int target : cfg.targets) {
        for (Method m : cfg.methods) {
            const std::string label =
                target_names()[static_cast<std::size_t>(target)] + std::string("/") + method_name(m);
            try {
                const std::uint64_t seed =
                    cfg.master_seed + 7919ull * static_cast<std::uint64_t>(target) +
                    104729ull * static_cast<std::uint64_t>(static_cast<int>(m));
                switch (m) {
                    case Method::polynomial: {
                        const auto it = cfg.pool_grammars.find(target);
                        require(it != cfg.pool_grammars.end(),
                                "identify: no candidate pool for " + label);
                        const auto pool = poly::expand_pool(it->second);
                        auto model = poly::stepwise_fit(pool, train, target, cfg.stepwise);
                        std::string line = label + ": terms";
                        for (std::size_t j = 0; j < model.terms.size(); ++j) {
                            line += " " + poly::format_term(model.terms[j]);
                        }
                        line += " r2=" + format_double(model.r2);
                        summary.lines.push_back(line);
                        out[static_cast<std::size_t>(target)].polynomial = std::move(model);
                        break;
                    }
                    case Method::bootstrap: {
                        const auto it = cfg.ann_inputs.find(target);
                        require(it != cfg.ann_inputs.end(), "identify: no ANN inputs for " + label);
                        const auto sel = pi::InputSelection::parse(it->second);
                        nn::TrainConfig net_cfg = cfg.net_cfg;
                        net_cfg.loss = nn::LossKind::mse;
                        pi::EnsembleTrainOptions opt = cfg.ensemble;
                        opt.base_seed = seed;
                        opt.jobs = cfg.jobs;
                        out[static_cast<std::size_t>(target)].bootstrap =
                            pi::train_bootstrap_ensemble(train, target, sel, net_cfg, opt);
                        summary.lines.push_back(label + ": ensemble of " +
                                                std::to_string(opt.ensemble_size) +
                                                " + variance net");
                        break;
                    }
                    case Method::quality_driven: {
                        const auto it = cfg.ann_inputs.find(target);
                        require(it != cfg.ann_inputs.end(), "identify: no ANN inputs for " + label);
                        const auto sel = pi::InputSelection::parse(it->second);
                        nn::TrainConfig net_cfg = cfg.net_cfg;
                        net_cfg.loss = nn::LossKind::quality_driven;
                        pi::EnsembleTrainOptions opt = cfg.ensemble;
                        opt.base_seed = seed;
                        opt.jobs = cfg.jobs;
                        out[static_cast<std::size_t>(target)].quality_driven =
                            pi::train_qd_ensemble(train, target, sel, net_cfg, opt);
                        summary.lines.push_back(label + ": ensemble of " +
                                                std::to_string(opt.ensemble_size));
                        break;
                    }
                }
            } catch (const Error& e) {
                summary.lines.push_back(label + ": FAILED: " + e.what());
                summary.any_failed = true;
            }
        }
    }
    return summary;
}

// Anchored intervals for one (target, method) over a feature block.
inline std::vector<PredictionInterval> intervals_for(const TargetModels& models, Method m,
                                                     const RowMatrixXd& features, double alpha,
                                                     pi::QdAggregation qd_agg) {
    switch (m) {
        case Method::polynomial:
            require(models.polynomial.has_value(), "intervals_for: polynomial model missing");
            return poly::poly_pi_batch(*models.polynomial, features, alpha);
        case Method::bootstrap: {
            require(models.bootstrap.has_value(), "intervals_for: bootstrap ensemble missing");
            const auto& ens = *models.bootstrap;
            return pi::bootstrap_pi_batch(ens, ens.inputs.transform(features), alpha);
        }
        case Method::quality_driven: {
            require(models.quality_driven.has_value(), "intervals_for: qd ensemble missing");
            const auto& ens = *models.quality_driven;
            return pi::qd_pi_batch(ens, ens.inputs.transform(features), qd_agg, alpha);
        }
    }
    throw InvalidInputError("intervals_for: unknown method");
}

// Point predictions for one (target, method) over a feature block.
inline Eigen::VectorXd predictions_for(const TargetModels& models, Method m,
                                       const RowMatrixXd& features, double alpha,
                                       pi::QdAggregation qd_agg) {
    switch (m) {
        case Method::polynomial: {
            const auto& model = *models.polynomial;
            Eigen::VectorXd y_hat(features.rows());
            for (Eigen::Index i = 0; i < features.rows(); ++i)
                y_hat(i) = model.predict(features.row(i).data());
            return y_hat;
        }
        case Method::bootstrap: {
            const auto& ens = *models.bootstrap;
            Eigen::VectorXd y_hat, s2;
            pi::ensemble_moments_batch(ens, ens.inputs.transform(features), y_hat, s2);
            return y_hat;
        }
        case Method::quality_driven: {
            const auto& ens = *models.quality_driven;
            const auto pis = pi::qd_pi_batch(ens, ens.inputs.transform(features), qd_agg, alpha);
            Eigen::VectorXd y_hat(static_cast<Eigen::Index>(pis.size()));
            for (std::size_t i = 0; i < pis.size(); ++i)
                y_hat(static_cast<Eigen::Index>(i)) = pis[i].y_hat;
            return y_hat;
        }
    }
    throw InvalidInputError("predictions_for: unknown method");
}

struct ValidationRun {
    std::vector<Method> methods{Method::polynomial, Method::bootstrap, Method::quality_driven};
    std::vector<int> targets{kFx, kFy, kFz, kMx, kMy, kMz};
    int n_realizations = 100;  // desk default; the reference protocol uses 1000
    double alpha = 0.05;
    std::uint64_t master_seed = 0;
    pi::QdAggregation qd_aggregation = pi::QdAggregation::mean;
    unsigned jobs = 0;

    void validate() const {
        require(n_realizations >= 1, "ValidationRun: n_realizations must be >= 1");
        require(alpha > 0.0 && alpha < 1.0, "ValidationRun: alpha must lie in (0,1)");
    }
};

struct ReportRow {
    int target = 0;
    Method method = Method::polynomial;
    std::string kind;
    metrics::PIQualityReport report;
};

struct ExperimentReport {
    std::vector<ReportRow> rows;
    // Fig.-12-style per-sample polynomial model-uncertainty terms keyed by
    // (target, band group); empty for the numerical-validation experiment.
    std::map<std::string, std::map<int, std::vector<double>>> poly_uncertainty;

    const metrics::PIQualityReport* find(int target, Method m, const std::string& kind) const {
        for (const auto& r : rows)
            if (r.target == target && r.method == m && r.kind == kind) return &r.report;
        return nullptr;
    }
};

// Monte Carlo numerical validation: models were identified on the noisy
// training split beforehand; intervals are anchored at the clean validation
// inputs, then each realization injects fresh input and measurement noise and
// the anchored intervals are scored against the resulting model predictions
// (model variation) and noisy measurements (measurement variation).
inline ExperimentReport run_numerical_validation(const ValidationRun& cfg, const ModelSet& models,
                                                 const Dataset& train_noisy,
                                                 const Dataset& validation_clean,
                                                 const datagen::VehicleParams& vehicle,
                                                 const datagen::NoiseSpec& noise) {
    cfg.validate();
    train_noisy.validate();
    validation_clean.validate();

    struct Cell {
        std::vector<PredictionInterval> anchored;
        long inside_model = 0;
        long inside_meas = 0;
    };
    std::map<std::pair<int, int>, Cell> cells;

    ExperimentReport report;
    const Eigen::Index n_val = validation_clean.rows();

    // Training-column totals plus anchored validation intervals.
    for (int target : cfg.targets) {
        const auto& tm = models[static_cast<std::size_t>(target)];
        for (Method m : cfg.methods) {
            const auto train_pis =
                intervals_for(tm, m, train_noisy.features, cfg.alpha, cfg.qd_aggregation);
            std::vector<double> y_train(static_cast<std::size_t>(train_noisy.rows()));
            for (Eigen::Index i = 0; i < train_noisy.rows(); ++i)
                y_train[static_cast<std::size_t>(i)] = train_noisy.targets(i, target);
            const double train_range = train_noisy.targets.col(target).maxCoeff() -
                                       train_noisy.targets.col(target).minCoeff();
            metrics::PIQualityReport tr;
            tr.containment_kind = metrics::ContainmentKind::training_total;
            tr.picp = metrics::picp(train_pis, y_train);
            tr.mpiw_abs = metrics::mpiw(train_pis);
            tr.mpiw_norm = train_range > 0.0 ? tr.mpiw_abs / train_range : 0.0;
            tr.n_samples = static_cast<long>(y_train.size());
            report.rows.push_back({target, m, metrics::containment_name(tr.containment_kind), tr});

            Cell cell;
            cell.anchored =
                intervals_for(tm, m, validation_clean.features, cfg.alpha, cfg.qd_aggregation);
            cells.emplace(std::make_pair(target, static_cast<int>(m)), std::move(cell));
        }
    }

    // Per-realization containment counts, reduced in realization order.
    struct RealizationCounts {
        std::map<std::pair<int, int>, std::pair<long, long>> inside;  // (model, meas)
    };
    std::vector<RealizationCounts> per_real(static_cast<std::size_t>(cfg.n_realizations));

    parallel_for(
        static_cast<std::size_t>(cfg.n_realizations),
        [&](std::size_t r) {
            const std::uint64_t seed = cfg.master_seed ^ static_cast<std::uint64_t>(r);
            const Dataset noisy = datagen::inject_noise(validation_clean, vehicle, noise, seed);
            RealizationCounts rc;
            for (int target : cfg.targets) {
                const auto& tm = models[static_cast<std::size_t>(target)];
                for (Method m : cfg.methods) {
                    const auto& cell = cells.at({target, static_cast<int>(m)});
                    const Eigen::VectorXd preds =
                        predictions_for(tm, m, noisy.features, cfg.alpha, cfg.qd_aggregation);
                    long in_model = 0, in_meas = 0;
                    for (Eigen::Index i = 0; i < n_val; ++i) {
                        const auto& piv = cell.anchored[static_cast<std::size_t>(i)];
                        if (piv.contains(preds(i))) ++in_model;
                        if (piv.contains(noisy.targets(i, target))) ++in_meas;
                    }
                    rc.inside[{target, static_cast<int>(m)}] = {in_model, in_meas};
                }
            }
            per_real[r] = std::move(rc);
        },
        cfg.jobs);

    for (const auto& rc : per_real) {
        for (const auto& [key, counts] : rc.inside) {
            auto& cell = cells.at(key);
            cell.inside_model += counts.first;
            cell.inside_meas += counts.second;
        }
    }

    for (int target : cfg.targets) {
        const double val_range = validation_clean.targets.col(target).maxCoeff() -
                                 validation_clean.targets.col(target).minCoeff();
        for (Method m : cfg.methods) {
            const auto& cell = cells.at({target, static_cast<int>(m)});
            const long total = static_cast<long>(n_val) * cfg.n_realizations;
            const double mpiw_abs = metrics::mpiw(cell.anchored);

            metrics::PIQualityReport mv;
            mv.containment_kind = metrics::ContainmentKind::model_variation;
            mv.picp = static_cast<double>(cell.inside_model) / static_cast<double>(total);
            mv.mpiw_abs = mpiw_abs;
            mv.mpiw_norm = val_range > 0.0 ? mpiw_abs / val_range : 0.0;
            mv.n_samples = total;
            report.rows.push_back({target, m, metrics::containment_name(mv.containment_kind), mv});

            metrics::PIQualityReport ms = mv;
            ms.containment_kind = metrics::ContainmentKind::measurement_variation;
            ms.picp = static_cast<double>(cell.inside_meas) / static_cast<double>(total);
            report.rows.push_back({target, m, metrics::containment_name(ms.containment_kind), ms});
        }
    }
    return report;
}

struct InterpExtrapConfig {
    std::vector<Method> methods{Method::polynomial, Method::bootstrap, Method::quality_driven};
    std::vector<int> targets{kFx, kFy, kFz, kMx, kMy, kMz};
    double alpha = 0.05;
    pi::QdAggregation qd_aggregation = pi::QdAggregation::mean;
};

// Band-holdout sensitivity study: models identified on the identification
// bands are scored on each band group; the polynomial rows also collect the
// per-sample model-uncertainty term (second term of the analytic variance).
inline ExperimentReport run_interp_extrap(const InterpExtrapConfig& cfg, const ModelSet& models,
                                          const Dataset& identification, const Dataset& interpolation,
                                          const Dataset& extrapolation) {
    ExperimentReport report;
    const std::array<std::pair<const char*, const Dataset*>, 3> groups = {
        std::make_pair("identification", &identification),
        std::make_pair("interpolation", &interpolation),
        std::make_pair("extrapolation", &extrapolation)};

    for (int target : cfg.targets) {
        const auto& tm = models[static_cast<std::size_t>(target)];
        for (Method m : cfg.methods) {
            for (const auto& [group, data] : groups) {
                require(data->rows() > 0, std::string("run_interp_extrap: band group '") + group +
                                              "' is empty");
                const auto pis = intervals_for(tm, m, data->features, cfg.alpha, cfg.qd_aggregation);
                std::vector<double> y(static_cast<std::size_t>(data->rows()));
                for (Eigen::Index i = 0; i < data->rows(); ++i)
                    y[static_cast<std::size_t>(i)] = data->targets(i, target);

                metrics::PIQualityReport r;
                r.picp = metrics::picp(pis, y);
                r.mpiw_abs = metrics::mpiw(pis);
                r.mpiw_norm = 0.0;
                r.n_samples = static_cast<long>(y.size());
                report.rows.push_back({target, m, group, r});

                if (m == Method::polynomial) {
                    auto& dist = report.poly_uncertainty[group][target];
                    dist.reserve(pis.size());
                    for (const auto& piv : pis) dist.push_back(piv.sigma2_model.value_or(0.0));
                }
            }
        }
    }
    return report;
}

inline double median(std::vector<double> v) {
    require(!v.empty(), "median: empty input");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid - 1), v.end());
    return 0.5 * (hi + v[mid - 1]);
}

// --- report emission ---------------------------------------------------------

inline void write_validation_csv(const ExperimentReport& report, std::ostream& os) {
    metrics::write_report_header(os);
    for (const auto& row : report.rows)
        metrics::write_report_row(os, target_names()[static_cast<std::size_t>(row.target)],
                                  method_name(row.method), row.kind, row.report);
}

// Experiment CSV uses the same schema with the band group in the kind column;
// the footer asserts the interval-width ordering across bands per method.
inline void write_experiment_csv(const ExperimentReport& report, std::ostream& os) {
    metrics::write_report_header(os);
    for (const auto& row : report.rows)
        metrics::write_report_row(os, target_names()[static_cast<std::size_t>(row.target)],
                                  method_name(row.method), row.kind, row.report);
    for (const auto& row : report.rows) {
        if (row.kind != "identification") continue;
        const auto* ident = &row.report;
        const auto* interp = report.find(row.target, row.method, "interpolation");
        const auto* extrap = report.find(row.target, row.method, "extrapolation");
        if (!interp || !extrap) continue;
        os << "# mpiw_ordering " << target_names()[static_cast<std::size_t>(row.target)] << " "
           << method_name(row.method) << " extrap_gt_ident="
           << (extrap->mpiw_abs > ident->mpiw_abs ? "true" : "false")
           << " interp_le_1.05_ident="
           << (interp->mpiw_abs <= 1.05 * ident->mpiw_abs ? "true" : "false") << "\n";
    }
}

inline void write_poly_uncertainty_csv(const ExperimentReport& report, std::ostream& os) {
    os << "target,kind,sigma2_model\n";
    for (const auto& [group, per_target] : report.poly_uncertainty)
        for (const auto& [target, values] : per_target)
            for (double v : values)
                os << target_names()[static_cast<std::size_t>(target)] << "," << group << ","
                   << format_double(v) << "\n";
}

// Per-sample interval traces for external plotting: one file per target with
// the measurement and each method's prediction and bounds.
inline void write_traces_csv(const ModelSet& models, const std::vector<Method>& methods, int target,
                             const Dataset& data, double alpha, pi::QdAggregation qd_agg,
                             std::ostream& os) {
    std::vector<std::vector<PredictionInterval>> pis;
    os << "time,y";
    for (Method m : methods) {
        os << "," << method_name(m) << "_y_hat," << method_name(m) << "_L," << method_name(m)
           << "_U";
        pis.push_back(
            intervals_for(models[static_cast<std::size_t>(target)], m, data.features, alpha, qd_agg));
    }
    os << "\n";
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        os << format_double(data.timestamps(i)) << "," << format_double(data.targets(i, target));
        for (std::size_t k = 0; k < methods.size(); ++k) {
            const auto& piv = pis[k][static_cast<std::size_t>(i)];
            os << "," << format_double(piv.y_hat) << "," << format_double(piv.lower) << ","
               << format_double(piv.upper);
        }
        os << "\n";
    }
}

}  // namespace quadpi::harness
