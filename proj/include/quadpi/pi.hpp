#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "quadpi/common.hpp"
#include "quadpi/dataset.hpp"
#include "quadpi/interval.hpp"
#include "quadpi/jsonutil.hpp"
#include "quadpi/mathutil.hpp"
#include "quadpi/neuralnet.hpp"
#include "quadpi/term.hpp"

namespace quadpi::pi {

// Maps the 19-channel feature block onto a network input vector; entries are
// single features with an optional absolute value, e.g. ["mu_x", "abs(mu_y)"].
struct InputSelection {
    std::vector<poly::Factor> inputs;

    static InputSelection parse(const std::vector<std::string>& names) {
        InputSelection sel;
        for (const auto& n : names) {
            std::size_t i = 0;
            poly::Factor f = poly::detail::parse_factor(n, i);
            if (i != n.size() || f.power != 1)
                throw InvalidInputError("InputSelection: '" + n + "' is not a plain feature reference");
            sel.inputs.push_back(f);
        }
        require(!sel.inputs.empty(), "InputSelection: empty input list");
        return sel;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& f : inputs) out.push_back(poly::format_factor(f));
        return out;
    }

    Eigen::Index dim() const { return static_cast<Eigen::Index>(inputs.size()); }

    Eigen::MatrixXd transform(const RowMatrixXd& features) const {
        Eigen::MatrixXd X(features.rows(), dim());
        for (std::size_t j = 0; j < inputs.size(); ++j) {
            const auto& f = inputs[j];
            X.col(static_cast<Eigen::Index>(j)) = features.col(f.feature);
            if (f.abs) X.col(static_cast<Eigen::Index>(j)) = X.col(static_cast<Eigen::Index>(j)).cwiseAbs();
        }
        return X;
    }

    Eigen::VectorXd transform_row(const FeatureVector& fv) const {
        Eigen::VectorXd x(dim());
        for (std::size_t j = 0; j < inputs.size(); ++j) {
            double v = fv[inputs[j].feature];
            if (inputs[j].abs) v = std::abs(v);
            x(static_cast<Eigen::Index>(j)) = v;
        }
        return x;
    }
};

enum class EnsembleKind { point, qd_bounds };

enum class QdAggregation { mean, moment };

struct ResampleRecord {
    std::uint64_t seed = 0;
    std::size_t count = 0;
    std::string digest;  // FNV hash of the resampled index list
};

struct NetworkEnsemble {
    EnsembleKind kind = EnsembleKind::point;
    std::string target_name;
    InputSelection inputs;
    std::vector<nn::Network> members;
    std::optional<nn::Network> variance_net;  // bootstrap only
    std::vector<ResampleRecord> resample_records;
    Eigen::Index variance_train_count = 0;

    std::size_t size() const { return members.size(); }
};

struct EnsembleTrainOptions {
    int ensemble_size = 10;
    double resample_fraction = 1.0;  // classic bootstrap: resample N with replacement
    double heldout_fraction = 0.2;   // reserved for the variance net, never resampled
    int variance_hidden_neurons = 25;
    std::uint64_t base_seed = 0;     // member init seeds are base_seed + index
    unsigned jobs = 0;               // 0 = hardware concurrency
};

namespace detail {

struct IndexSplit {
    std::vector<Eigen::Index> pool;     // member-training source rows
    std::vector<Eigen::Index> heldout;  // variance-net rows
};

inline IndexSplit split_heldout(Eigen::Index n, double heldout_fraction, std::uint64_t seed) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto held = static_cast<std::size_t>(std::llround(heldout_fraction * static_cast<double>(n)));
    IndexSplit split;
    split.heldout.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(held));
    split.pool.assign(idx.begin() + static_cast<std::ptrdiff_t>(held), idx.end());
    return split;
}

inline std::vector<Eigen::Index> bootstrap_resample(const std::vector<Eigen::Index>& pool,
                                                    double fraction, std::uint64_t seed) {
    require(!pool.empty(), "bootstrap_resample: empty pool");
    const auto m = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(fraction * static_cast<double>(pool.size()))));
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<Eigen::Index> out;
    out.reserve(m);
    for (std::size_t k = 0; k < m; ++k) out.push_back(pool[pick(rng)]);
    return out;
}

inline std::string digest_indices(const std::vector<Eigen::Index>& idx) {
    return hex64(fnv1a(idx.data(), idx.size() * sizeof(Eigen::Index)));
}

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = X.row(idx[k]);
    return out;
}

inline Eigen::VectorXd take_rows(const Eigen::VectorXd& y, const std::vector<Eigen::Index>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = y(idx[k]);
    return out;
}

}  // namespace detail

// Ensemble mean and the B-1 normalized spread of member predictions for a
// batch of already-transformed inputs (rows).
inline void ensemble_moments_batch(const NetworkEnsemble& ens, const Eigen::MatrixXd& X,
                                   Eigen::VectorXd& y_hat, Eigen::VectorXd& sigma2_model) {
    require(ens.kind == EnsembleKind::point, "ensemble_moments: ensemble is not a point ensemble");
    if (ens.members.size() < 2)
        throw InsufficientDataError("ensemble_moments: need at least 2 members");
    const auto b = static_cast<Eigen::Index>(ens.members.size());
    Eigen::MatrixXd preds(X.rows(), b);
    for (Eigen::Index j = 0; j < b; ++j)
        preds.col(j) = nn::predict_point(ens.members[static_cast<std::size_t>(j)], X);
    y_hat = preds.rowwise().mean();
    sigma2_model.resize(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double mean = y_hat(i);
        double acc = 0.0;
        for (Eigen::Index j = 0; j < b; ++j) {
            const double d = preds(i, j) - mean;
            acc += d * d;
        }
        sigma2_model(i) = acc / static_cast<double>(b - 1);
    }
}

inline std::pair<double, double> ensemble_moments(const NetworkEnsemble& ens, const FeatureVector& fv) {
    Eigen::MatrixXd X(1, ens.inputs.dim());
    X.row(0) = ens.inputs.transform_row(fv).transpose();
    Eigen::VectorXd y_hat, s2;
    ensemble_moments_batch(ens, X, y_hat, s2);
    return {y_hat(0), s2(0)};
}

// Variance residuals r^2 = max((y - y_hat)^2 - sigma2_model, 0) on held-out
// rows; the training inputs for the measurement-variance network.
inline Eigen::VectorXd residual_dataset(const NetworkEnsemble& ens, const Eigen::MatrixXd& X,
                                        const Eigen::VectorXd& y) {
    Eigen::VectorXd y_hat, s2;
    ensemble_moments_batch(ens, X, y_hat, s2);
    Eigen::VectorXd r2(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double e = y(i) - y_hat(i);
        r2(i) = std::max(e * e - s2(i), 0.0);
    }
    return r2;
}

// Trains B point-prediction members on independent bootstrap resamples of the
// non-held-out rows, then fits the residual-variance network on the held-out
// portion.
inline NetworkEnsemble train_bootstrap_ensemble(const Dataset& data, int target,
                                                const InputSelection& sel,
                                                const nn::TrainConfig& cfg,
                                                const EnsembleTrainOptions& opt,
                                                int hidden_neurons = 20) {
    require(target >= 0 && target < kTargetCount, "train_bootstrap_ensemble: bad target");
    require(opt.ensemble_size >= 2, "train_bootstrap_ensemble: need at least 2 members");
    require(cfg.loss == nn::LossKind::mse, "train_bootstrap_ensemble: members train with mse");
    data.validate();

    const Eigen::MatrixXd X = sel.transform(data.features);
    const Eigen::VectorXd y = data.targets.col(target);
    const auto split = detail::split_heldout(X.rows(), opt.heldout_fraction, opt.base_seed);
    require(split.heldout.size() >= 8, "train_bootstrap_ensemble: held-out split too small");
    require(split.pool.size() >= 8, "train_bootstrap_ensemble: training pool too small");

    NetworkEnsemble ens;
    ens.kind = EnsembleKind::point;
    ens.target_name = target_names()[static_cast<std::size_t>(target)];
    ens.inputs = sel;
    ens.members.resize(static_cast<std::size_t>(opt.ensemble_size));
    ens.resample_records.resize(static_cast<std::size_t>(opt.ensemble_size));

    parallel_for(
        static_cast<std::size_t>(opt.ensemble_size),
        [&](std::size_t j) {
            const std::uint64_t resample_seed = opt.base_seed + 0x51ed2701u + j;
            const auto idx = detail::bootstrap_resample(split.pool, opt.resample_fraction, resample_seed);
            ens.resample_records[j] = {resample_seed, idx.size(), detail::digest_indices(idx)};

            nn::Network& net = ens.members[j];
            net.spec.input_dim = static_cast<int>(sel.dim());
            net.spec.hidden_neurons = hidden_neurons;
            net.spec.output_dim = 1;
            net.spec.seed = opt.base_seed + j;
            net.init(net.spec.seed);

            nn::TrainConfig member_cfg = cfg;
            member_cfg.shuffle_seed = opt.base_seed + 0xb5297a4du + j;
            nn::train(net, detail::take_rows(X, idx), detail::take_rows(y, idx), member_cfg);
        },
        opt.jobs);

    // Residual-variance network on the held-out rows.
    const Eigen::MatrixXd Xh = detail::take_rows(X, split.heldout);
    const Eigen::VectorXd yh = detail::take_rows(y, split.heldout);
    const Eigen::VectorXd r2 = residual_dataset(ens, Xh, yh);

    nn::Network var_net;
    var_net.spec.input_dim = static_cast<int>(sel.dim());
    var_net.spec.hidden_neurons = opt.variance_hidden_neurons;
    var_net.spec.output_dim = 1;
    var_net.spec.seed = opt.base_seed + 0x7f4a7c15u;
    var_net.init(var_net.spec.seed);
    nn::TrainConfig var_cfg = cfg;
    var_cfg.loss = nn::LossKind::bootstrap_nll;
    var_cfg.shuffle_seed = opt.base_seed + 0x2545f491u;
    nn::train(var_net, Xh, r2, var_cfg);

    ens.variance_net = std::move(var_net);
    ens.variance_train_count = Xh.rows();
    return ens;
}

// Bootstrap prediction intervals for a batch of transformed inputs: total
// variance is the member spread plus the variance-net estimate, and the
// bounds use the t quantile with (variance-net training count - 2) degrees of
// freedom.
inline std::vector<PredictionInterval> bootstrap_pi_batch(const NetworkEnsemble& ens,
                                                          const Eigen::MatrixXd& X, double alpha) {
    require(ens.variance_net.has_value(), "bootstrap_pi: ensemble lacks a variance net");
    Eigen::VectorXd y_hat, s2_model;
    ensemble_moments_batch(ens, X, y_hat, s2_model);
    const Eigen::VectorXd s2_noise = nn::predict_variance(*ens.variance_net, X);
    const double dof = std::max(1.0, static_cast<double>(ens.variance_train_count) - 2.0);
    const double t = t_quantile_two_sided(alpha, dof);

    std::vector<PredictionInterval> out(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        PredictionInterval piv;
        piv.y_hat = y_hat(i);
        const double sigma = std::sqrt(s2_model(i) + s2_noise(i));
        piv.lower = piv.y_hat - t * sigma;
        piv.upper = piv.y_hat + t * sigma;
        piv.sigma2_model = s2_model(i);
        piv.sigma2_noise = s2_noise(i);
        piv.validate();
        out[static_cast<std::size_t>(i)] = piv;
    }
    return out;
}

inline PredictionInterval bootstrap_pi(const NetworkEnsemble& ens, const FeatureVector& fv,
                                       double alpha) {
    Eigen::MatrixXd X(1, ens.inputs.dim());
    X.row(0) = ens.inputs.transform_row(fv).transpose();
    return bootstrap_pi_batch(ens, X, alpha)[0];
}

// Trains B direct bound-estimation members under the quality-driven loss with
// the same resampling scheme as the bootstrap ensemble.
inline NetworkEnsemble train_qd_ensemble(const Dataset& data, int target, const InputSelection& sel,
                                         const nn::TrainConfig& cfg, const EnsembleTrainOptions& opt,
                                         int hidden_neurons = 20) {
    require(target >= 0 && target < kTargetCount, "train_qd_ensemble: bad target");
    require(opt.ensemble_size >= 1, "train_qd_ensemble: need at least 1 member");
    require(cfg.loss == nn::LossKind::quality_driven,
            "train_qd_ensemble: members train with the quality-driven loss");
    data.validate();

    const Eigen::MatrixXd X = sel.transform(data.features);
    const Eigen::VectorXd y = data.targets.col(target);
    std::vector<Eigen::Index> all(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) all[static_cast<std::size_t>(i)] = i;

    NetworkEnsemble ens;
    ens.kind = EnsembleKind::qd_bounds;
    ens.target_name = target_names()[static_cast<std::size_t>(target)];
    ens.inputs = sel;
    ens.members.resize(static_cast<std::size_t>(opt.ensemble_size));
    ens.resample_records.resize(static_cast<std::size_t>(opt.ensemble_size));

    parallel_for(
        static_cast<std::size_t>(opt.ensemble_size),
        [&](std::size_t j) {
            const std::uint64_t resample_seed = opt.base_seed + 0x51ed2701u + j;
            const auto idx = detail::bootstrap_resample(all, opt.resample_fraction, resample_seed);
            ens.resample_records[j] = {resample_seed, idx.size(), detail::digest_indices(idx)};

            nn::Network& net = ens.members[j];
            net.spec.input_dim = static_cast<int>(sel.dim());
            net.spec.hidden_neurons = hidden_neurons;
            net.spec.output_dim = 2;
            net.spec.seed = opt.base_seed + j;
            net.init(net.spec.seed);

            nn::TrainConfig member_cfg = cfg;
            member_cfg.shuffle_seed = opt.base_seed + 0xb5297a4du + j;
            nn::train(net, detail::take_rows(X, idx), detail::take_rows(y, idx), member_cfg);
        },
        opt.jobs);
    return ens;
}

// Aggregates member bound pairs. Mean aggregation averages the bounds;
// moment aggregation widens them by the member spread scaled with the normal
// two-sided quantile. The prediction is the midpoint of the final bounds.
inline std::vector<PredictionInterval> qd_pi_batch(const NetworkEnsemble& ens,
                                                   const Eigen::MatrixXd& X,
                                                   QdAggregation aggregation, double alpha = 0.05) {
    require(ens.kind == EnsembleKind::qd_bounds, "qd_pi: ensemble is not a bound ensemble");
    require(!ens.members.empty(), "qd_pi: empty ensemble");
    const auto b = static_cast<Eigen::Index>(ens.members.size());
    Eigen::MatrixXd uppers(X.rows(), b), lowers(X.rows(), b);
    for (Eigen::Index j = 0; j < b; ++j) {
        auto [up, lo] = nn::predict_bounds(ens.members[static_cast<std::size_t>(j)], X);
        uppers.col(j) = up;
        lowers.col(j) = lo;
    }

    std::vector<PredictionInterval> out(static_cast<std::size_t>(X.rows()));
    const double z = t_quantile_two_sided(alpha, 1e9);  // normal limit
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double up = uppers.row(i).mean();
        double lo = lowers.row(i).mean();
        if (aggregation == QdAggregation::moment && b > 1) {
            const double su = std::sqrt((uppers.row(i).array() - up).square().sum() /
                                        static_cast<double>(b - 1));
            const double sl = std::sqrt((lowers.row(i).array() - lo).square().sum() /
                                        static_cast<double>(b - 1));
            up += z * su;
            lo -= z * sl;
        }
        if (lo > up) std::swap(lo, up);
        PredictionInterval piv;
        piv.lower = lo;
        piv.upper = up;
        piv.y_hat = 0.5 * (lo + up);
        piv.validate();
        out[static_cast<std::size_t>(i)] = piv;
    }
    return out;
}

inline PredictionInterval qd_pi(const NetworkEnsemble& ens, const FeatureVector& fv,
                                QdAggregation aggregation = QdAggregation::mean, double alpha = 0.05) {
    Eigen::MatrixXd X(1, ens.inputs.dim());
    X.row(0) = ens.inputs.transform_row(fv).transpose();
    return qd_pi_batch(ens, X, aggregation, alpha)[0];
}

// --- serialization -----------------------------------------------------------

inline void save_ensemble(const NetworkEnsemble& ens, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    Json manifest;
    manifest["kind"] = ens.kind == EnsembleKind::point ? "point" : "qd_bounds";
    manifest["target"] = ens.target_name;
    manifest["inputs"] = ens.inputs.names();
    manifest["ensemble_size"] = ens.members.size();
    manifest["variance_train_count"] = ens.variance_train_count;
    Json records = Json::array();
    for (const auto& r : ens.resample_records)
        records.push_back({{"seed", r.seed}, {"count", r.count}, {"digest", r.digest}});
    manifest["resample_records"] = records;
    manifest["member_seeds"] = [&] {
        std::vector<std::uint64_t> seeds;
        for (const auto& m : ens.members) seeds.push_back(m.spec.seed);
        return seeds;
    }();
    {
        std::ofstream f(dir + "/manifest.json", std::ios::binary);
        if (!f) throw IoError("cannot write " + dir + "/manifest.json");
        f << manifest.dump(2) << "\n";
    }
    for (std::size_t j = 0; j < ens.members.size(); ++j) {
        char name[32];
        std::snprintf(name, sizeof name, "member_%02zu.txt", j);
        nn::save_network(ens.members[j], dir + "/" + name);
    }
    if (ens.variance_net) nn::save_network(*ens.variance_net, dir + "/variance.txt");
}

inline NetworkEnsemble load_ensemble(const std::string& dir) {
    const Json manifest = load_json_file(dir + "/manifest.json");
    NetworkEnsemble ens;
    const std::string kind = require_key(manifest, "kind", dir).get<std::string>();
    if (kind == "point")
        ens.kind = EnsembleKind::point;
    else if (kind == "qd_bounds")
        ens.kind = EnsembleKind::qd_bounds;
    else
        throw SchemaError(dir + ": unknown ensemble kind '" + kind + "'", "kind");
    ens.target_name = require_key(manifest, "target", dir).get<std::string>();
    ens.inputs = InputSelection::parse(
        require_key(manifest, "inputs", dir).get<std::vector<std::string>>());
    const auto b = require_key(manifest, "ensemble_size", dir).get<std::size_t>();
    ens.variance_train_count =
        static_cast<Eigen::Index>(get_or<std::int64_t>(manifest, "variance_train_count", 0));
    for (const auto& r : require_key(manifest, "resample_records", dir)) {
        ResampleRecord rec;
        rec.seed = require_key(r, "seed", dir).get<std::uint64_t>();
        rec.count = require_key(r, "count", dir).get<std::size_t>();
        rec.digest = require_key(r, "digest", dir).get<std::string>();
        ens.resample_records.push_back(rec);
    }
    for (std::size_t j = 0; j < b; ++j) {
        char name[32];
        std::snprintf(name, sizeof name, "member_%02zu.txt", j);
        ens.members.push_back(nn::load_network_file(dir + "/" + name));
    }
    if (std::filesystem::exists(dir + "/variance.txt"))
        ens.variance_net = nn::load_network_file(dir + "/variance.txt");
    return ens;
}

}  // namespace quadpi::pi
