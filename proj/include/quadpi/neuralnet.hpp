#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "quadpi/common.hpp"
#include "quadpi/mathutil.hpp"

namespace quadpi::nn {

struct NetworkSpec {
    int input_dim = 0;
    int hidden_neurons = 20;  // 25 for the residual-variance net
    int output_dim = 1;       // 2 for direct bound estimation
    std::uint64_t seed = 0;

    void validate() const {
        require(input_dim > 0 && hidden_neurons > 0 && output_dim > 0,
                "NetworkSpec: dimensions must be > 0");
    }
};

enum class LossKind { mse, bootstrap_nll, quality_driven };

inline const char* loss_name(LossKind k) {
    switch (k) {
        case LossKind::mse: return "mse";
        case LossKind::bootstrap_nll: return "bootstrap_nll";
        case LossKind::quality_driven: return "quality_driven";
    }
    return "?";
}

inline LossKind loss_from_name(const std::string& n) {
    if (n == "mse") return LossKind::mse;
    if (n == "bootstrap_nll") return LossKind::bootstrap_nll;
    if (n == "quality_driven") return LossKind::quality_driven;
    throw InvalidInputError("unknown loss '" + n + "'");
}

struct TrainConfig {
    int epochs = 50;
    int batch_size = 256;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    LossKind loss = LossKind::mse;
    double qd_lambda = 15.0;
    double qd_softening_s = 160.0;
    double alpha = 0.05;
    std::uint64_t shuffle_seed = 0;

    void validate() const {
        require(epochs > 0, "TrainConfig: epochs must be > 0");
        require(batch_size > 0, "TrainConfig: batch_size must be > 0");
        require(adam_beta1 > 0.0 && adam_beta1 < 1.0 && adam_beta2 > 0.0 && adam_beta2 < 1.0,
                "TrainConfig: ADAM betas must lie in (0,1)");
        require(qd_softening_s > 0.0, "TrainConfig: qd_softening_s must be > 0");
        require(alpha > 0.0 && alpha < 1.0, "TrainConfig: alpha must lie in (0,1)");
        require(learning_rate >= 0.0, "TrainConfig: learning_rate must be >= 0");
    }
};

// Variance floor added on top of softplus for the residual-variance net.
inline constexpr double kVarianceFloor = 1e-8;

// Single-hidden-layer dense network, linear -> ReLU -> linear, together with
// the standardization statistics it was trained with.
struct Network {
    NetworkSpec spec;
    Eigen::MatrixXd W1;  // hidden x input
    Eigen::VectorXd b1;  // hidden
    Eigen::MatrixXd W2;  // output x hidden
    Eigen::VectorXd b2;  // output

    Eigen::VectorXd x_mean, x_std;  // per-input standardization
    double y_mean = 0.0;
    double y_std = 1.0;  // bootstrap_nll nets: target-variance scale

    std::vector<double> loss_history;   // full-set loss after each epoch
    std::vector<double> width_history;  // QD only: mean physical bound width per epoch

    // He-style uniform init scaled by fan-in. Hidden biases are spread over
    // the standardized input range so the ReLU hinge locations cover the data
    // instead of all passing through the origin; output biases start at zero.
    void init(std::uint64_t seed) {
        spec.validate();
        std::mt19937_64 rng(seed);
        auto fill = [&](Eigen::MatrixXd& m, int fan_in) {
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
            std::uniform_real_distribution<double> u(-limit, limit);
            for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
        };
        W1.resize(spec.hidden_neurons, spec.input_dim);
        W2.resize(spec.output_dim, spec.hidden_neurons);
        b2 = Eigen::VectorXd::Zero(spec.output_dim);
        fill(W1, spec.input_dim);
        fill(W2, spec.hidden_neurons);
        b1.resize(spec.hidden_neurons);
        std::uniform_real_distribution<double> ub(-1.0, 1.0);
        for (Eigen::Index i = 0; i < b1.size(); ++i) b1(i) = ub(rng);
        x_mean = Eigen::VectorXd::Zero(spec.input_dim);
        x_std = Eigen::VectorXd::Ones(spec.input_dim);
    }

    Eigen::MatrixXd standardize(const Eigen::MatrixXd& X) const {
        return (X.rowwise() - x_mean.transpose()).array().rowwise() / x_std.transpose().array();
    }

    bool finite() const {
        return W1.allFinite() && b1.allFinite() && W2.allFinite() && b2.allFinite();
    }
};

// Raw network composition on the given inputs (no standardization): rows of X
// are samples, rows of the result are outputs.
inline Eigen::MatrixXd forward(const Network& net, const Eigen::MatrixXd& X) {
    require(X.cols() == net.spec.input_dim, "forward: input dimension mismatch");
    Eigen::MatrixXd Z1 = (X * net.W1.transpose()).rowwise() + net.b1.transpose();
    Eigen::MatrixXd A = Z1.cwiseMax(0.0);
    return (A * net.W2.transpose()).rowwise() + net.b2.transpose();
}

inline Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& x) {
    return forward(net, Eigen::MatrixXd(x.transpose())).row(0);
}

// Standardizes inputs, runs the network, and de-standardizes a point
// prediction (MSE nets).
inline Eigen::VectorXd predict_point(const Network& net, const Eigen::MatrixXd& X) {
    const Eigen::MatrixXd out = forward(net, net.standardize(X));
    return out.col(0).array() * net.y_std + net.y_mean;
}

// Variance-net inference: sigma^2 = (softplus(z) + floor) * scale^2.
inline Eigen::VectorXd predict_variance(const Network& net, const Eigen::MatrixXd& X) {
    const Eigen::MatrixXd out = forward(net, net.standardize(X));
    Eigen::VectorXd sigma2(out.rows());
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        sigma2(i) = (softplus(out(i, 0)) + kVarianceFloor) * net.y_std * net.y_std;
    return sigma2;
}

// QD-net inference: physical-unit (upper, lower) bound pair per row, ordered
// by a post-hoc swap so upper >= lower.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> predict_bounds(const Network& net,
                                                                  const Eigen::MatrixXd& X) {
    require(net.spec.output_dim == 2, "predict_bounds: network does not emit bound pairs");
    const Eigen::MatrixXd out = forward(net, net.standardize(X));
    Eigen::VectorXd upper(out.rows()), lower(out.rows());
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        double hi = out(i, 0) * net.y_std + net.y_mean;
        double lo = out(i, 1) * net.y_std + net.y_mean;
        if (lo > hi) std::swap(lo, hi);
        upper(i) = hi;
        lower(i) = lo;
    }
    return {upper, lower};
}

// --- losses ------------------------------------------------------------------

inline double loss_mse(const Eigen::VectorXd& pred, const Eigen::VectorXd& target) {
    require(pred.size() == target.size(), "loss_mse: length mismatch");
    require(pred.size() > 0, "loss_mse: empty batch");
    return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

// J = 1/2 sum(ln sigma2 + r2/sigma2); positivity of sigma2 is the caller's
// responsibility (training routes outputs through softplus).
inline double loss_bootstrap_nll(const Eigen::VectorXd& sigma2, const Eigen::VectorXd& r2) {
    require(sigma2.size() == r2.size(), "loss_bootstrap_nll: length mismatch");
    require(sigma2.size() > 0, "loss_bootstrap_nll: empty batch");
    require((sigma2.array() > 0.0).all(), "loss_bootstrap_nll: sigma2 must be positive");
    double j = 0.0;
    for (Eigen::Index i = 0; i < sigma2.size(); ++i)
        j += std::log(sigma2(i)) + r2(i) / sigma2(i);
    return 0.5 * j;
}

// Sigmoid-softened coverage probability (strictly inside (0,1) for finite s).
inline double soft_picp(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                        const Eigen::VectorXd& y, double s) {
    require(lower.size() == upper.size() && lower.size() == y.size(), "soft_picp: length mismatch");
    require(lower.size() > 0, "soft_picp: empty batch");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        acc += sigmoid(s * (y(i) - lower(i))) * sigmoid(s * (upper(i) - y(i)));
    return acc / static_cast<double>(y.size());
}

// QD = MPIW_C + N*lambda*max(0, (1-alpha) - PICP_s)^2 where MPIW_C averages
// the widths of the samples whose measurement falls inside their bounds; an
// empty captured set contributes zero width.
inline double loss_quality_driven(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                  const Eigen::VectorXd& y, const TrainConfig& cfg) {
    require(lower.size() == upper.size() && lower.size() == y.size(),
            "loss_quality_driven: length mismatch");
    const Eigen::Index n = y.size();
    require(n > 0, "loss_quality_driven: empty batch");

    double captured_width = 0.0;
    long captured = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (y(i) >= lower(i) && y(i) <= upper(i)) {
            captured_width += upper(i) - lower(i);
            ++captured;
        }
    }
    const double mpiw_c = captured > 0 ? captured_width / static_cast<double>(captured) : 0.0;
    const double picp_s = soft_picp(lower, upper, y, cfg.qd_softening_s);
    const double deficit = std::max(0.0, (1.0 - cfg.alpha) - picp_s);
    return mpiw_c + static_cast<double>(n) * cfg.qd_lambda * deficit * deficit;
}

namespace detail {

// Loss value and gradient with respect to the raw network outputs for one
// batch. Out has one column for mse/bootstrap_nll and two (upper, lower) for
// quality_driven; `target` holds y (standardized) or scaled variance
// residuals depending on the loss.
inline double loss_and_output_grad(LossKind kind, const Eigen::MatrixXd& out,
                                   const Eigen::VectorXd& target, const TrainConfig& cfg,
                                   Eigen::MatrixXd& grad) {
    const Eigen::Index n = out.rows();
    grad.setZero(n, out.cols());
    switch (kind) {
        case LossKind::mse: {
            const Eigen::VectorXd diff = out.col(0) - target;
            grad.col(0) = 2.0 * diff / static_cast<double>(n);
            return diff.squaredNorm() / static_cast<double>(n);
        }
        case LossKind::bootstrap_nll: {
            double j = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double z = out(i, 0);
                const double s2 = softplus(z) + kVarianceFloor;
                j += std::log(s2) + target(i) / s2;
                grad(i, 0) = 0.5 * (1.0 / s2 - target(i) / (s2 * s2)) * sigmoid(z);
            }
            return 0.5 * j;
        }
        case LossKind::quality_driven: {
            const double s = cfg.qd_softening_s;
            Eigen::VectorXd upper = out.col(0), lower = out.col(1);
            double captured_width = 0.0;
            long captured = 0;
            std::vector<bool> inside(static_cast<std::size_t>(n));
            for (Eigen::Index i = 0; i < n; ++i) {
                const bool in = target(i) >= lower(i) && target(i) <= upper(i);
                inside[static_cast<std::size_t>(i)] = in;
                if (in) {
                    captured_width += upper(i) - lower(i);
                    ++captured;
                }
            }
            const double mpiw_c = captured > 0 ? captured_width / static_cast<double>(captured) : 0.0;

            double picp_acc = 0.0;
            Eigen::VectorXd a(n), b(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                a(i) = sigmoid(s * (target(i) - lower(i)));
                b(i) = sigmoid(s * (upper(i) - target(i)));
                picp_acc += a(i) * b(i);
            }
            const double picp_s = picp_acc / static_cast<double>(n);
            const double deficit = (1.0 - cfg.alpha) - picp_s;
            const bool active = deficit > 0.0;
            const double loss =
                mpiw_c + (active ? static_cast<double>(n) * cfg.qd_lambda * deficit * deficit : 0.0);

            // d pen / d PICP_s = -2 N lambda deficit; dPICP_s/dU_i = a_i b_i (1-b_i) s / N
            const double pen_coef = active ? -2.0 * cfg.qd_lambda * deficit : 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                double gu = 0.0, gl = 0.0;
                if (captured > 0 && inside[static_cast<std::size_t>(i)]) {
                    gu += 1.0 / static_cast<double>(captured);
                    gl -= 1.0 / static_cast<double>(captured);
                }
                if (active) {
                    gu += pen_coef * a(i) * b(i) * (1.0 - b(i)) * s;
                    gl += pen_coef * a(i) * (1.0 - a(i)) * b(i) * (-s);
                }
                grad(i, 0) = gu;
                grad(i, 1) = gl;
            }
            return loss;
        }
    }
    throw InvalidInputError("unknown loss kind");
}

struct AdamSlot {
    Eigen::MatrixXd m, v;
    void init(Eigen::Index rows, Eigen::Index cols) {
        m = Eigen::MatrixXd::Zero(rows, cols);
        v = Eigen::MatrixXd::Zero(rows, cols);
    }
};

inline void adam_update(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad,
                        AdamSlot& slot, const TrainConfig& cfg, long step) {
    slot.m = cfg.adam_beta1 * slot.m + (1.0 - cfg.adam_beta1) * grad;
    slot.v = cfg.adam_beta2 * slot.v.array().matrix() +
             (1.0 - cfg.adam_beta2) * grad.array().square().matrix();
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
    const Eigen::ArrayXXd mhat = slot.m.array() / bc1;
    const Eigen::ArrayXXd vhat = slot.v.array() / bc2;
    param.array() -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.adam_eps);
}

}  // namespace detail

// Trains in place with mini-batch ADAM. X rows are samples in physical units;
// y is the target channel (measurements for mse/quality_driven, variance
// residuals for bootstrap_nll). Standardization statistics are fitted here
// and stored on the network. Deterministic given (spec.seed, shuffle_seed).
inline void train(Network& net, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const TrainConfig& cfg) {
    cfg.validate();
    require(X.rows() == y.size(), "train: X/y row mismatch");
    require(X.rows() > 0, "train: empty dataset");
    require(X.cols() == net.spec.input_dim, "train: input dimension mismatch");
    if (cfg.loss == LossKind::quality_driven)
        require(net.spec.output_dim == 2, "train: quality_driven requires output_dim == 2");

    const Eigen::Index n = X.rows();

    // Input standardization from the training set.
    net.x_mean = X.colwise().mean();
    net.x_std.resize(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double var = (X.col(j).array() - net.x_mean(j)).square().mean();
        net.x_std(j) = std::sqrt(var) > 1e-12 ? std::sqrt(var) : 1.0;
    }
    const Eigen::MatrixXd Xs = net.standardize(X);

    // Target scaling. bootstrap_nll targets are variances, so the scale
    // enters quadratically and the mean shift is not applied.
    Eigen::VectorXd ys(n);
    if (cfg.loss == LossKind::bootstrap_nll) {
        require((y.array() >= 0.0).all(), "train: variance residual targets must be >= 0");
        net.y_mean = 0.0;
        const double scale2 = y.mean();
        net.y_std = scale2 > 1e-24 ? std::sqrt(scale2) : 1.0;
        ys = y / (net.y_std * net.y_std);
    } else {
        net.y_mean = y.mean();
        const double var = (y.array() - net.y_mean).square().mean();
        net.y_std = std::sqrt(var) > 1e-12 ? std::sqrt(var) : 1.0;
        ys = (y.array() - net.y_mean) / net.y_std;
    }

    detail::AdamSlot sW1, sb1, sW2, sb2;
    sW1.init(net.W1.rows(), net.W1.cols());
    sb1.init(net.b1.size(), 1);
    sW2.init(net.W2.rows(), net.W2.cols());
    sb2.init(net.b2.size(), 1);
    long step = 0;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::mt19937_64 rng(cfg.shuffle_seed);

    net.loss_history.clear();
    net.width_history.clear();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n - start);
            Eigen::MatrixXd Xb(bs, X.cols());
            Eigen::VectorXd yb(bs);
            for (Eigen::Index k = 0; k < bs; ++k) {
                Xb.row(k) = Xs.row(order[static_cast<std::size_t>(start + k)]);
                yb(k) = ys(order[static_cast<std::size_t>(start + k)]);
            }

            Eigen::MatrixXd Z1 = (Xb * net.W1.transpose()).rowwise() + net.b1.transpose();
            Eigen::MatrixXd A = Z1.cwiseMax(0.0);
            Eigen::MatrixXd out = (A * net.W2.transpose()).rowwise() + net.b2.transpose();

            Eigen::MatrixXd G;
            detail::loss_and_output_grad(cfg.loss, out, yb, cfg, G);

            const Eigen::MatrixXd dW2 = G.transpose() * A;
            const Eigen::VectorXd db2 = G.colwise().sum();
            Eigen::MatrixXd dA = G * net.W2;
            const Eigen::MatrixXd dZ = (Z1.array() > 0.0).select(dA, 0.0);
            const Eigen::MatrixXd dW1 = dZ.transpose() * Xb;
            const Eigen::VectorXd db1 = dZ.colwise().sum();

            ++step;
            detail::adam_update(net.W1, dW1, sW1, cfg, step);
            detail::adam_update(net.b1, db1, sb1, cfg, step);
            detail::adam_update(net.W2, dW2, sW2, cfg, step);
            detail::adam_update(net.b2, db2, sb2, cfg, step);
        }

        // Full-set loss for the history plus the divergence guard.
        Eigen::MatrixXd out = forward(net, Xs);
        Eigen::MatrixXd unused;
        const double epoch_loss = detail::loss_and_output_grad(cfg.loss, out, ys, cfg, unused);
        if (!std::isfinite(epoch_loss) || !net.finite())
            throw DivergenceError("train: non-finite loss or parameters at epoch " +
                                      std::to_string(epoch),
                                  epoch);
        net.loss_history.push_back(epoch_loss);
        if (cfg.loss == LossKind::quality_driven) {
            const double mean_width = (out.col(0) - out.col(1)).mean() * net.y_std;
            net.width_history.push_back(mean_width);
        }
    }
}

// --- serialization -----------------------------------------------------------

inline void save_network(const Network& net, std::ostream& os) {
    auto sci = [](double v) {
        char buf[40];
        auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 16);
        return std::string(buf, res.ptr);
    };
    os << "quadpi-network v1\n";
    os << "dims " << net.spec.input_dim << " " << net.spec.hidden_neurons << " "
       << net.spec.output_dim << "\n";
    os << "seed " << net.spec.seed << "\n";
    os << "y_standardization " << sci(net.y_mean) << " " << sci(net.y_std) << "\n";
    auto write_vec = [&](const char* key, const Eigen::VectorXd& v) {
        os << key << " " << v.size();
        for (Eigen::Index i = 0; i < v.size(); ++i) os << " " << sci(v(i));
        os << "\n";
    };
    auto write_mat = [&](const char* key, const Eigen::MatrixXd& m) {
        os << key << " " << m.rows() << " " << m.cols() << "\n";
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                if (j) os << " ";
                os << sci(m(i, j));
            }
            os << "\n";
        }
    };
    write_vec("x_mean", net.x_mean);
    write_vec("x_std", net.x_std);
    write_mat("W1", net.W1);
    write_vec("b1", net.b1);
    write_mat("W2", net.W2);
    write_vec("b2", net.b2);
    os << "end\n";
}

inline void save_network(const Network& net, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    save_network(net, f);
}

inline Network load_network(std::istream& is, const std::string& origin = "<stream>") {
    auto fail = [&](const std::string& why) { return IoError(origin + ": bad network file: " + why); };
    std::string line;
    if (!std::getline(is, line) || line != "quadpi-network v1") throw fail("header");

    Network net;
    {
        if (!std::getline(is, line)) throw fail("dims");
        std::istringstream ls(line);
        std::string key;
        ls >> key >> net.spec.input_dim >> net.spec.hidden_neurons >> net.spec.output_dim;
        if (key != "dims") throw fail("dims key");
    }
    {
        if (!std::getline(is, line)) throw fail("seed");
        std::istringstream ls(line);
        std::string key;
        ls >> key >> net.spec.seed;
        if (key != "seed") throw fail("seed key");
    }
    {
        if (!std::getline(is, line)) throw fail("y_standardization");
        std::istringstream ls(line);
        std::string key, a, b;
        ls >> key >> a >> b;
        if (key != "y_standardization") throw fail("y_standardization key");
        net.y_mean = parse_double(a);
        net.y_std = parse_double(b);
    }
    auto read_vec = [&](const char* key) {
        if (!std::getline(is, line)) throw fail(key);
        std::istringstream ls(line);
        std::string k;
        Eigen::Index sz = 0;
        ls >> k >> sz;
        if (k != key) throw fail(std::string("expected ") + key);
        Eigen::VectorXd v(sz);
        for (Eigen::Index i = 0; i < sz; ++i) {
            std::string tok;
            ls >> tok;
            v(i) = parse_double(tok);
        }
        return v;
    };
    auto read_mat = [&](const char* key) {
        if (!std::getline(is, line)) throw fail(key);
        std::istringstream ls(line);
        std::string k;
        Eigen::Index rows = 0, cols = 0;
        ls >> k >> rows >> cols;
        if (k != key) throw fail(std::string("expected ") + key);
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            if (!std::getline(is, line)) throw fail(std::string(key) + " rows");
            std::istringstream rs(line);
            for (Eigen::Index j = 0; j < cols; ++j) {
                std::string tok;
                rs >> tok;
                m(i, j) = parse_double(tok);
            }
        }
        return m;
    };
    net.x_mean = read_vec("x_mean");
    net.x_std = read_vec("x_std");
    net.W1 = read_mat("W1");
    net.b1 = read_vec("b1");
    net.W2 = read_mat("W2");
    net.b2 = read_vec("b2");
    if (!std::getline(is, line) || line != "end") throw fail("missing end marker");
    return net;
}

inline Network load_network_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open network: " + path);
    return load_network(f, path);
}

}  // namespace quadpi::nn
