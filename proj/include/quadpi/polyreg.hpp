#pragma once

#include <Eigen/Dense>

#include <array>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "quadpi/common.hpp"
#include "quadpi/dataset.hpp"
#include "quadpi/interval.hpp"
#include "quadpi/mathutil.hpp"
#include "quadpi/term.hpp"

namespace quadpi::poly {

// Candidate regressor pool: fixed terms are always part of the model (bias
// first); candidates compete for admission during stepwise selection.
struct CandidatePool {
    std::vector<Term> fixed;
    std::vector<Term> candidates;
};

namespace detail {

// Splits on '+' at brace/paren depth zero. A '-' opening a group is kept with
// the group text.
inline std::vector<std::string> split_top_level(std::string_view s) {
    std::vector<std::string> out;
    int depth = 0;
    std::string cur;
    for (char c : s) {
        if (c == '(' || c == '{') ++depth;
        if (c == ')' || c == '}') --depth;
        if (c == '+' && depth == 0) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string trim(std::string s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// Enumerates exponent vectors with total degree in [1, degree], ascending by
// total degree then lexicographically; the order fixes candidate indices.
inline void enumerate_exponents(int nvars, int degree, std::vector<std::vector<int>>& out) {
    for (int total = 1; total <= degree; ++total) {
        std::vector<int> e(static_cast<std::size_t>(nvars), 0);
        // recursive composition of `total` into nvars non-negative parts
        std::function<void(int, int)> rec = [&](int pos, int remaining) {
            if (pos == nvars - 1) {
                e[static_cast<std::size_t>(pos)] = remaining;
                out.push_back(e);
                return;
            }
            for (int k = remaining; k >= 0; --k) {
                e[static_cast<std::size_t>(pos)] = k;
                rec(pos + 1, remaining - k);
            }
        };
        rec(0, total);
    }
}

struct PolyGroup {
    int degree = 0;
    std::vector<Factor> vars;      // power field unused (always parsed as 1)
    std::vector<Monomial> factors; // interacting factors; empty product = {1}
};

inline PolyGroup parse_poly_group(std::string_view s) {
    PolyGroup g;
    std::size_t i = 0;
    quadpi::poly::detail::skip_ws(s, i);
    ++i;  // past 'P'
    std::size_t start = i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i == start) throw InvalidInputError("pool parse: expected degree after 'P'");
    g.degree = std::stoi(std::string(s.substr(start, i - start)));
    quadpi::poly::detail::skip_ws(s, i);
    if (i >= s.size() || s[i] != '(') throw InvalidInputError("pool parse: expected '(' in P-group");
    ++i;
    for (;;) {
        g.vars.push_back(quadpi::poly::detail::parse_factor(s, i));
        quadpi::poly::detail::skip_ws(s, i);
        if (i < s.size() && s[i] == ',') {
            ++i;
            continue;
        }
        break;
    }
    if (i >= s.size() || s[i] != ')') throw InvalidInputError("pool parse: expected ')' in P-group");
    ++i;
    quadpi::poly::detail::skip_ws(s, i);
    if (i >= s.size() || s[i] != '*') throw InvalidInputError("pool parse: expected '*{...}' after P-group");
    ++i;
    quadpi::poly::detail::skip_ws(s, i);
    if (i >= s.size() || s[i] != '{') throw InvalidInputError("pool parse: expected '{' factor list");
    ++i;
    for (;;) {
        quadpi::poly::detail::skip_ws(s, i);
        g.factors.push_back(quadpi::poly::detail::parse_monomial(s, i));
        quadpi::poly::detail::skip_ws(s, i);
        if (i < s.size() && s[i] == ',') {
            ++i;
            continue;
        }
        break;
    }
    if (i >= s.size() || s[i] != '}') throw InvalidInputError("pool parse: expected '}' closing factor list");
    ++i;
    quadpi::poly::detail::skip_ws(s, i);
    if (i != s.size()) throw InvalidInputError("pool parse: trailing characters in P-group");
    return g;
}

}  // namespace detail

// Expands a pool expression such as
//   "mu_x + P3(mu_x,abs(mu_y),mu_z)*{1}"
// into fixed regressors (bias plus every non-P group) and candidate
// monomials: P^d over k variables yields all monomials of total degree 1..d,
// each multiplied by every interacting factor. Duplicates are merged and
// candidates equal to a fixed regressor are dropped.
inline CandidatePool expand_pool(std::string_view grammar) {
    CandidatePool pool;
    pool.fixed.push_back(Term::bias());

    for (const std::string& raw_group : detail::split_top_level(grammar)) {
        const std::string group = detail::trim(raw_group);
        if (group.empty()) throw InvalidInputError("pool parse: empty group in expression");
        const bool is_poly = group.size() >= 2 && group[0] == 'P' &&
                             std::isdigit(static_cast<unsigned char>(group[1]));
        if (!is_poly) {
            Term t = parse_term(group);
            if (!t.is_bias()) pool.fixed.push_back(std::move(t));
            continue;
        }
        const detail::PolyGroup g = detail::parse_poly_group(group);
        std::vector<std::vector<int>> exponents;
        detail::enumerate_exponents(static_cast<int>(g.vars.size()), g.degree, exponents);
        for (const Monomial& factor : g.factors) {
            for (const auto& e : exponents) {
                Monomial m;
                for (std::size_t k = 0; k < g.vars.size(); ++k) {
                    if (e[k] == 0) continue;
                    Factor f = g.vars[k];
                    f.power = e[k];
                    m.factors.push_back(f);
                }
                for (const Factor& f : factor.factors) m.factors.push_back(f);
                m.canonicalize();
                Term t;
                t.parts.push_back(std::move(m));
                const bool dup_candidate =
                    std::find(pool.candidates.begin(), pool.candidates.end(), t) != pool.candidates.end();
                const bool dup_fixed =
                    std::find(pool.fixed.begin(), pool.fixed.end(), t) != pool.fixed.end();
                if (!dup_candidate && !dup_fixed) pool.candidates.push_back(std::move(t));
            }
        }
    }
    return pool;
}

struct StepwiseCriteria {
    double f_in = 4.0;
    double f_out = 3.9;  // below f_in so admission/removal cannot cycle
    int max_terms = 20;
};

struct PolynomialModel {
    std::string target_name;
    std::vector<Term> terms;  // fixed terms first, then in order of addition
    std::size_t fixed_count = 0;
    Eigen::VectorXd coefficients;
    Eigen::MatrixXd gram_inverse;  // (X^T X)^{-1} of the training regressors
    double sigma_e2 = 0.0;
    Eigen::Index n_train = 0;
    double r2 = 0.0;
    std::vector<double> r2_path;  // R^2 recorded after each addition

    Eigen::RowVectorXd regressor_row(const double* feat) const {
        Eigen::RowVectorXd row(static_cast<Eigen::Index>(terms.size()));
        for (std::size_t j = 0; j < terms.size(); ++j)
            row(static_cast<Eigen::Index>(j)) = terms[j].eval(feat);
        return row;
    }

    double predict(const double* feat) const { return regressor_row(feat).dot(coefficients); }
    double predict(const FeatureVector& f) const { return predict(f.values.data()); }
};

// Reciprocal-condition floor for the training regressor matrix.
inline constexpr double kConditionThreshold = 1e-12;

struct OlsResult {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd residuals;
};

// Least squares via column-pivoted Householder QR. Rank deficiency or a
// reciprocal condition estimate below kConditionThreshold raises a
// ConditioningError naming the offending column.
inline OlsResult ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const std::vector<std::string>* column_names = nullptr) {
    require(X.rows() == y.size(), "ols_fit: X/y row mismatch");
    if (X.rows() < X.cols())
        throw InsufficientDataError("ols_fit: fewer rows than columns");

    auto column_label = [&](Eigen::Index j) {
        if (column_names && j >= 0 && static_cast<std::size_t>(j) < column_names->size())
            return (*column_names)[static_cast<std::size_t>(j)];
        return "column " + std::to_string(j);
    };

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < X.cols()) {
        const auto perm = qr.colsPermutation().indices();
        const Eigen::Index bad = perm(qr.rank());
        throw ConditioningError("ols_fit: rank-deficient regressor matrix at " + column_label(bad),
                                column_label(bad));
    }
    const auto& R = qr.matrixR();
    const double rmax = std::abs(R(0, 0));
    const double rmin = std::abs(R(X.cols() - 1, X.cols() - 1));
    if (!(rmax > 0.0) || rmin / rmax < kConditionThreshold) {
        const auto perm = qr.colsPermutation().indices();
        const Eigen::Index bad = perm(X.cols() - 1);
        throw ConditioningError("ols_fit: ill-conditioned regressor matrix at " + column_label(bad),
                                column_label(bad));
    }

    OlsResult res;
    res.coefficients = qr.solve(y);
    res.residuals = y - X * res.coefficients;
    return res;
}

// (X^T X)^{-1} from the pivoted QR factorization of X.
inline Eigen::MatrixXd gram_inverse_of(const Eigen::MatrixXd& X) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    const Eigen::Index p = X.cols();
    Eigen::MatrixXd R = qr.matrixR().topLeftCorner(p, p).template triangularView<Eigen::Upper>();
    Eigen::MatrixXd Rinv = R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    Eigen::MatrixXd G = Rinv * Rinv.transpose();
    const Eigen::MatrixXd P = qr.colsPermutation();
    return P * G * P.transpose();
}

// Residual variance estimate with the fixed N_t - 2 denominator.
inline double residual_variance(const Eigen::VectorXd& residuals) {
    const Eigen::Index n = residuals.size();
    if (n <= 2) throw InsufficientDataError("residual_variance: need more than 2 samples");
    return residuals.squaredNorm() / static_cast<double>(n - 2);
}

// Evaluates every term at every sample; rows must be row-major so a sample's
// feature channels are contiguous.
inline Eigen::MatrixXd build_regressor_matrix(const std::vector<Term>& terms,
                                              const RowMatrixXd& features) {
    Eigen::MatrixXd X(features.rows(), static_cast<Eigen::Index>(terms.size()));
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        const double* feat = features.row(i).data();
        for (std::size_t j = 0; j < terms.size(); ++j)
            X(i, static_cast<Eigen::Index>(j)) = terms[j].eval(feat);
    }
    return X;
}

// Stepwise model structure selection: starting from the fixed regressors, the
// candidate with the highest squared correlation between its component
// orthogonal to the current model and the current residual is admitted when
// its partial F statistic exceeds f_in; after every addition, non-fixed terms
// whose F statistic fell below f_out are returned to the pool. R^2 is
// recorded after each addition.
inline PolynomialModel stepwise_fit(const CandidatePool& pool, const RowMatrixXd& features,
                                    const Eigen::VectorXd& y, const StepwiseCriteria& crit = {},
                                    std::string target_name = "") {
    const Eigen::Index n = features.rows();
    require(features.cols() == kFeatureCount, "stepwise_fit: feature matrix must have 19 columns");
    if (n <= static_cast<Eigen::Index>(pool.fixed.size()) + 2)
        throw InsufficientDataError("stepwise_fit: not enough samples for the fixed terms");

    std::vector<Term> model_terms = pool.fixed;
    std::vector<Term> remaining = pool.candidates;

    Eigen::MatrixXd M = build_regressor_matrix(model_terms, features);
    Eigen::MatrixXd C = build_regressor_matrix(remaining, features);

    auto names_of = [](const std::vector<Term>& ts) {
        std::vector<std::string> names;
        names.reserve(ts.size());
        for (const Term& t : ts) names.push_back(format_term(t));
        return names;
    };

    const double y_mean = y.mean();
    const double sst = (y.array() - y_mean).square().sum();
    const double sse_floor = std::max(sst, 1.0) * 1e-24;

    auto fit_current = [&]() {
        const auto names = names_of(model_terms);
        return ols_fit(M, y, &names);
    };

    OlsResult fit = fit_current();
    double sse = fit.residuals.squaredNorm();
    std::vector<double> r2_path;

    while (static_cast<int>(model_terms.size()) < crit.max_terms && C.cols() > 0 && sse > sse_floor) {
        // Orthogonalize every candidate against the current model columns.
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
        Eigen::MatrixXd Z = C - M * qr.solve(C);

        int best = -1;
        double best_corr2 = -1.0;
        double best_delta_sse = 0.0;
        const double rnorm2 = sse;
        for (Eigen::Index j = 0; j < Z.cols(); ++j) {
            const double zz = Z.col(j).squaredNorm();
            const double orig = C.col(j).squaredNorm();
            if (!(orig > 0.0) || zz <= 1e-12 * orig) continue;  // collinear with the model
            const double num = Z.col(j).dot(fit.residuals);
            const double corr2 = (num * num) / (zz * rnorm2);
            if (corr2 > best_corr2 + 1e-15 * std::max(1.0, best_corr2)) {
                best_corr2 = corr2;
                best = static_cast<int>(j);
                best_delta_sse = num * num / zz;
            }
        }
        if (best < 0) break;

        const double p_new = static_cast<double>(model_terms.size()) + 1.0;
        const double dof = static_cast<double>(n) - p_new;
        if (dof <= 0.0) break;
        const double sse_new = std::max(sse - best_delta_sse, 0.0);
        const double f_stat = (sse_new <= sse_floor)
                                  ? std::numeric_limits<double>::infinity()
                                  : best_delta_sse / (sse_new / dof);
        if (!(f_stat > crit.f_in)) break;

        // Admit the winning candidate.
        model_terms.push_back(remaining[static_cast<std::size_t>(best)]);
        M.conservativeResize(Eigen::NoChange, M.cols() + 1);
        M.col(M.cols() - 1) = C.col(best);
        remaining.erase(remaining.begin() + best);
        Eigen::MatrixXd C2(n, C.cols() - 1);
        if (best > 0) C2.leftCols(best) = C.leftCols(best);
        if (best < C.cols() - 1) C2.rightCols(C.cols() - 1 - best) = C.rightCols(C.cols() - 1 - best);
        C = std::move(C2);

        fit = fit_current();
        sse = fit.residuals.squaredNorm();

        // Redundancy pass: drop any admitted term whose F statistic fell
        // below f_out, returning it to the candidate pool.
        for (;;) {
            const double p_cur = static_cast<double>(model_terms.size());
            const double dof_cur = static_cast<double>(n) - p_cur;
            if (dof_cur <= 0.0) break;
            const double sigma2 = sse / dof_cur;
            if (sigma2 <= sse_floor / static_cast<double>(n)) break;
            const Eigen::MatrixXd G = gram_inverse_of(M);
            int drop = -1;
            double worst_f = std::numeric_limits<double>::infinity();
            for (std::size_t k = pool.fixed.size(); k < model_terms.size(); ++k) {
                const auto kk = static_cast<Eigen::Index>(k);
                const double se2 = sigma2 * G(kk, kk);
                const double f_k = (se2 > 0.0)
                                       ? (fit.coefficients(kk) * fit.coefficients(kk)) / se2
                                       : std::numeric_limits<double>::infinity();
                if (f_k < worst_f) {
                    worst_f = f_k;
                    drop = static_cast<int>(k);
                }
            }
            if (drop < 0 || worst_f >= crit.f_out) break;

            remaining.push_back(model_terms[static_cast<std::size_t>(drop)]);
            Eigen::MatrixXd Cgrow(n, C.cols() + 1);
            Cgrow.leftCols(C.cols()) = C;
            Cgrow.col(C.cols()) = M.col(drop);
            C = std::move(Cgrow);
            model_terms.erase(model_terms.begin() + drop);
            Eigen::MatrixXd M2(n, M.cols() - 1);
            if (drop > 0) M2.leftCols(drop) = M.leftCols(drop);
            if (drop < M.cols() - 1) M2.rightCols(M.cols() - 1 - drop) = M.rightCols(M.cols() - 1 - drop);
            M = std::move(M2);
            fit = fit_current();
            sse = fit.residuals.squaredNorm();
        }

        r2_path.push_back(sst > 0.0 ? 1.0 - sse / sst : 1.0);
    }

    PolynomialModel model;
    model.target_name = std::move(target_name);
    model.terms = std::move(model_terms);
    model.fixed_count = pool.fixed.size();
    model.coefficients = fit.coefficients;
    model.gram_inverse = gram_inverse_of(M);
    model.sigma_e2 = residual_variance(fit.residuals);
    model.n_train = n;
    model.r2 = sst > 0.0 ? 1.0 - sse / sst : 1.0;
    model.r2_path = std::move(r2_path);
    return model;
}

inline PolynomialModel stepwise_fit(const CandidatePool& pool, const Dataset& data, int target,
                                    const StepwiseCriteria& crit = {}) {
    require(target >= 0 && target < kTargetCount, "stepwise_fit: bad target index");
    return stepwise_fit(pool, data.features, data.targets.col(target), crit,
                        target_names()[static_cast<std::size_t>(target)]);
}

// Analytic prediction interval at one regressor row. The total variance is
//   sigma0^2 = sigma_e^2 * (1 + x0 (X^T X)^{-1} x0^T)
// and the bounds use the two-sided t quantile with n_train - 2 degrees of
// freedom; n_obs is the number of observations of the future sample (1 for a
// per-sample prediction interval).
inline PredictionInterval poly_pi(const PolynomialModel& model, const Eigen::RowVectorXd& x0,
                                  double alpha, int n_obs = 1) {
    require(model.coefficients.size() == x0.size(), "poly_pi: regressor size mismatch");
    require(n_obs >= 1, "poly_pi: n_obs must be >= 1");
    const double model_term = (x0 * model.gram_inverse * x0.transpose())(0, 0);
    require(model_term >= -1e-9, "poly_pi: Gram inverse is not positive semidefinite");
    const double sigma2_model = model.sigma_e2 * std::max(model_term, 0.0);
    const double sigma2_total = model.sigma_e2 + sigma2_model;
    const double dof = static_cast<double>(model.n_train) - 2.0;
    const double t = t_quantile_two_sided(alpha, dof);
    const double half = t * std::sqrt(sigma2_total) / std::sqrt(static_cast<double>(n_obs));

    PredictionInterval piv;
    piv.y_hat = x0.dot(model.coefficients);
    piv.lower = piv.y_hat - half;
    piv.upper = piv.y_hat + half;
    piv.sigma2_model = sigma2_model;
    piv.sigma2_noise = model.sigma_e2;
    piv.validate();
    return piv;
}

inline PredictionInterval poly_pi(const PolynomialModel& model, const FeatureVector& f, double alpha,
                                  int n_obs = 1) {
    return poly_pi(model, model.regressor_row(f.values.data()), alpha, n_obs);
}

// Analytic intervals for every row of a feature block.
inline std::vector<PredictionInterval> poly_pi_batch(const PolynomialModel& model,
                                                     const RowMatrixXd& features, double alpha,
                                                     int n_obs = 1) {
    const Eigen::MatrixXd X = build_regressor_matrix(model.terms, features);
    // Scalar predict() per row keeps batch predictions bit-identical with the
    // single-sample path.
    Eigen::VectorXd y_hat(features.rows());
    for (Eigen::Index i = 0; i < features.rows(); ++i) y_hat(i) = model.predict(features.row(i).data());
    const Eigen::VectorXd quad = ((X * model.gram_inverse).array() * X.array()).rowwise().sum();
    const double dof = static_cast<double>(model.n_train) - 2.0;
    const double t = t_quantile_two_sided(alpha, dof);
    std::vector<PredictionInterval> out(static_cast<std::size_t>(features.rows()));
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        PredictionInterval piv;
        piv.y_hat = y_hat(i);
        const double sigma2_model = model.sigma_e2 * std::max(quad(i), 0.0);
        const double half =
            t * std::sqrt(model.sigma_e2 + sigma2_model) / std::sqrt(static_cast<double>(n_obs));
        piv.lower = piv.y_hat - half;
        piv.upper = piv.y_hat + half;
        piv.sigma2_model = sigma2_model;
        piv.sigma2_noise = model.sigma_e2;
        piv.validate();
        out[static_cast<std::size_t>(i)] = piv;
    }
    return out;
}

// --- serialization ---------------------------------------------------------

// Full-precision scientific form; parses back to the identical double.
inline std::string format_double_sci(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 16);
    return std::string(buf, res.ptr);
}

inline void save_model(const PolynomialModel& m, std::ostream& os) {
    os << "quadpi-polynomial-model v1\n";
    os << "target " << m.target_name << "\n";
    os << "n_train " << m.n_train << "\n";
    os << "fixed_count " << m.fixed_count << "\n";
    os << "sigma_e2 " << format_double_sci(m.sigma_e2) << "\n";
    os << "r2 " << format_double_sci(m.r2) << "\n";
    os << "terms " << m.terms.size() << "\n";
    for (std::size_t j = 0; j < m.terms.size(); ++j)
        os << "term " << format_term(m.terms[j]) << " " << format_double_sci(m.coefficients(static_cast<Eigen::Index>(j)))
           << "\n";
    os << "r2_path " << m.r2_path.size();
    for (double r : m.r2_path) os << " " << format_double_sci(r);
    os << "\n";
    os << "gram " << m.gram_inverse.rows() << "\n";
    for (Eigen::Index i = 0; i < m.gram_inverse.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.gram_inverse.cols(); ++j) {
            if (j) os << " ";
            os << format_double_sci(m.gram_inverse(i, j));
        }
        os << "\n";
    }
    os << "end\n";
}

inline void save_model(const PolynomialModel& m, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    save_model(m, f);
}

inline PolynomialModel load_model(std::istream& is, const std::string& origin = "<stream>") {
    auto fail = [&](const std::string& why) -> std::runtime_error {
        return IoError(origin + ": bad model file: " + why);
    };
    std::string line;
    if (!std::getline(is, line) || line != "quadpi-polynomial-model v1") throw fail("header");

    PolynomialModel m;
    auto expect_key = [&](const std::string& key) {
        if (!std::getline(is, line)) throw fail("truncated at " + key);
        std::istringstream ls(line);
        std::string k;
        ls >> k;
        if (k != key) throw fail("expected key '" + key + "', got '" + k + "'");
        std::string rest;
        std::getline(ls, rest);
        return detail::trim(rest);
    };

    m.target_name = expect_key("target");
    m.n_train = static_cast<Eigen::Index>(std::stoll(expect_key("n_train")));
    m.fixed_count = static_cast<std::size_t>(std::stoull(expect_key("fixed_count")));
    m.sigma_e2 = parse_double(expect_key("sigma_e2"));
    m.r2 = parse_double(expect_key("r2"));
    const std::size_t nterms = std::stoull(expect_key("terms"));
    m.coefficients.resize(static_cast<Eigen::Index>(nterms));
    for (std::size_t j = 0; j < nterms; ++j) {
        if (!std::getline(is, line)) throw fail("truncated term list");
        std::istringstream ls(line);
        std::string key, term_text, coef_text;
        ls >> key >> term_text >> coef_text;
        if (key != "term") throw fail("expected 'term' row");
        m.terms.push_back(parse_term(term_text));
        m.coefficients(static_cast<Eigen::Index>(j)) = parse_double(coef_text);
    }
    {
        if (!std::getline(is, line)) throw fail("truncated r2_path");
        std::istringstream ls(line);
        std::string key;
        std::size_t k = 0;
        ls >> key >> k;
        if (key != "r2_path") throw fail("expected 'r2_path'");
        for (std::size_t j = 0; j < k; ++j) {
            std::string v;
            ls >> v;
            m.r2_path.push_back(parse_double(v));
        }
    }
    const std::size_t gram_n = std::stoull(expect_key("gram"));
    if (gram_n != nterms) throw fail("gram size mismatch");
    m.gram_inverse.resize(static_cast<Eigen::Index>(gram_n), static_cast<Eigen::Index>(gram_n));
    for (std::size_t i = 0; i < gram_n; ++i) {
        if (!std::getline(is, line)) throw fail("truncated gram matrix");
        std::istringstream ls(line);
        for (std::size_t j = 0; j < gram_n; ++j) {
            std::string v;
            ls >> v;
            m.gram_inverse(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_double(v);
        }
    }
    if (!std::getline(is, line) || line != "end") throw fail("missing end marker");
    return m;
}

inline PolynomialModel load_model_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open model: " + path);
    return load_model(f, path);
}

}  // namespace quadpi::poly
