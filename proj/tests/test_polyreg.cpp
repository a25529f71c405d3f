#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "quadpi/polyreg.hpp"

using namespace quadpi;
using namespace quadpi::poly;

namespace {

// Random feature matrix with sane magnitudes in every channel.
RowMatrixXd random_features(Eigen::Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    RowMatrixXd f(n, kFeatureCount);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < kFeatureCount; ++j) f(i, j) = g(rng);
        f(i, kOmegaAvg) = std::abs(f(i, kOmegaAvg)) + 0.5;
        f(i, kSinPhi) = std::sin(f(i, kSinPhi));
        f(i, kCosPhi) = std::cos(std::asin(f(i, kSinPhi)));
        f(i, kSinTheta) = std::sin(f(i, kSinTheta));
        f(i, kCosTheta) = std::cos(std::asin(f(i, kSinTheta)));
    }
    return f;
}

}  // namespace

TEST_CASE("term parse/format round trip") {
    const char* cases[] = {"bias",
                           "mu_x",
                           "abs(mu_y)*mu_z^2",
                           "omega_avg*U_r^2",
                           "mu_x^2+mu_y^2",
                           "-mu_z+mu_vin",
                           "cos_phi*cos_theta",
                           "abs(U_q)*mu_x*mu_y*mu_z"};
    for (const char* c : cases) {
        const Term t = parse_term(c);
        CHECK(format_term(t) == c);
        CHECK(parse_term(format_term(t)) == t);
    }
    // Table-style power spellings parse to the same term.
    CHECK(parse_term("mu_x^1.0*mu_z^1.0") == parse_term("mu_x*mu_z"));
    CHECK(parse_term("(mu_x^2+mu_y^2)") == parse_term("mu_x^2+mu_y^2"));
    CHECK_THROWS_AS(parse_term("not_a_feature"), InvalidInputError);
    CHECK_THROWS_AS(parse_term("mu_x^0"), InvalidInputError);
}

TEST_CASE("term evaluation") {
    FeatureVector f;
    f[kMuX] = 2.0;
    f[kMuY] = -3.0;
    f[kMuZ] = 0.5;
    f[kOmegaAvg] = 10.0;
    CHECK(parse_term("bias").eval(f) == 1.0);
    CHECK(parse_term("mu_x*mu_z").eval(f) == Catch::Approx(1.0));
    CHECK(parse_term("abs(mu_y)^2*mu_x").eval(f) == Catch::Approx(18.0));
    CHECK(parse_term("mu_x^2+mu_y^2").eval(f) == Catch::Approx(13.0));
    CHECK(parse_term("-mu_z+mu_vin").eval(f) == Catch::Approx(-0.5));
}

TEST_CASE("expand_pool smallest grammar cases") {
    // P1(x)*{1,a} -> {x, x*a}
    const auto pool = expand_pool("P1(mu_x)*{1,omega_avg}");
    REQUIRE(pool.fixed.size() == 1);  // bias only
    CHECK(pool.fixed[0].is_bias());
    REQUIRE(pool.candidates.size() == 2);
    CHECK(format_term(pool.candidates[0]) == "mu_x");
    CHECK(format_term(pool.candidates[1]) == "omega_avg*mu_x");
}

TEST_CASE("expand_pool P2 gives all degree 1..2 monomials") {
    const auto pool = expand_pool("P2(mu_x,mu_z)*{1}");
    // {x, z, x^2, xz, z^2}
    REQUIRE(pool.candidates.size() == 5);
    std::vector<std::string> names;
    for (const auto& t : pool.candidates) names.push_back(format_term(t));
    for (const char* expect : {"mu_x", "mu_z", "mu_x^2", "mu_x*mu_z", "mu_z^2"})
        CHECK(std::find(names.begin(), names.end(), expect) != names.end());
}

TEST_CASE("expand_pool combinatorial count oracle") {
    // P3 over three variables: C(3+3,3) - 1 = 19 candidate monomials.
    const auto pool = expand_pool("mu_x + P3(mu_x,abs(mu_y),mu_z)*{1}");
    REQUIRE(pool.fixed.size() == 2);
    CHECK(format_term(pool.fixed[1]) == "mu_x");
    // mu_x itself is already fixed, so it is dropped from the candidates.
    CHECK(pool.candidates.size() == 18);

    const auto pool2 = expand_pool("P3(mu_x,abs(mu_y),mu_z)*{1}");
    CHECK(pool2.candidates.size() == 19);

    // Independent recount: exponent vectors e with 1 <= sum(e) <= 3.
    int count = 0;
    for (int a = 0; a <= 3; ++a)
        for (int b = 0; b <= 3; ++b)
            for (int c = 0; c <= 3; ++c)
                if (a + b + c >= 1 && a + b + c <= 3) ++count;
    CHECK(count == 19);
}

TEST_CASE("expand_pool rejects unknown features") {
    CHECK_THROWS_AS(expand_pool("P2(bogus)*{1}"), InvalidInputError);
}

TEST_CASE("expand_pool merges duplicates across groups") {
    const auto pool = expand_pool("P1(mu_x)*{1} + P1(mu_x)*{1,mu_z}");
    // candidates: mu_x, mu_x*mu_z (mu_x duplicated across groups merges)
    CHECK(pool.candidates.size() == 2);
}

TEST_CASE("ols_fit exact and mean cases") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd X(40, 3);
    for (Eigen::Index i = 0; i < X.size(); ++i) X(i) = g(rng);
    Eigen::Vector3d beta(1.5, -2.0, 0.25);
    Eigen::VectorXd y = X * beta;
    const auto fit = ols_fit(X, y);
    CHECK((fit.coefficients - beta).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(fit.residuals.cwiseAbs().maxCoeff() < 1e-9 * y.cwiseAbs().maxCoeff());

    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(25, 1);
    Eigen::VectorXd y2(25);
    for (Eigen::Index i = 0; i < 25; ++i) y2(i) = g(rng);
    const auto fit2 = ols_fit(ones, y2);
    CHECK(fit2.coefficients(0) == Catch::Approx(y2.mean()).margin(1e-12));
}

TEST_CASE("ols_fit matches normal equation oracle") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd X(200, 5);
    for (Eigen::Index i = 0; i < X.size(); ++i) X(i) = g(rng);
    Eigen::VectorXd y(200);
    for (Eigen::Index i = 0; i < 200; ++i) y(i) = g(rng);
    const auto fit = ols_fit(X, y);
    const Eigen::VectorXd oracle = (X.transpose() * X).ldlt().solve(X.transpose() * y);
    CHECK((fit.coefficients - oracle).norm() < 1e-8 * oracle.norm());
}

TEST_CASE("ols_fit names the offending column on rank deficiency") {
    Eigen::MatrixXd X(20, 3);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    for (Eigen::Index i = 0; i < 20; ++i) {
        X(i, 0) = g(rng);
        X(i, 1) = 2.0 * X(i, 0);  // exactly collinear
        X(i, 2) = g(rng);
    }
    Eigen::VectorXd y = X.col(2);
    std::vector<std::string> names = {"alpha", "beta", "gamma"};
    try {
        ols_fit(X, y, &names);
        FAIL("expected ConditioningError");
    } catch (const ConditioningError& e) {
        const bool names_collinear = (e.column == "alpha" || e.column == "beta");
        CHECK(names_collinear);
    }
}

TEST_CASE("residual_variance") {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(10);
    CHECK(residual_variance(r) == 0.0);

    Eigen::VectorXd r2 = Eigen::VectorXd::Ones(4);
    CHECK(residual_variance(r2) == Catch::Approx(2.0));

    Eigen::VectorXd r3(2);
    r3 << 1.0, 2.0;
    CHECK_THROWS_AS(residual_variance(r3), InsufficientDataError);

    std::mt19937_64 rng(29);
    const double sigma = 0.7;
    std::normal_distribution<double> g(0.0, sigma);
    Eigen::VectorXd big(10000);
    for (Eigen::Index i = 0; i < big.size(); ++i) big(i) = g(rng);
    CHECK(residual_variance(big) == Catch::Approx(sigma * sigma).epsilon(0.05));
}

TEST_CASE("stepwise recovers a planted structure exactly on noise-free data") {
    const Eigen::Index n = 600;
    RowMatrixXd f = random_features(n, 101);
    // y = 0.4 - 1.2*mu_x + 0.05*mu_x*mu_z, fixed = {bias, mu_x}
    Eigen::VectorXd y(n);
    const Term cross = parse_term("mu_x*mu_z");
    for (Eigen::Index i = 0; i < n; ++i) {
        const double* row = f.row(i).data();
        y(i) = 0.4 - 1.2 * row[kMuX] + 0.05 * cross.eval(row);
    }
    const auto pool = expand_pool("mu_x + P3(mu_x,abs(mu_y),mu_z)*{1}");
    const auto model = stepwise_fit(pool, f, y, {}, "F_x");

    REQUIRE(model.terms.size() >= 3);
    CHECK(format_term(model.terms[0]) == "bias");
    CHECK(format_term(model.terms[1]) == "mu_x");
    CHECK(format_term(model.terms[2]) == "mu_x*mu_z");  // first admitted candidate
    CHECK(model.coefficients(0) == Catch::Approx(0.4).epsilon(1e-8));
    CHECK(model.coefficients(1) == Catch::Approx(-1.2).epsilon(1e-8));
    CHECK(model.coefficients(2) == Catch::Approx(0.05).epsilon(1e-8));
    CHECK(model.r2 >= 0.98);
    CHECK(model.terms.size() == 3);  // nothing else admitted after exact fit
}

TEST_CASE("stepwise admits a candidate exactly equal to y first") {
    const Eigen::Index n = 200;
    RowMatrixXd f = random_features(n, 55);
    Eigen::VectorXd y(n);
    const Term t = parse_term("mu_y");
    for (Eigen::Index i = 0; i < n; ++i) y(i) = t.eval(f.row(i).data());
    const auto pool = expand_pool("P2(mu_x,mu_y,mu_z)*{1}");
    const auto model = stepwise_fit(pool, f, y);
    REQUIRE(model.terms.size() >= 2);
    CHECK(format_term(model.terms[1]) == "mu_y");
    Eigen::MatrixXd X = build_regressor_matrix(model.terms, f);
    CHECK((y - X * model.coefficients).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("stepwise on pure noise rarely admits anything") {
    int admitted = 0;
    const auto pool = expand_pool("P1(mu_x,mu_y,mu_z)*{1}");
    REQUIRE(pool.candidates.size() == 3);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        RowMatrixXd f = random_features(250, 1000 + seed);
        std::mt19937_64 rng(2000 + seed);
        std::normal_distribution<double> g(0.0, 1.0);
        Eigen::VectorXd y(250);
        for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = g(rng);
        const auto model = stepwise_fit(pool, f, y);
        if (model.terms.size() > pool.fixed.size()) ++admitted;
    }
    CHECK(admitted < 20);
}

TEST_CASE("stepwise returns fixed-only model for an empty pool") {
    RowMatrixXd f = random_features(100, 9);
    Eigen::VectorXd y(100);
    for (Eigen::Index i = 0; i < 100; ++i) y(i) = 3.0 + 0.5 * f(i, kMuX);
    CandidatePool pool;
    pool.fixed.push_back(Term::bias());
    pool.fixed.push_back(parse_term("mu_x"));
    const auto model = stepwise_fit(pool, f, y);
    CHECK(model.terms.size() == 2);
    CHECK(model.coefficients(0) == Catch::Approx(3.0).epsilon(1e-10));
    CHECK(model.coefficients(1) == Catch::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("stepwise R2 path is non-decreasing and mean residual is ~0") {
    const Eigen::Index n = 500;
    RowMatrixXd f = random_features(n, 77);
    std::mt19937_64 rng(78);
    std::normal_distribution<double> g(0.0, 0.05);
    Eigen::VectorXd y(n);
    const Term t1 = parse_term("mu_x*mu_z");
    const Term t2 = parse_term("mu_y^2");
    for (Eigen::Index i = 0; i < n; ++i) {
        const double* row = f.row(i).data();
        y(i) = 1.0 + 0.8 * row[kMuX] + 0.3 * t1.eval(row) - 0.2 * t2.eval(row) + g(rng);
    }
    const auto pool = expand_pool("mu_x + P3(mu_x,mu_y,mu_z)*{1}");
    const auto model = stepwise_fit(pool, f, y);

    for (std::size_t i = 1; i < model.r2_path.size(); ++i)
        CHECK(model.r2_path[i] >= model.r2_path[i - 1] - 1e-12);

    Eigen::MatrixXd X = build_regressor_matrix(model.terms, f);
    const Eigen::VectorXd resid = y - X * model.coefficients;
    const double ystd = std::sqrt((y.array() - y.mean()).square().mean());
    CHECK(std::abs(resid.mean()) < 1e-8 * ystd);
}

TEST_CASE("stepwise result invariant to candidate permutation") {
    const Eigen::Index n = 400;
    RowMatrixXd f = random_features(n, 31);
    std::mt19937_64 rng(32);
    std::normal_distribution<double> g(0.0, 0.03);
    Eigen::VectorXd y(n);
    const Term t1 = parse_term("mu_x*mu_z");
    for (Eigen::Index i = 0; i < n; ++i)
        y(i) = 0.2 + 0.9 * t1.eval(f.row(i).data()) + g(rng);

    auto pool = expand_pool("P2(mu_x,mu_y,mu_z)*{1}");
    const auto model_a = stepwise_fit(pool, f, y);

    std::reverse(pool.candidates.begin(), pool.candidates.end());
    const auto model_b = stepwise_fit(pool, f, y);

    REQUIRE(model_a.terms.size() == model_b.terms.size());
    std::vector<std::string> names_a, names_b;
    for (const auto& t : model_a.terms) names_a.push_back(format_term(t));
    for (const auto& t : model_b.terms) names_b.push_back(format_term(t));
    std::sort(names_a.begin(), names_a.end());
    std::sort(names_b.begin(), names_b.end());
    CHECK(names_a == names_b);
}

TEST_CASE("poly_pi degenerate zero-variance and hand-computable Gram") {
    // Single regressor x over n samples: Gram = sum x_i^2.
    Eigen::MatrixXd X(4, 1);
    X << 1.0, 2.0, 3.0, 4.0;
    Eigen::VectorXd y = 2.5 * X.col(0);

    PolynomialModel m;
    m.terms.push_back(parse_term("mu_x"));
    m.fixed_count = 1;
    m.coefficients = Eigen::VectorXd::Constant(1, 2.5);
    m.gram_inverse = Eigen::MatrixXd::Constant(1, 1, 1.0 / X.col(0).squaredNorm());
    m.sigma_e2 = 0.0;
    m.n_train = 4;

    Eigen::RowVectorXd x0(1);
    x0 << 2.0;
    const auto piv = poly_pi(m, x0, 0.05);
    CHECK(piv.y_hat == Catch::Approx(5.0));
    CHECK(piv.lower == piv.y_hat);
    CHECK(piv.upper == piv.y_hat);

    // Closed-form check with nonzero variance:
    // sigma0^2 = s2*(1 + x0^2/30); half = t(0.975, 2)*sigma0.
    m.sigma_e2 = 0.09;
    const auto piv2 = poly_pi(m, x0, 0.05);
    const double sigma0 = std::sqrt(0.09 * (1.0 + 4.0 / 30.0));
    const double t = t_quantile_two_sided(0.05, 2.0);
    CHECK(piv2.upper - piv2.y_hat == Catch::Approx(t * sigma0).margin(1e-10));
    CHECK(*piv2.sigma2_model == Catch::Approx(0.09 * 4.0 / 30.0).margin(1e-15));
    CHECK(*piv2.sigma2_noise == Catch::Approx(0.09));
}

TEST_CASE("poly_pi model-uncertainty term grows away from the training cloud") {
    const Eigen::Index n = 300;
    RowMatrixXd f = random_features(n, 41);
    std::mt19937_64 rng(42);
    std::normal_distribution<double> g(0.0, 0.1);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = 1.0 + 0.5 * f(i, kMuX) + g(rng);

    CandidatePool pool;
    pool.fixed.push_back(Term::bias());
    pool.fixed.push_back(parse_term("mu_x"));
    const auto model = stepwise_fit(pool, f, y);

    Eigen::RowVectorXd centroid(2), far(2);
    centroid << 1.0, 0.0;
    far << 1.0, 10.0 * f.col(kMuX).cwiseAbs().maxCoeff();
    const auto pi_center = poly_pi(model, centroid, 0.05);
    const auto pi_far = poly_pi(model, far, 0.05);
    CHECK(*pi_far.sigma2_model > *pi_center.sigma2_model);
    CHECK(pi_far.width() > pi_center.width());
}

TEST_CASE("poly_pi Gram quadratic form is non-negative for random x0") {
    RowMatrixXd f = random_features(200, 61);
    Eigen::VectorXd y(200);
    for (Eigen::Index i = 0; i < 200; ++i) y(i) = f(i, kMuX) - f(i, kMuZ);
    const auto pool = expand_pool("P1(mu_x,mu_y,mu_z)*{1}");
    const auto model = stepwise_fit(pool, f, y);
    std::mt19937_64 rng(62);
    std::normal_distribution<double> g(0.0, 5.0);
    for (int rep = 0; rep < 200; ++rep) {
        Eigen::RowVectorXd x0(model.coefficients.size());
        for (Eigen::Index j = 0; j < x0.size(); ++j) x0(j) = g(rng);
        CHECK((x0 * model.gram_inverse * x0.transpose())(0, 0) >= -1e-12);
    }
}

TEST_CASE("polynomial PI coverage on a linear-Gaussian problem") {
    // Scaled-down version of the analytic-calibration check (the full 1e5-draw
    // version runs in the acceptance suite).
    std::mt19937_64 rng(314);
    std::normal_distribution<double> g(0.0, 1.0);
    const double sigma = 0.4;
    std::normal_distribution<double> noise(0.0, sigma);
    const Eigen::Index n = 500;
    Eigen::MatrixXd X(n, 5);
    for (Eigen::Index i = 0; i < X.size(); ++i) X(i) = g(rng);
    Eigen::VectorXd beta(5);
    beta << 1.0, -0.5, 0.25, 2.0, 0.1;
    Eigen::VectorXd y = X * beta;
    for (Eigen::Index i = 0; i < n; ++i) y(i) += noise(rng);

    const auto fit = ols_fit(X, y);
    PolynomialModel m;
    for (int j = 0; j < 5; ++j) m.terms.push_back(parse_term("mu_x"));  // names unused here
    m.coefficients = fit.coefficients;
    m.gram_inverse = gram_inverse_of(X);
    m.sigma_e2 = residual_variance(fit.residuals);
    m.n_train = n;

    int inside = 0;
    const int trials = 20000;
    for (int k = 0; k < trials; ++k) {
        Eigen::RowVectorXd x0(5);
        for (int j = 0; j < 5; ++j) x0(j) = g(rng);
        const double y_new = x0 * beta + noise(rng);
        const auto piv = poly_pi(m, x0, 0.05);
        if (piv.contains(y_new)) ++inside;
    }
    const double coverage = static_cast<double>(inside) / trials;
    CHECK(coverage > 0.935);
    CHECK(coverage < 0.965);
}

TEST_CASE("model serialization round-trips coefficients bit-exactly") {
    RowMatrixXd f = random_features(300, 91);
    std::mt19937_64 rng(92);
    std::normal_distribution<double> g(0.0, 0.01);
    Eigen::VectorXd y(300);
    const Term t1 = parse_term("mu_x*mu_z");
    for (Eigen::Index i = 0; i < 300; ++i)
        y(i) = 0.123456789012345 + 1e-7 * t1.eval(f.row(i).data()) + g(rng);
    const auto pool = expand_pool("mu_x + P2(mu_x,mu_z)*{1}");
    const auto model = stepwise_fit(pool, f, y, {}, "F_x");

    std::stringstream ss;
    save_model(model, ss);
    const auto back = load_model(ss);

    CHECK(back.target_name == model.target_name);
    CHECK(back.n_train == model.n_train);
    CHECK(back.fixed_count == model.fixed_count);
    REQUIRE(back.terms.size() == model.terms.size());
    for (std::size_t j = 0; j < model.terms.size(); ++j) {
        CHECK(back.terms[j] == model.terms[j]);
        CHECK(back.coefficients(static_cast<Eigen::Index>(j)) ==
              model.coefficients(static_cast<Eigen::Index>(j)));
    }
    CHECK(back.sigma_e2 == model.sigma_e2);
    CHECK(back.r2 == model.r2);
    CHECK((back.gram_inverse - model.gram_inverse).cwiseAbs().maxCoeff() == 0.0);

    // predictions identical through the round trip
    FeatureVector fv;
    fv[kMuX] = 0.7;
    fv[kMuZ] = -0.3;
    CHECK(back.predict(fv) == model.predict(fv));
}

TEST_CASE("predict is linear in coefficients") {
    PolynomialModel m;
    m.terms.push_back(Term::bias());
    m.terms.push_back(parse_term("mu_x"));
    m.coefficients = Eigen::VectorXd(2);
    m.coefficients << 0.5, 2.0;
    FeatureVector fv;
    fv[kMuX] = 3.0;
    const double base = m.predict(fv);
    m.coefficients *= 2.0;
    CHECK(m.predict(fv) == Catch::Approx(2.0 * base));
}

TEST_CASE("t quantile endpoints") {
    CHECK(t_quantile_two_sided(0.05, 1e9) == Catch::Approx(1.959964).margin(1e-4));
    CHECK(t_quantile_two_sided(0.05, 10) == Catch::Approx(2.228139).margin(1e-5));
    CHECK(t_quantile_two_sided(0.05, 1) == Catch::Approx(12.7062).margin(1e-3));
}
