#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "quadpi/metrics.hpp"

using namespace quadpi;
using namespace quadpi::metrics;

namespace {

PredictionInterval make_pi(double lo, double hi) {
    PredictionInterval piv;
    piv.lower = lo;
    piv.upper = hi;
    piv.y_hat = 0.5 * (lo + hi);
    return piv;
}

}  // namespace

TEST_CASE("picp basics") {
    std::vector<PredictionInterval> pis = {make_pi(0, 1), make_pi(0, 1), make_pi(0, 1),
                                           make_pi(0, 1)};
    CHECK(picp(pis, {0.5, 0.2, 0.9, 0.1}) == 1.0);
    // boundary values count as inside (closed interval)
    CHECK(picp(pis, {0.0, 1.0, 0.5, 0.5}) == 1.0);
    // constructed half-in half-out case
    CHECK(picp(pis, {0.5, 0.5, 2.0, -1.0}) == 0.5);
    CHECK_THROWS_AS(picp({}, {}), InvalidInputError);
}

TEST_CASE("mpiw basics") {
    std::vector<PredictionInterval> unit = {make_pi(0, 1), make_pi(2, 3)};
    CHECK(mpiw(unit) == 1.0);
    std::vector<PredictionInterval> mixed = {make_pi(0, 1), make_pi(0, 3)};
    CHECK(mpiw(mixed) == 2.0);
    CHECK(mpiw(mixed, 10.0) == Catch::Approx(0.2));
    CHECK_THROWS_AS(mpiw(mixed, -1.0), InvalidInputError);
    CHECK_THROWS_AS(mpiw({}), InvalidInputError);
}

TEST_CASE("picp invariances") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<PredictionInterval> pis;
    std::vector<double> y;
    for (int i = 0; i < 200; ++i) {
        const double c = g(rng);
        pis.push_back(make_pi(c - std::abs(g(rng)), c + std::abs(g(rng))));
        y.push_back(c + g(rng));
    }
    const double base = picp(pis, y);

    // common shift of (L, U, y) leaves coverage unchanged
    const double shift = 13.7;
    auto shifted = pis;
    auto y2 = y;
    for (auto& piv : shifted) {
        piv.lower += shift;
        piv.upper += shift;
        piv.y_hat += shift;
    }
    for (auto& v : y2) v += shift;
    CHECK(picp(shifted, y2) == base);

    // widening every interval never decreases coverage; MPIW ignores y
    auto widened = pis;
    for (auto& piv : widened) {
        piv.lower -= 0.3;
        piv.upper += 0.3;
    }
    CHECK(picp(widened, y) >= base);
    CHECK(mpiw(widened) == Catch::Approx(mpiw(pis) + 0.6).epsilon(1e-12));
}

TEST_CASE("containment_report single realization equals plain picp") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<PredictionInterval> pis;
    std::vector<double> y;
    std::vector<std::vector<double>> singles;
    for (int i = 0; i < 100; ++i) {
        const double c = g(rng);
        pis.push_back(make_pi(c - 1.0, c + 1.0));
        const double v = c + g(rng);
        y.push_back(v);
        singles.push_back({v});
    }
    const auto report = containment_report(pis, singles, ContainmentKind::model_variation);
    CHECK(report.picp == picp(pis, y));
    CHECK(report.n_samples == 100);

    // realizations equal to the prediction are always contained
    std::vector<std::vector<double>> at_center;
    for (const auto& piv : pis) at_center.push_back({piv.y_hat});
    CHECK(containment_report(pis, at_center, ContainmentKind::model_variation).picp == 1.0);
}

TEST_CASE("containment_report pooled count matches a brute-force double loop") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<PredictionInterval> pis;
    std::vector<std::vector<double>> reals;
    for (int i = 0; i < 50; ++i) {
        const double c = g(rng);
        pis.push_back(make_pi(c - 0.8, c + 0.8));
        std::vector<double> r;
        for (int k = 0; k < 20; ++k) r.push_back(c + g(rng));
        reals.push_back(r);
    }
    long inside = 0, total = 0;
    for (std::size_t i = 0; i < pis.size(); ++i)
        for (double v : reals[i]) {
            if (v >= pis[i].lower && v <= pis[i].upper) ++inside;
            ++total;
        }
    const auto report =
        containment_report(pis, reals, ContainmentKind::measurement_variation, 4.0);
    CHECK(report.picp == Catch::Approx(static_cast<double>(inside) / total).epsilon(1e-14));
    CHECK(report.n_samples == total);
    CHECK(report.mpiw_abs == Catch::Approx(1.6).epsilon(1e-12));
    CHECK(report.mpiw_norm == Catch::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("containment_report per-run averaging") {
    // two samples, two runs; run 0 contains both, run 1 contains one
    std::vector<PredictionInterval> pis = {make_pi(0, 1), make_pi(0, 1)};
    std::vector<std::vector<double>> reals = {{0.5, 0.5}, {0.5, 5.0}};
    const auto pooled = containment_report(pis, reals, ContainmentKind::model_variation);
    CHECK(pooled.picp == Catch::Approx(0.75));
    const auto per_run =
        containment_report(pis, reals, ContainmentKind::model_variation, 0.0, true);
    CHECK(per_run.picp == Catch::Approx(0.75));  // (1.0 + 0.5) / 2

    std::vector<std::vector<double>> ragged = {{0.5}, {0.5, 5.0}};
    CHECK_THROWS_AS(containment_report(pis, ragged, ContainmentKind::model_variation, 0.0, true),
                    InvalidInputError);
    CHECK_THROWS_AS(containment_report(pis, {{}, {}}, ContainmentKind::model_variation),
                    InvalidInputError);
}

TEST_CASE("report CSV rows follow the documented schema") {
    PIQualityReport r;
    r.picp = 0.9725;
    r.mpiw_abs = 0.125;
    r.mpiw_norm = 0.0625;
    r.n_samples = 4000;
    std::stringstream ss;
    write_report_header(ss);
    write_report_row(ss, "F_x", "bootstrap", "measurement_variation", r);
    CHECK(ss.str() ==
          "target,method,kind,picp,mpiw_abs,mpiw_norm,n\n"
          "F_x,bootstrap,measurement_variation,0.9725,0.125,0.0625,4000\n");
}
