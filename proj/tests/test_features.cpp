#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "quadpi/features.hpp"

using namespace quadpi;

namespace {

// Independent root finder for the induced-velocity residual, used as the
// oracle against the damped fixed-point solver. In descent-aligned inflow the
// residual can have several roots; the physical branch is the first one above
// zero, so scan upward for the first sign change and bisect inside that cell.
double bisect_induced_velocity(double airspeed, double alpha_r, double v_hover) {
    auto g = [&](double v) {
        const double horiz = airspeed * std::cos(alpha_r);
        const double vert = v - airspeed * std::sin(alpha_r);
        return v - v_hover * v_hover / std::sqrt(horiz * horiz + vert * vert);
    };
    double lo = 1e-9;
    REQUIRE(g(lo) < 0.0);
    const double limit = v_hover + airspeed + 1.0;
    const double step = limit / 4096.0;
    double hi = lo + step;
    while (hi < limit && g(hi) < 0.0) {
        lo = hi;
        hi += step;
    }
    REQUIRE(g(hi) >= 0.0);
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

QuadState hover_state(double omega = 100.0) {
    QuadState s;
    s.omega = {omega, omega, omega, omega};
    return s;
}

}  // namespace

TEST_CASE("avg_rotor_speed basics") {
    CHECK(avg_rotor_speed({0, 0, 0, 0}) == 0.0);
    CHECK(avg_rotor_speed({100, 100, 100, 100}) == Catch::Approx(100.0));
    CHECK(avg_rotor_speed({3, 4, 0, 0}) == Catch::Approx(2.5));
    CHECK_THROWS_AS(avg_rotor_speed({-1, 0, 0, 0}), InvalidInputError);
    CHECK_THROWS_AS(avg_rotor_speed({std::nan(""), 0, 0, 0}), InvalidInputError);
}

TEST_CASE("avg_rotor_speed is permutation invariant") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> d(0.0, 500.0);
    for (int rep = 0; rep < 50; ++rep) {
        std::array<double, 4> o{d(rng), d(rng), d(rng), d(rng)};
        const double base = avg_rotor_speed(o);
        std::array<double, 4> perm = {o[2], o[0], o[3], o[1]};
        CHECK(avg_rotor_speed(perm) == Catch::Approx(base).epsilon(1e-14));
    }
}

TEST_CASE("control_moments hand cases") {
    auto m = control_moments({2, 1, 1, 2}, 1);
    CHECK(m.U_p == Catch::Approx(2.0));
    CHECK(m.U_q == Catch::Approx(0.0));
    CHECK(m.U_r == Catch::Approx(0.0));

    m = control_moments({1, 2, 1, 2}, -1);
    CHECK(m.U_p == Catch::Approx(0.0));
    CHECK(m.U_q == Catch::Approx(0.0));
    CHECK(m.U_r == Catch::Approx(2.0));

    m = control_moments({5, 5, 5, 5}, 1);
    CHECK(m.U_p == 0.0);
    CHECK(m.U_q == 0.0);
    CHECK(m.U_r == 0.0);

    CHECK_THROWS_AS(control_moments({1, 1, 1, 1}, 0), InvalidInputError);
}

TEST_CASE("control_moments are linear in rotor speeds") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> d(0.0, 300.0);
    for (int rep = 0; rep < 30; ++rep) {
        std::array<double, 4> o{d(rng), d(rng), d(rng), d(rng)};
        const double k = 3.5;
        std::array<double, 4> scaled{k * o[0], k * o[1], k * o[2], k * o[3]};
        const auto a = control_moments(o, 1);
        const auto b = control_moments(scaled, 1);
        CHECK(b.U_p == Catch::Approx(k * a.U_p).margin(1e-10));
        CHECK(b.U_q == Catch::Approx(k * a.U_q).margin(1e-10));
        CHECK(b.U_r == Catch::Approx(k * a.U_r).margin(1e-10));
    }
}

TEST_CASE("induced_velocity hover reduces to v_hover") {
    CHECK(induced_velocity(0.0, 0.3, 2.0) == Catch::Approx(2.0).margin(1e-9));
}

TEST_CASE("induced_velocity matches bisection oracle") {
    // V=5, alpha=0, v_h=2: root of v*sqrt(25+v^2)=4, near 0.79
    const double expected = bisect_induced_velocity(5.0, 0.0, 2.0);
    CHECK(expected == Catch::Approx(0.7926).margin(3e-3));
    CHECK(induced_velocity(5.0, 0.0, 2.0) == Catch::Approx(expected).margin(1e-8));

    // V=5, alpha=pi/2, v_h=2: root of v*|v-5|=4
    const double expected2 = bisect_induced_velocity(5.0, M_PI / 2.0, 2.0);
    CHECK(induced_velocity(5.0, M_PI / 2.0, 2.0) == Catch::Approx(expected2).margin(1e-8));
}

TEST_CASE("induced_velocity self-consistency and monotonicity") {
    const double v_h = 3.0;
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 40; ++i) {
        const double airspeed = 0.25 * i;
        const double v = induced_velocity(airspeed, 0.0, v_h);
        const double rhs = v_h * v_h / std::sqrt(airspeed * airspeed + v * v);
        CHECK(std::abs(v - rhs) < 1e-9);
        CHECK(v <= prev + 1e-12);
        prev = v;
    }
}

TEST_CASE("advance_ratios hand cases and guard") {
    auto mu = advance_ratios(0, 0, 0, 0, 100.0, 0.04);
    CHECK(mu.mu_x == 0.0);
    CHECK(mu.mu_vin == 0.0);

    mu = advance_ratios(4.0, 0, 0, 0, 1000.0, 0.04);
    CHECK(mu.mu_x == Catch::Approx(0.1));

    CHECK_THROWS_AS(advance_ratios(1, 0, 0, 0, 0.0, 0.04), InvalidInputError);
}

TEST_CASE("build_feature_vector hover") {
    RotorGeometry geom{0.04, 2.0, 1e-6};
    const auto f = build_feature_vector(hover_state(), geom);
    CHECK(f[kSinPhi] == 0.0);
    CHECK(f[kCosPhi] == 1.0);
    CHECK(f[kSinTheta] == 0.0);
    CHECK(f[kCosTheta] == 1.0);
    CHECK(f[kUp] == 0.0);
    CHECK(f[kUq] == 0.0);
    CHECK(f[kUr] == 0.0);
    CHECK(f[kMuX] == 0.0);
    CHECK(f[kMuY] == 0.0);
    CHECK(f[kMuZ] == 0.0);
    CHECK(f[kOmegaAvg] == Catch::Approx(100.0));
    // at hover v_in = v_h, so mu_vin = v_h / (omega_avg R)
    CHECK(f[kMuVin] == Catch::Approx(2.0 / (100.0 * 0.04)).margin(1e-9));
}

TEST_CASE("build_feature_vector exact trig") {
    RotorGeometry geom{0.04, 2.0, 1e-6};
    QuadState s = hover_state();
    s.phi = M_PI / 6.0;
    const auto f = build_feature_vector(s, geom);
    CHECK(f[kSinPhi] == Catch::Approx(0.5).margin(1e-15));
    CHECK(f[kCosPhi] == Catch::Approx(std::sqrt(3.0) / 2.0).margin(1e-15));
}

TEST_CASE("build_feature_vector matches per-formula recomputation") {
    RotorGeometry geom{0.04, 2.5, 1e-6};
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> vel(-6.0, 6.0);
    std::uniform_real_distribution<double> rate(-2.0, 2.0);
    std::uniform_real_distribution<double> ang(-0.8, 0.8);
    std::uniform_real_distribution<double> om(50.0, 400.0);
    for (int rep = 0; rep < 25; ++rep) {
        QuadState s;
        s.u = vel(rng);
        s.v = vel(rng);
        s.w = vel(rng);
        s.p = rate(rng);
        s.q = rate(rng);
        s.r = rate(rng);
        s.phi = ang(rng);
        s.theta = ang(rng);
        s.psi = ang(rng);
        s.omega = {om(rng), om(rng), om(rng), om(rng)};
        s.s_r = (rep % 2 == 0) ? 1 : -1;

        const auto f = build_feature_vector(s, geom);

        const double omega_avg = avg_rotor_speed(s.omega);
        const auto cm = control_moments(s.omega, s.s_r);
        const double airspeed = std::sqrt(s.u * s.u + s.v * s.v + s.w * s.w);
        const double alpha = rotor_plane_alpha(s.u, s.v, s.w);
        const double v_in = induced_velocity(airspeed, alpha, geom.v_hover);
        const auto mu = advance_ratios(s.u, s.v, s.w, v_in, omega_avg, geom.radius);

        CHECK(f[kU] == s.u);
        CHECK(f[kV] == s.v);
        CHECK(f[kW] == s.w);
        CHECK(f[kP] == s.p);
        CHECK(f[kQ] == s.q);
        CHECK(f[kR] == s.r);
        CHECK(f[kOmegaAvg] == Catch::Approx(omega_avg).epsilon(1e-14));
        CHECK(f[kUp] == Catch::Approx(cm.U_p).margin(1e-12));
        CHECK(f[kUq] == Catch::Approx(cm.U_q).margin(1e-12));
        CHECK(f[kUr] == Catch::Approx(cm.U_r).margin(1e-12));
        CHECK(f[kVin] == Catch::Approx(v_in).margin(1e-12));
        CHECK(f[kSinPhi] == Catch::Approx(std::sin(s.phi)).margin(1e-15));
        CHECK(f[kMuX] == Catch::Approx(mu.mu_x).margin(1e-12));
        CHECK(f[kMuY] == Catch::Approx(mu.mu_y).margin(1e-12));
        CHECK(f[kMuZ] == Catch::Approx(mu.mu_z).margin(1e-12));
        CHECK(f[kMuVin] == Catch::Approx(mu.mu_vin).margin(1e-12));
    }
}

TEST_CASE("build_feature_vector is deterministic") {
    RotorGeometry geom{0.04, 2.0, 1e-6};
    QuadState s = hover_state();
    s.u = 3.1;
    s.w = -0.7;
    s.phi = 0.2;
    const auto a = build_feature_vector(s, geom);
    const auto b = build_feature_vector(s, geom);
    for (int i = 0; i < kFeatureCount; ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("QuadState invariants enforced") {
    RotorGeometry geom{0.04, 2.0, 1e-6};
    QuadState s = hover_state();
    s.phi = 1.8;  // beyond pi/2
    CHECK_THROWS_AS(build_feature_vector(s, geom), InvalidInputError);

    QuadState s2 = hover_state();
    s2.omega[1] = -5.0;
    CHECK_THROWS_AS(build_feature_vector(s2, geom), InvalidInputError);
}
