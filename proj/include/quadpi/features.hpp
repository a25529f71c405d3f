#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>

#include "quadpi/common.hpp"

namespace quadpi {

// Raw kinematic/actuator state of the vehicle at one time sample.
struct QuadState {
    double u = 0.0, v = 0.0, w = 0.0;        // body velocity [m/s]
    double p = 0.0, q = 0.0, r = 0.0;        // body rates [rad/s]
    double phi = 0.0, theta = 0.0, psi = 0.0;  // attitude [rad]
    std::array<double, 4> omega{0.0, 0.0, 0.0, 0.0};  // rotor speeds [rad/s]
    int s_r = 1;  // rotor-1 spin direction, clockwise = +1

    void validate() const {
        for (double x : {u, v, w, p, q, r, phi, theta, psi})
            require(std::isfinite(x), "QuadState field is not finite");
        require(std::abs(phi) < M_PI / 2.0, "QuadState: |phi| must be < pi/2");
        require(std::abs(theta) < M_PI / 2.0, "QuadState: |theta| must be < pi/2");
        for (double o : omega) {
            require(std::isfinite(o) && o >= 0.0, "QuadState: rotor speeds must be finite and >= 0");
        }
        require(s_r == 1 || s_r == -1, "QuadState: s_r must be -1 or +1");
    }
};

struct RotorGeometry {
    double radius = 0.0;   // rotor radius R [m]
    double v_hover = 0.0;  // hover induced velocity v_h [m/s]
    double kappa0 = 0.0;   // thrust constant [N s^2]

    void validate() const {
        require(radius > 0.0 && std::isfinite(radius), "RotorGeometry: radius must be > 0");
        require(v_hover > 0.0 && std::isfinite(v_hover), "RotorGeometry: v_hover must be > 0");
        require(kappa0 > 0.0 && std::isfinite(kappa0), "RotorGeometry: kappa0 must be > 0");
    }
};

// Index layout of the 19-entry model input vector, in its fixed order.
enum FeatureIndex : int {
    kU = 0,
    kV,
    kW,
    kVin,
    kP,
    kQ,
    kR,
    kOmegaAvg,
    kSinPhi,
    kCosPhi,
    kSinTheta,
    kCosTheta,
    kUp,
    kUq,
    kUr,
    kMuX,
    kMuY,
    kMuZ,
    kMuVin,
    kFeatureCount
};

inline const std::array<std::string, kFeatureCount>& feature_names() {
    static const std::array<std::string, kFeatureCount> names = {
        "u",     "v",     "w",        "v_in",      "p",         "q",   "r",
        "omega_avg", "sin_phi", "cos_phi", "sin_theta", "cos_theta", "U_p", "U_q",
        "U_r",   "mu_x",  "mu_y",     "mu_z",      "mu_vin"};
    return names;
}

// Returns kFeatureCount when the name is unknown.
inline int feature_index(std::string_view name) {
    const auto& names = feature_names();
    for (int i = 0; i < kFeatureCount; ++i)
        if (names[static_cast<std::size_t>(i)] == name) return i;
    return kFeatureCount;
}

struct FeatureVector {
    std::array<double, kFeatureCount> values{};

    double operator[](int i) const { return values[static_cast<std::size_t>(i)]; }
    double& operator[](int i) { return values[static_cast<std::size_t>(i)]; }

    void validate() const {
        for (double x : values) require(std::isfinite(x), "FeatureVector entry is not finite");
        const double sp = values[kSinPhi], cp = values[kCosPhi];
        const double st = values[kSinTheta], ct = values[kCosTheta];
        require(std::abs(sp * sp + cp * cp - 1.0) <= 1e-12, "FeatureVector: phi trig identity violated");
        require(std::abs(st * st + ct * ct - 1.0) <= 1e-12, "FeatureVector: theta trig identity violated");
        require(values[kOmegaAvg] >= 0.0, "FeatureVector: omega_avg must be >= 0");
    }
};

// Root-mean-square aggregation of the four rotor speeds.
inline double avg_rotor_speed(const std::array<double, 4>& omega) {
    double s = 0.0;
    for (double o : omega) {
        require(std::isfinite(o) && o >= 0.0, "avg_rotor_speed: rotor speeds must be finite and >= 0");
        s += o * o;
    }
    return std::sqrt(s / 4.0);
}

struct ControlMoments {
    double U_p = 0.0;
    double U_q = 0.0;
    double U_r = 0.0;
};

// Rotor-speed differentials proxying commanded roll/pitch/yaw moments.
inline ControlMoments control_moments(const std::array<double, 4>& omega, int s_r) {
    require(s_r == 1 || s_r == -1, "control_moments: s_r must be -1 or +1");
    for (double o : omega) require(std::isfinite(o), "control_moments: rotor speed is not finite");
    ControlMoments m;
    m.U_p = (omega[0] + omega[3]) - (omega[1] + omega[2]);
    m.U_q = (omega[0] + omega[1]) - (omega[2] + omega[3]);
    m.U_r = static_cast<double>(s_r) * ((omega[0] + omega[2]) - (omega[1] + omega[3]));
    return m;
}

namespace detail {

// Right-hand side of the implicit induced-velocity relation:
//   v_in = v_h^2 / sqrt((V cos a)^2 + (v_in - V sin a)^2)
inline double induced_velocity_rhs(double v, double airspeed, double alpha_r, double v_hover) {
    const double horiz = airspeed * std::cos(alpha_r);
    const double vert = v - airspeed * std::sin(alpha_r);
    const double denom = std::sqrt(horiz * horiz + vert * vert);
    if (denom == 0.0) return std::numeric_limits<double>::infinity();
    return v_hover * v_hover / denom;
}

}  // namespace detail

struct InducedVelocityOptions {
    double damping = 0.5;
    double tol = 1e-9;
    int max_iter = 200;
};

// Solves the implicit induced-velocity relation by damped fixed-point
// iteration started at v_hover, with a bisection fallback when the iteration
// fails to contract. The returned value satisfies |v - rhs(v)| < tol.
inline double induced_velocity(double airspeed, double alpha_r, double v_hover,
                               InducedVelocityOptions opt = {}) {
    require(v_hover > 0.0 && std::isfinite(v_hover), "induced_velocity: v_hover must be > 0");
    require(std::isfinite(airspeed) && airspeed >= 0.0, "induced_velocity: airspeed must be >= 0");
    require(std::isfinite(alpha_r), "induced_velocity: alpha_r is not finite");
    require(opt.tol > 0.0, "induced_velocity: tol must be > 0");

    double v = v_hover;
    double residual = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opt.max_iter; ++it) {
        const double rhs = detail::induced_velocity_rhs(v, airspeed, alpha_r, v_hover);
        if (!std::isfinite(rhs)) break;  // degenerate point; try bisection
        residual = std::abs(v - rhs);
        if (residual < opt.tol) return v;
        v = (1.0 - opt.damping) * v + opt.damping * rhs;
    }

    // Bisection fallback on g(v) = v - rhs(v) over [eps, v_hover + airspeed].
    double lo = 1e-6;
    double hi = v_hover + airspeed;
    auto g = [&](double x) { return x - detail::induced_velocity_rhs(x, airspeed, alpha_r, v_hover); };
    double glo = g(lo);
    double ghi = g(hi);
    if (!(glo <= 0.0 && ghi >= 0.0)) {
        throw ConvergenceError("induced_velocity: fixed point did not converge and bisection "
                               "bracket failed",
                               residual);
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if (std::abs(gm) < opt.tol) return mid;
        if (gm < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    throw ConvergenceError("induced_velocity: bisection did not reach tolerance",
                           std::abs(g(0.5 * (lo + hi))));
}

struct AdvanceRatios {
    double mu_x = 0.0;
    double mu_y = 0.0;
    double mu_z = 0.0;
    double mu_vin = 0.0;
};

// Guard threshold on the rotor tip speed denominator omega_avg * R.
inline constexpr double kTipSpeedEpsilon = 1e-6;

// Body velocities (and induced velocity) normalized by rotor tip speed.
// mu_vin uses v_in in the numerator: a variant definition that reuses w here
// would merely duplicate mu_z and is treated as a misprint.
inline AdvanceRatios advance_ratios(double u, double v, double w, double v_in, double omega_avg,
                                    double radius) {
    const double tip = omega_avg * radius;
    if (!(tip > kTipSpeedEpsilon))
        throw InvalidInputError("advance_ratios: tip speed omega_avg*R is degenerate");
    AdvanceRatios mu;
    mu.mu_x = u / tip;
    mu.mu_y = v / tip;
    mu.mu_z = w / tip;
    mu.mu_vin = v_in / tip;
    return mu;
}

// Rotor-plane angle of attack from the body velocity direction; climb
// (negative body w) gives positive inflow angle.
inline double rotor_plane_alpha(double u, double v, double w) {
    if (u == 0.0 && v == 0.0 && w == 0.0) return 0.0;
    return std::atan2(-w, std::sqrt(u * u + v * v));
}

// Derives the full 19-entry input vector from one raw state sample.
inline FeatureVector build_feature_vector(const QuadState& s, const RotorGeometry& geom,
                                          InducedVelocityOptions opt = {}) {
    s.validate();
    geom.validate();

    FeatureVector f;
    f[kU] = s.u;
    f[kV] = s.v;
    f[kW] = s.w;
    f[kP] = s.p;
    f[kQ] = s.q;
    f[kR] = s.r;
    f[kSinPhi] = std::sin(s.phi);
    f[kCosPhi] = std::cos(s.phi);
    f[kSinTheta] = std::sin(s.theta);
    f[kCosTheta] = std::cos(s.theta);

    const double omega_avg = avg_rotor_speed(s.omega);
    f[kOmegaAvg] = omega_avg;

    const ControlMoments cm = control_moments(s.omega, s.s_r);
    f[kUp] = cm.U_p;
    f[kUq] = cm.U_q;
    f[kUr] = cm.U_r;

    const double airspeed = std::sqrt(s.u * s.u + s.v * s.v + s.w * s.w);
    const double alpha_r = rotor_plane_alpha(s.u, s.v, s.w);
    const double v_in = induced_velocity(airspeed, alpha_r, geom.v_hover, opt);
    f[kVin] = v_in;

    const AdvanceRatios mu = advance_ratios(s.u, s.v, s.w, v_in, omega_avg, geom.radius);
    f[kMuX] = mu.mu_x;
    f[kMuY] = mu.mu_y;
    f[kMuZ] = mu.mu_z;
    f[kMuVin] = mu.mu_vin;

    f.validate();
    return f;
}

}  // namespace quadpi
