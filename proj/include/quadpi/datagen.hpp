#pragma once

#include <array>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "quadpi/common.hpp"
#include "quadpi/dataset.hpp"
#include "quadpi/features.hpp"
#include "quadpi/jsonutil.hpp"
#include "quadpi/polyreg.hpp"

namespace quadpi::datagen {

inline constexpr double kGravity = 9.80665;

struct VehicleParams {
    std::string name = "sim-quad";
    double mass = 0.5;  // [kg]
    RotorGeometry geometry{0.0381, 4.0, 1.3625e-3};
    int spin_dir = 1;
    // Rotor-speed offset per commanded rad/s of body rate.
    double mixer_gain_p = 0.8;
    double mixer_gain_q = 0.8;
    double mixer_gain_r = 0.8;

    // Equal-rotor trim satisfying kappa0 * sum(omega^2) = m g / (cos phi cos theta).
    double trim_rotor_speed(double phi, double theta) const {
        const double ct = std::cos(phi) * std::cos(theta);
        require(ct > 0.0, "trim_rotor_speed: attitude out of range");
        return std::sqrt(mass * kGravity / (ct * 4.0 * geometry.kappa0));
    }
};

enum class SignalKind { sinusoid, pulse };

enum class ManeuverAxis { u, v, w, p, q, r, phi, theta, omega_collective };

inline ManeuverAxis maneuver_axis_from_name(const std::string& n) {
    if (n == "u") return ManeuverAxis::u;
    if (n == "v") return ManeuverAxis::v;
    if (n == "w") return ManeuverAxis::w;
    if (n == "p") return ManeuverAxis::p;
    if (n == "q") return ManeuverAxis::q;
    if (n == "r") return ManeuverAxis::r;
    if (n == "phi") return ManeuverAxis::phi;
    if (n == "theta") return ManeuverAxis::theta;
    if (n == "omega_collective") return ManeuverAxis::omega_collective;
    throw SchemaError("unknown maneuver axis '" + n + "'", n);
}

struct AxisExcitation {
    ManeuverAxis axis = ManeuverAxis::u;
    double amplitude = 0.0;
    double frequency_hz = 0.0;  // sinusoid only
};

struct Baseline {
    double u = 0, v = 0, w = 0;
    double p = 0, q = 0, r = 0;
    double phi = 0, theta = 0, psi = 0;
};

struct ManeuverSpec {
    std::string id;
    SignalKind kind = SignalKind::sinusoid;
    std::vector<AxisExcitation> axes;
    Baseline baseline;
    double duration_s = 20.0;
    double sample_rate_hz = 100.0;
    bool coupling = false;  // coupled maneuvers get seeded per-axis phases

    void validate() const {
        require(duration_s > 0.0, "ManeuverSpec: duration must be > 0");
        require(sample_rate_hz > 0.0, "ManeuverSpec: sample_rate must be > 0");
        for (const auto& a : axes) {
            require(std::isfinite(a.amplitude), "ManeuverSpec: amplitude must be finite");
            if (kind == SignalKind::sinusoid)
                require(a.frequency_hz > 0.0, "ManeuverSpec: sinusoid axes need a frequency");
        }
    }
};

struct StateSeries {
    Eigen::VectorXd timestamps;
    std::vector<QuadState> states;
};

// Open-loop kinematically consistent state generator: commanded channels are
// baseline plus the axis signal, rotor speeds come from the attitude trim map
// plus collective and rate-proportional mixer offsets.
inline StateSeries generate_states(const ManeuverSpec& spec, const VehicleParams& vehicle,
                                   std::uint64_t seed) {
    spec.validate();
    const auto n = static_cast<Eigen::Index>(std::llround(spec.duration_s * spec.sample_rate_hz));
    require(n > 0, "generate_states: empty maneuver");

    std::vector<double> phases(spec.axes.size(), 0.0);
    if (spec.coupling) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> ph(0.0, 2.0 * M_PI);
        for (double& x : phases) x = ph(rng);
    }

    StateSeries out;
    out.timestamps.resize(n);
    out.states.reserve(static_cast<std::size_t>(n));

    for (Eigen::Index k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) / spec.sample_rate_hz;
        out.timestamps(k) = t;

        QuadState s;
        s.u = spec.baseline.u;
        s.v = spec.baseline.v;
        s.w = spec.baseline.w;
        s.p = spec.baseline.p;
        s.q = spec.baseline.q;
        s.r = spec.baseline.r;
        s.phi = spec.baseline.phi;
        s.theta = spec.baseline.theta;
        s.psi = spec.baseline.psi;
        s.s_r = vehicle.spin_dir;

        double collective = 0.0;
        for (std::size_t a = 0; a < spec.axes.size(); ++a) {
            const auto& ax = spec.axes[a];
            double sig = 0.0;
            if (spec.kind == SignalKind::sinusoid) {
                sig = ax.amplitude * std::sin(2.0 * M_PI * ax.frequency_hz * t + phases[a]);
            } else {
                const bool on = t >= 0.25 * spec.duration_s && t < 0.75 * spec.duration_s;
                sig = on ? ax.amplitude : 0.0;
            }
            switch (ax.axis) {
                case ManeuverAxis::u: s.u += sig; break;
                case ManeuverAxis::v: s.v += sig; break;
                case ManeuverAxis::w: s.w += sig; break;
                case ManeuverAxis::p: s.p += sig; break;
                case ManeuverAxis::q: s.q += sig; break;
                case ManeuverAxis::r: s.r += sig; break;
                case ManeuverAxis::phi: s.phi += sig; break;
                case ManeuverAxis::theta: s.theta += sig; break;
                case ManeuverAxis::omega_collective: collective += sig; break;
            }
        }

        if (std::abs(s.phi) >= M_PI / 2.0 || std::abs(s.theta) >= M_PI / 2.0)
            throw InvalidInputError("generate_states: maneuver '" + spec.id +
                                    "' drives attitude beyond pi/2");

        const double trim = vehicle.trim_rotor_speed(s.phi, s.theta) + collective;
        const double dp = vehicle.mixer_gain_p * s.p;
        const double dq = vehicle.mixer_gain_q * s.q;
        const double dr = vehicle.mixer_gain_r * s.r;
        s.omega[0] = trim + dp + dq + dr;
        s.omega[1] = trim - dp + dq - dr;
        s.omega[2] = trim - dp - dq + dr;
        s.omega[3] = trim + dp - dq - dr;
        for (double o : s.omega)
            if (!(o >= 0.0))
                throw InvalidInputError("generate_states: maneuver '" + spec.id +
                                        "' drives a rotor speed below zero");

        out.states.push_back(s);
    }
    return out;
}

// --- truth models -----------------------------------------------------------

// Six polynomial force/moment models evaluated to produce noise-free targets.
struct TruthModelSet {
    std::array<poly::PolynomialModel, kTargetCount> models;

    Eigen::RowVectorXd evaluate(const double* feat) const {
        Eigen::RowVectorXd y(kTargetCount);
        for (int t = 0; t < kTargetCount; ++t) y(t) = models[static_cast<std::size_t>(t)].predict(feat);
        return y;
    }
    Eigen::RowVectorXd evaluate(const FeatureVector& f) const { return evaluate(f.values.data()); }
};

inline Eigen::RowVectorXd evaluate_truth(const TruthModelSet& truth, const FeatureVector& f) {
    return truth.evaluate(f);
}

inline TruthModelSet load_truth_models(const Json& doc, const std::string& where) {
    TruthModelSet set;
    check_keys(doc, {"F_x", "F_y", "F_z", "M_x", "M_y", "M_z"}, where);
    for (int t = 0; t < kTargetCount; ++t) {
        const std::string& name = target_names()[static_cast<std::size_t>(t)];
        const Json& entry = require_key(doc, name.c_str(), where);
        check_keys(entry, {"terms", "coefficients", "fixed_count"}, where + "." + name);
        const auto term_texts = require_key(entry, "terms", where).get<std::vector<std::string>>();
        const auto coefs = require_key(entry, "coefficients", where).get<std::vector<double>>();
        if (term_texts.size() != coefs.size())
            throw SchemaError(where + "." + name + ": terms/coefficients size mismatch", name);
        poly::PolynomialModel& m = set.models[static_cast<std::size_t>(t)];
        m.target_name = name;
        m.fixed_count = require_key(entry, "fixed_count", where).get<std::size_t>();
        m.coefficients.resize(static_cast<Eigen::Index>(coefs.size()));
        for (std::size_t j = 0; j < term_texts.size(); ++j) {
            m.terms.push_back(poly::parse_term(term_texts[j]));
            m.coefficients(static_cast<Eigen::Index>(j)) = coefs[j];
        }
        m.n_train = 0;
        m.sigma_e2 = 0.0;
    }
    return set;
}

inline TruthModelSet load_truth_models_file(const std::string& path) {
    return load_truth_models(load_json_file(path), path);
}

// --- noise ------------------------------------------------------------------

struct GaussianChannel {
    double mean = 0.0;
    double std = 0.0;
};

// Per-channel Gaussian contamination of raw inputs plus additive measurement
// noise on the six target channels. Rotor-speed noise is specified in eRPM
// and converted through the motor pole count.
struct NoiseSpec {
    GaussianChannel rotor_erpm;
    double motor_poles = 12.0;
    std::array<GaussianChannel, 3> velocity{};   // u, v, w
    std::array<GaussianChannel, 3> attitude{};   // phi, theta, psi
    std::array<GaussianChannel, 3> rates{};      // p, q, r
    std::array<GaussianChannel, 3> accel{};      // a_x, a_y, a_z
    std::array<GaussianChannel, kTargetCount> measurement{};

    double rotor_std_rad_s() const { return rotor_erpm.std / motor_poles * (2.0 * M_PI / 60.0); }
    double rotor_mean_rad_s() const { return rotor_erpm.mean / motor_poles * (2.0 * M_PI / 60.0); }

    void validate() const {
        auto nonneg = [](const GaussianChannel& c) {
            require(c.std >= 0.0 && std::isfinite(c.std) && std::isfinite(c.mean),
                    "NoiseSpec: std must be finite and >= 0");
        };
        nonneg(rotor_erpm);
        require(motor_poles > 0.0, "NoiseSpec: motor_poles must be > 0");
        for (const auto& c : velocity) nonneg(c);
        for (const auto& c : attitude) nonneg(c);
        for (const auto& c : rates) nonneg(c);
        for (const auto& c : accel) nonneg(c);
        for (const auto& c : measurement) nonneg(c);
    }

    // Force measurement noise enters through accelerometer noise as F = m a;
    // moment channels are specified directly.
    void resolve_force_measurement(double mass) {
        for (int axis = 0; axis < 3; ++axis) {
            measurement[static_cast<std::size_t>(axis)].mean = mass * accel[static_cast<std::size_t>(axis)].mean;
            measurement[static_cast<std::size_t>(axis)].std = mass * accel[static_cast<std::size_t>(axis)].std;
        }
    }
};

inline NoiseSpec load_noise_spec(const Json& doc, const std::string& where) {
    check_keys(doc,
               {"rotor_speed_erpm_std", "rotor_speed_erpm_mean", "motor_poles", "velocity_std",
                "acceleration_std", "attitude_std", "rate_std", "moment_measurement_std"},
               where);
    NoiseSpec n;
    n.rotor_erpm.std = require_key(doc, "rotor_speed_erpm_std", where).get<double>();
    n.rotor_erpm.mean = get_or(doc, "rotor_speed_erpm_mean", 0.0);
    n.motor_poles = require_key(doc, "motor_poles", where).get<double>();
    const auto vel = require_key(doc, "velocity_std", where).get<std::vector<double>>();
    const auto acc = require_key(doc, "acceleration_std", where).get<std::vector<double>>();
    const auto att = require_key(doc, "attitude_std", where).get<std::vector<double>>();
    const auto rat = require_key(doc, "rate_std", where).get<std::vector<double>>();
    const auto mom = require_key(doc, "moment_measurement_std", where).get<std::vector<double>>();
    if (vel.size() != 3 || acc.size() != 3 || att.size() != 3 || rat.size() != 3 || mom.size() != 3)
        throw SchemaError(where + ": channel std arrays must have 3 entries", where);
    for (int i = 0; i < 3; ++i) {
        n.velocity[static_cast<std::size_t>(i)].std = vel[static_cast<std::size_t>(i)];
        n.accel[static_cast<std::size_t>(i)].std = acc[static_cast<std::size_t>(i)];
        n.attitude[static_cast<std::size_t>(i)].std = att[static_cast<std::size_t>(i)];
        n.rates[static_cast<std::size_t>(i)].std = rat[static_cast<std::size_t>(i)];
        n.measurement[static_cast<std::size_t>(kMx + i)].std = mom[static_cast<std::size_t>(i)];
    }
    n.validate();
    return n;
}

inline NoiseSpec load_noise_spec_file(const std::string& path, double mass) {
    NoiseSpec n = load_noise_spec(load_json_file(path), path);
    n.resolve_force_measurement(mass);
    return n;
}

inline VehicleParams load_vehicle(const Json& doc, const std::string& where) {
    check_keys(doc,
               {"name", "mass", "rotor_radius", "kappa0", "v_hover", "spin_dir", "mixer_gain_p",
                "mixer_gain_q", "mixer_gain_r"},
               where);
    VehicleParams v;
    v.name = get_or<std::string>(doc, "name", "sim-quad");
    v.mass = require_key(doc, "mass", where).get<double>();
    v.geometry.radius = require_key(doc, "rotor_radius", where).get<double>();
    v.geometry.kappa0 = require_key(doc, "kappa0", where).get<double>();
    v.geometry.v_hover = require_key(doc, "v_hover", where).get<double>();
    v.spin_dir = get_or(doc, "spin_dir", 1);
    v.mixer_gain_p = get_or(doc, "mixer_gain_p", 0.8);
    v.mixer_gain_q = get_or(doc, "mixer_gain_q", 0.8);
    v.mixer_gain_r = get_or(doc, "mixer_gain_r", 0.8);
    require(v.mass > 0.0, where + ": mass must be > 0");
    v.geometry.validate();
    return v;
}

inline VehicleParams load_vehicle_file(const std::string& path) {
    return load_vehicle(load_json_file(path), path);
}

// --- dataset assembly -------------------------------------------------------

// Derives features from clean states and evaluates the truth models for the
// noise-free targets.
inline Dataset build_dataset(const StateSeries& series, const VehicleParams& vehicle,
                             const TruthModelSet& truth, std::string provenance,
                             std::string role = "train", double band = 0.0) {
    const auto n = static_cast<Eigen::Index>(series.states.size());
    Dataset d;
    d.timestamps = series.timestamps;
    d.raw.resize(n, 13);
    d.features.resize(n, kFeatureCount);
    d.targets.resize(n, kTargetCount);
    d.provenance = std::move(provenance);
    d.role = std::move(role);
    d.band = band;
    d.s_r = vehicle.spin_dir;
    for (Eigen::Index i = 0; i < n; ++i) {
        const QuadState& s = series.states[static_cast<std::size_t>(i)];
        d.raw.row(i) = raw_state_row(s);
        const FeatureVector f = build_feature_vector(s, vehicle.geometry);
        for (int j = 0; j < kFeatureCount; ++j) d.features(i, j) = f[j];
        d.targets.row(i) = truth.evaluate(f);
    }
    d.validate();
    return d;
}

// Contaminates raw states before re-deriving the features, then adds
// independent measurement noise to each target channel. Deterministic per
// seed; a spec with all-zero noise returns the input bit-identically.
inline Dataset inject_noise(const Dataset& clean, const VehicleParams& vehicle,
                            const NoiseSpec& noise, std::uint64_t seed) {
    noise.validate();
    clean.validate();

    Dataset out = clean;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    auto perturb = [&](double value, const GaussianChannel& c) {
        if (c.std == 0.0) return value + c.mean;
        return value + c.mean + c.std * unit(rng);
    };

    const GaussianChannel rotor_rad{noise.rotor_mean_rad_s(), noise.rotor_std_rad_s()};
    bool any_input_noise = rotor_rad.std > 0.0 || rotor_rad.mean != 0.0;
    for (int i = 0; i < 3; ++i) {
        const auto k = static_cast<std::size_t>(i);
        any_input_noise = any_input_noise || noise.velocity[k].std > 0.0 || noise.velocity[k].mean != 0.0 ||
                          noise.attitude[k].std > 0.0 || noise.attitude[k].mean != 0.0 ||
                          noise.rates[k].std > 0.0 || noise.rates[k].mean != 0.0;
    }

    for (Eigen::Index i = 0; i < clean.rows(); ++i) {
        QuadState s = clean.state_at(i);
        s.u = perturb(s.u, noise.velocity[0]);
        s.v = perturb(s.v, noise.velocity[1]);
        s.w = perturb(s.w, noise.velocity[2]);
        s.p = perturb(s.p, noise.rates[0]);
        s.q = perturb(s.q, noise.rates[1]);
        s.r = perturb(s.r, noise.rates[2]);
        s.phi = perturb(s.phi, noise.attitude[0]);
        s.theta = perturb(s.theta, noise.attitude[1]);
        s.psi = perturb(s.psi, noise.attitude[2]);
        for (double& o : s.omega) o = std::max(perturb(o, rotor_rad), 0.0);

        if (any_input_noise) {
            out.raw.row(i) = raw_state_row(s);
            const FeatureVector f = build_feature_vector(s, vehicle.geometry);
            for (int j = 0; j < kFeatureCount; ++j) out.features(i, j) = f[j];
        }
    }
    for (Eigen::Index i = 0; i < clean.rows(); ++i) {
        for (int t = 0; t < kTargetCount; ++t) {
            const auto& c = noise.measurement[static_cast<std::size_t>(t)];
            out.targets(i, t) = perturb(out.targets(i, t), c);
        }
    }
    out.provenance = clean.provenance + ";noise-seed=" + std::to_string(seed);
    return out;
}

// --- splits -----------------------------------------------------------------

struct SplitPolicy {
    enum class Mode { train_validation, velocity_bands };
    Mode mode = Mode::train_validation;
    // velocity-band holdout configuration
    std::vector<double> identification_bands{0.0, 5.0, 10.0};
    double interpolation_band = 8.0;
    double extrapolation_band = 14.0;
};

struct Splits {
    std::vector<Dataset> train;
    std::vector<Dataset> validation;
    std::vector<Dataset> identification;
    std::vector<Dataset> interpolation;
    std::vector<Dataset> extrapolation;
};

inline Splits make_splits(const std::vector<Dataset>& datasets, const SplitPolicy& policy) {
    require(!datasets.empty(), "make_splits: no datasets");
    Splits out;
    if (policy.mode == SplitPolicy::Mode::train_validation) {
        for (const auto& d : datasets) {
            if (d.role == "train")
                out.train.push_back(d);
            else if (d.role == "validation")
                out.validation.push_back(d);
            else
                throw InvalidInputError("make_splits: dataset '" + d.provenance +
                                        "' has unknown role '" + d.role + "'");
        }
        if (out.train.empty() || out.validation.empty())
            throw InvalidInputError("make_splits: a split is empty");
        return out;
    }

    auto band_matches = [](double a, double b) { return std::abs(a - b) < 1e-9; };
    for (const auto& d : datasets) {
        bool placed = false;
        for (double b : policy.identification_bands) {
            if (band_matches(d.band, b)) {
                out.identification.push_back(d);
                placed = true;
                break;
            }
        }
        if (!placed && band_matches(d.band, policy.interpolation_band)) {
            out.interpolation.push_back(d);
            placed = true;
        }
        if (!placed && band_matches(d.band, policy.extrapolation_band)) {
            out.extrapolation.push_back(d);
            placed = true;
        }
        if (!placed)
            throw InvalidInputError("make_splits: dataset band " + std::to_string(d.band) +
                                    " matches no policy band");
    }
    if (out.identification.empty() || out.interpolation.empty() || out.extrapolation.empty())
        throw InvalidInputError("make_splits: a velocity-band split is empty");
    return out;
}

}  // namespace quadpi::datagen
