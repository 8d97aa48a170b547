#pragma once

// Euler-Maruyama paths with compound-Poisson jumps and Bernoulli spike noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rvolest/model.hpp"
#include "rvolest/path.hpp"
#include "rvolest/rng.hpp"

namespace rvolest {

enum class CovariateKind {
    None,              // model has no covariate
    TrigDeterministic, // (cos 2 pi t/T, sin 2 pi t/T, cos 4 pi t/T)
    SelfResponse,      // covariate is the current response
};

enum class DriftKind { Zero, Linear };

struct DriftSpec {
    DriftKind kind = DriftKind::Zero;
    double coef = 0.0;  // mu(y) = coef * y for Linear
};

enum class JumpLaw { Normal, Gamma };

/// Compound Poisson with `intensity` events per unit time; sizes are
/// scale * U with U ~ Normal(mean, variance) or Gamma(shape, rate).
struct JumpSpec {
    double intensity = 0.0;
    JumpLaw law = JumpLaw::Normal;
    double mean = 0.0;
    double variance = 1.0;
    double shape = 1.0;
    double rate = 1.0;
    double scale = 1.0;
};

/// Y_{t_j} <- Y_{t_j} + p_j Z_j, p_j ~ Bernoulli(prob), Z_j ~ N(0, variance).
struct SpikeSpec {
    double prob = 0.0;
    double variance = 1.0;
};

struct Scenario {
    std::string name;
    BuiltinModel model = BuiltinModel::ExpLinear3;
    Vector theta0;
    std::optional<ParameterBox> box;  // estimation box, defaults per model
    DriftSpec drift;
    CovariateKind covariate = CovariateKind::TrigDeterministic;
    std::optional<JumpSpec> jump;
    std::optional<SpikeSpec> spike;
    int n = 5000;
    double T = 1.0;
    int substeps = 10;
    std::uint64_t seed = 1;

    ParameterBox estimation_box() const { return box ? *box : default_box(model); }
    ModelSpec estimation_model() const { return make_builtin(model, estimation_box()); }

    void validate() const {
        const ModelSpec m = make_builtin(model);
        if (theta0.size() != m.p) throw std::invalid_argument("Scenario: theta0 has wrong dimension");
        if (n < 1) throw std::invalid_argument("Scenario: n must be >= 1");
        if (!(T > 0.0)) throw std::invalid_argument("Scenario: T must be positive");
        if (substeps < 1) throw std::invalid_argument("Scenario: substeps must be >= 1");
        if (jump) {
            if (!(jump->intensity >= 0.0)) throw std::invalid_argument("Scenario: jump intensity must be >= 0");
            if (jump->law == JumpLaw::Normal && !(jump->variance >= 0.0)) {
                throw std::invalid_argument("Scenario: jump variance must be >= 0");
            }
            if (jump->law == JumpLaw::Gamma && !(jump->shape > 0.0 && jump->rate > 0.0)) {
                throw std::invalid_argument("Scenario: gamma shape and rate must be positive");
            }
        }
        if (spike) {
            if (!(spike->prob >= 0.0 && spike->prob <= 1.0)) throw std::invalid_argument("Scenario: spike prob must be in [0,1]");
            if (!(spike->variance >= 0.0)) throw std::invalid_argument("Scenario: spike variance must be >= 0");
        }
        const int cov = covariate == CovariateKind::TrigDeterministic ? 3
                        : covariate == CovariateKind::SelfResponse    ? m.d
                                                                      : 0;
        if (cov != m.cov_dim) throw std::invalid_argument("Scenario: covariate kind does not fit the model");
        if ((covariate == CovariateKind::SelfResponse) != (m.covariate_source == CovariateSource::SelfResponse)) {
            throw std::invalid_argument("Scenario: covariate kind does not fit the model");
        }
        estimation_box().validate();
    }
};

struct PathBundle {
    ObservationPath clean;   // no jumps, no spikes
    ObservationPath jumped;  // jumps, no spikes
    ObservationPath observed;
    std::vector<double> jump_times;
    std::vector<double> jump_sizes;
    std::vector<int> spike_indices;  // observation indices j in 0..n
};

inline Vector trig_covariate(double t, double horizon) {
    const double w = 2.0 * std::numbers::pi * t / horizon;
    Vector x(3);
    x << std::cos(w), std::sin(w), std::cos(2.0 * w);
    return x;
}

inline PathBundle simulate(const Scenario& sc, std::uint64_t replication = 0) {
    sc.validate();
    const ModelSpec model = make_builtin(sc.model);
    const int d = model.d;
    const long steps = static_cast<long>(sc.n) * sc.substeps;
    const double dt = sc.T / static_cast<double>(steps);
    const double sqdt = std::sqrt(dt);

    Engine brownian = rng_stream(sc.seed, replication, Lane::Brownian);
    Engine jumps_rng = rng_stream(sc.seed, replication, Lane::Jumps);
    Engine spikes_rng = rng_stream(sc.seed, replication, Lane::Spikes);
    std::normal_distribution<double> stdnorm(0.0, 1.0);

    PathBundle out;

    // Jump increments keyed by refined step index k (increment k-1 -> k).
    std::vector<std::pair<long, Vector>> jump_at;
    if (sc.jump && sc.jump->intensity > 0.0) {
        const JumpSpec& js = *sc.jump;
        std::poisson_distribution<long> count_dist(js.intensity * sc.T);
        const long count = count_dist(jumps_rng);
        std::uniform_real_distribution<double> unif(0.0, sc.T);
        std::vector<double> times(static_cast<std::size_t>(count));
        for (auto& t : times) t = unif(jumps_rng);
        std::normal_distribution<double> size_normal(js.mean, std::sqrt(js.variance));
        std::gamma_distribution<double> size_gamma(js.shape, 1.0 / js.rate);
        std::vector<Vector> sizes;
        for (long i = 0; i < count; ++i) {
            Vector s(d);
            for (int c = 0; c < d; ++c) {
                s[c] = js.scale * (js.law == JumpLaw::Normal ? size_normal(jumps_rng) : size_gamma(jumps_rng));
            }
            sizes.push_back(std::move(s));
        }
        std::vector<std::size_t> order(times.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
        for (std::size_t i : order) {
            long k = static_cast<long>(std::ceil(times[i] / dt));
            k = std::clamp(k, 1L, steps);
            jump_at.emplace_back(k, sizes[i]);
            out.jump_times.push_back(times[i]);
            out.jump_sizes.push_back(sizes[i][0]);
        }
    }
    const bool has_jumps = !jump_at.empty();

    RowMatrix y_clean(sc.n + 1, d), y_jump(sc.n + 1, d);
    RowMatrix cov(sc.n + 1, sc.covariate == CovariateKind::TrigDeterministic ? 3 : 0);
    Vector yc = Vector::Zero(d), yj = Vector::Zero(d), dw(d);
    y_clean.row(0) = yc.transpose();
    y_jump.row(0) = yj.transpose();
    if (cov.cols() > 0) cov.row(0) = trig_covariate(0.0, sc.T).transpose();

    ModelEval ev;
    auto diffusion = [&](const Vector& y, double t) -> Matrix {
        if (sc.covariate == CovariateKind::TrigDeterministic) {
            const Vector x = trig_covariate(t, sc.T);
            model.evaluate({x.data(), 3}, sc.theta0, 0, ev);
        } else if (sc.covariate == CovariateKind::SelfResponse) {
            model.evaluate({y.data(), static_cast<std::size_t>(d)}, sc.theta0, 0, ev);
        } else {
            model.evaluate({}, sc.theta0, 0, ev);
        }
        if (d == 1) {
            Matrix s(1, 1);
            s(0, 0) = std::sqrt(std::max(ev.S(0, 0), 0.0));
            return s;
        }
        return SpdMatrix(ev.S).lower();
    };
    auto drift = [&](const Vector& y) -> Vector {
        return sc.drift.kind == DriftKind::Linear ? Vector(sc.drift.coef * y) : Vector(Vector::Zero(d));
    };

    std::size_t next_jump = 0;
    for (long k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        for (int c = 0; c < d; ++c) dw[c] = sqdt * stdnorm(brownian);
        yc += drift(yc) * dt + diffusion(yc, t) * dw;
        if (has_jumps) {
            yj += drift(yj) * dt + diffusion(yj, t) * dw;
            while (next_jump < jump_at.size() && jump_at[next_jump].first == k + 1) {
                yj += jump_at[next_jump].second;
                ++next_jump;
            }
        }
        if ((k + 1) % sc.substeps == 0) {
            const long j = (k + 1) / sc.substeps;
            y_clean.row(j) = yc.transpose();
            y_jump.row(j) = (has_jumps ? yj : yc).transpose();
            if (cov.cols() > 0) cov.row(j) = trig_covariate(static_cast<double>(j) * sc.T / sc.n, sc.T).transpose();
        }
    }

    RowMatrix y_obs = y_jump;
    if (sc.spike) {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const double sd = std::sqrt(sc.spike->variance);
        for (int j = 0; j <= sc.n; ++j) {
            const bool hit = unif(spikes_rng) < sc.spike->prob;
            for (int c = 0; c < d; ++c) {
                const double z = sd * stdnorm(spikes_rng);
                if (hit) y_obs(j, c) += z;
            }
            if (hit) out.spike_indices.push_back(j);
        }
    }

    out.clean = ObservationPath::make(sc.T, cov, std::move(y_clean));
    out.jumped = ObservationPath::make(sc.T, cov, std::move(y_jump));
    out.observed = ObservationPath::make(sc.T, cov, std::move(y_obs));
    return out;
}

/// Named scenarios reproducing the simulation designs. `n` scales the jump
/// intensity as q = 0.01 n.
inline Scenario preset(const std::string& name, int n = 5000, std::uint64_t seed = 1) {
    Scenario s;
    s.name = name;
    s.n = n;
    s.seed = seed;
    s.T = 1.0;
    s.substeps = 10;
    const double q = 0.01 * n;
    if (name == "sec6-1-clean" || name == "sec6-1-spike" || name == "sec6-2-jump-normal" ||
        name == "sec6-2-jump-gamma") {
        s.model = BuiltinModel::ExpLinear3;
        s.theta0 = Vector(3);
        s.theta0 << -2.0, 3.0, 0.0;
        s.covariate = CovariateKind::TrigDeterministic;
        if (name == "sec6-1-spike") s.spike = SpikeSpec{0.01, 1.0};
        if (name == "sec6-2-jump-normal") {
            JumpSpec j;
            j.intensity = q;
            j.law = JumpLaw::Normal;
            j.mean = 0.0;
            j.variance = 3.0;
            s.jump = j;
        }
        if (name == "sec6-2-jump-gamma") {
            JumpSpec j;
            j.intensity = q;
            j.law = JumpLaw::Gamma;
            j.shape = 1.0;
            j.rate = 1.0;
            s.jump = j;
        }
        return s;
    }
    if (name == "sec6-5-jumpdiff") {
        s.model = BuiltinModel::RationalDiffusion;
        s.theta0 = Vector(2);
        s.theta0 << 2.0, 3.0;
        s.covariate = CovariateKind::SelfResponse;
        s.drift = DriftSpec{DriftKind::Linear, 1.0};
        JumpSpec j;
        j.intensity = q;
        j.law = JumpLaw::Normal;
        j.variance = 3.0;
        s.jump = j;
        return s;
    }
    throw std::invalid_argument("unknown preset '" + name + "'");
}

inline std::vector<std::string> preset_names() {
    return {"sec6-1-clean", "sec6-1-spike", "sec6-2-jump-normal", "sec6-2-jump-gamma", "sec6-5-jumpdiff"};
}

} // namespace rvolest
