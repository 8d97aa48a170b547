#pragma once

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rvolest/likelihood.hpp"
#include "rvolest/optimizer.hpp"

namespace rvolest {

struct OptimizerOptions {
    std::optional<Vector> initial;  // defaults to model.box.initial
    int max_iters = 500;
    double tol = 1e-8;  // on the projected gradient of H_n / n
    bool fallback = true;
};

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
};

/// Plug-in estimates of Gamma_0(lambda), Sigma_0(lambda) and the Fisher
/// information, time averages replaced by averages over j.
struct PluginMatrices {
    Matrix gamma;
    Matrix sigma;
    Matrix fisher;
};

struct ConfidenceResult {
    Matrix avar;                              // Gamma^{-1} Sigma Gamma^{-1}
    std::vector<std::optional<Interval>> ci;  // empty entry: negative variance
    std::vector<bool> negative_variance;
    std::optional<Vector> u;                  // standardized statistic, when theta0 is known
};

struct EstimationResult {
    Vector theta_hat;
    Vector start;
    double objective_value = 0.0;
    RobustConfig config;
    Matrix gamma_hat;
    Matrix sigma_hat;
    Matrix fisher_hat;
    Matrix avar;
    std::vector<std::optional<Interval>> ci;
    std::vector<bool> negative_variance;
    double alpha = 0.05;
    Eigen::Index n = 0;
    bool converged = false;
    bool on_boundary = false;
    bool gamma_singular = false;
    int iterations = 0;
    std::string method;
};

namespace detail {

/// S and dS at (x, theta); dS from central differences of S when the model
/// has no analytic derivative.
inline void first_order_eval(const ModelSpec& model, std::span<const double> x, const Vector& theta, ModelEval& ev) {
    if (model.max_order >= 1) {
        model.evaluate(x, theta, 1, ev);
        return;
    }
    model.evaluate(x, theta, 0, ev);
    ModelEval up, dn;
    ev.dS.resize(static_cast<std::size_t>(model.p));
    for (int k = 0; k < model.p; ++k) {
        const double step = 1e-6 * (1.0 + std::abs(theta[k]));
        Vector tu = theta, td = theta;
        tu[k] += step;
        td[k] -= step;
        model.evaluate(x, tu, 0, up);
        model.evaluate(x, td, 0, dn);
        ev.dS[k] = (up.S - dn.S) / (2.0 * step);
    }
}

} // namespace detail

inline PluginMatrices plugin_matrices(const ObservationPath& path, const ModelSpec& model, const Vector& theta_hat,
                                      const RobustConfig& config) {
    config.validate();
    check_compatible(path, model);
    const int p = model.p;
    const int d = model.d;
    const double lam = config.lambda;
    const auto n = path.n();

    // Scalar coefficients multiplying d^{-power} tr(A_k A_l) and tr A_k tr A_l.
    double g_tt = 0.0, g_t2 = 0.0, g_pow = 0.0;
    double s_tt = 0.0, s_t2 = 0.0, s_pow = 0.0;
    switch (config.variant) {
        case Variant::Gqlf:
            g_tt = s_tt = 0.5;
            break;
        case Variant::DensityPower: {
            const double k = k_const(lam, d);
            g_tt = 0.5 * k / (lam + 1.0);
            g_t2 = g_tt * 0.5 * lam * lam;
            g_pow = 0.5 * lam;
            s_tt = 0.5 * k_const(2.0 * lam, d) / (2.0 * lam + 1.0);
            s_t2 = 0.25 * eps_prime(lam, d);
            s_pow = lam;
            break;
        }
        case Variant::Hoelder: {
            g_tt = 0.5 * k_const(lam, d) / (lam + 1.0);
            g_pow = lam / (2.0 * (lam + 1.0));
            s_tt = 0.5 * k_const(2.0 * lam, d) / (2.0 * lam + 1.0);
            s_t2 = eps_dprime(lam, d);
            s_pow = lam / (lam + 1.0);
            break;
        }
    }

    PluginMatrices out{Matrix::Zero(p, p), Matrix::Zero(p, p), Matrix::Zero(p, p)};
    ModelEval ev;
    Matrix tt(p, p);
    Vector tr(p);
    std::vector<Matrix> a(static_cast<std::size_t>(p));
    for (Eigen::Index j = 1; j <= n; ++j) {
        detail::first_order_eval(model, model_covariate(path, model, j - 1), theta_hat, ev);
        double log_det = 0.0;
        if (d == 1) {
            const double s = ev.S(0, 0);
            if (!(s > 0.0) || !std::isfinite(s)) {
                throw CholeskyFailure("S not positive at j=" + std::to_string(j), static_cast<std::size_t>(j));
            }
            log_det = std::log(s);
            for (int k = 0; k < p; ++k) tr[k] = ev.dS[k](0, 0) / s;
            tt = tr * tr.transpose();
        } else {
            std::optional<SpdMatrix> chol;
            try {
                chol.emplace(ev.S);
            } catch (const CholeskyFailure& e) {
                throw CholeskyFailure(std::string(e.what()) + " at j=" + std::to_string(j), static_cast<std::size_t>(j));
            }
            log_det = chol->log_det();
            for (int k = 0; k < p; ++k) {
                a[k] = chol->solve_matrix(ev.dS[k]);
                tr[k] = a[k].trace();
            }
            for (int k = 0; k < p; ++k)
                for (int l = 0; l < p; ++l) tt(k, l) = (a[k] * a[l]).trace();
        }
        const Matrix t2 = tr * tr.transpose();
        out.fisher += 0.5 * tt;
        out.gamma += std::exp(-g_pow * log_det) * (g_tt * tt + g_t2 * t2);
        out.sigma += std::exp(-s_pow * log_det) * (s_tt * tt + s_t2 * t2);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    out.fisher *= inv_n;
    out.gamma *= inv_n;
    out.sigma *= inv_n;
    return out;
}

inline double normal_quantile(double prob) {
    return boost::math::quantile(boost::math::normal_distribution<double>(), prob);
}

/// theta_i +- z_{1-alpha/2} sqrt(avar_ii / n); u_i = sqrt(n)(theta_i - theta0_i)/sqrt(avar_ii).
inline ConfidenceResult confidence_intervals(const Vector& theta_hat, const Matrix& gamma, const Matrix& sigma,
                                             Eigen::Index n, double alpha,
                                             const std::optional<Vector>& theta0 = std::nullopt) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("confidence_intervals: alpha must be in (0, 1)");
    const auto p = theta_hat.size();
    Eigen::FullPivLU<Matrix> lu(gamma);
    if (!gamma.allFinite() || !lu.isInvertible()) throw SingularGamma("plug-in Gamma is not invertible");
    const Matrix ginv = lu.inverse();
    ConfidenceResult out;
    out.avar = ginv * sigma * ginv.transpose();
    out.avar = 0.5 * (out.avar + out.avar.transpose());
    const double z = normal_quantile(1.0 - 0.5 * alpha);
    const double root_n = std::sqrt(static_cast<double>(n));
    out.ci.resize(static_cast<std::size_t>(p));
    out.negative_variance.assign(static_cast<std::size_t>(p), false);
    if (theta0) out.u = Vector::Constant(p, std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index i = 0; i < p; ++i) {
        const double v = out.avar(i, i);
        if (!(v >= 0.0)) {
            out.negative_variance[i] = true;
            continue;
        }
        const double half = z * std::sqrt(v) / root_n;
        out.ci[i] = Interval{theta_hat[i] - half, theta_hat[i] + half};
        if (theta0 && v > 0.0) (*out.u)[i] = root_n * (theta_hat[i] - (*theta0)[i]) / std::sqrt(v);
    }
    return out;
}

/// sqrt(n) h^kappa / lambda with h = T / n. Values that are not small mean
/// lambda is too small for this sample size.
inline double check_taper_schedule(Eigen::Index n, double lambda, double kappa = 1.0, double horizon = 1.0) {
    if (n < 1 || !(lambda > 0.0) || !(kappa > 0.5)) {
        throw std::invalid_argument("check_taper_schedule: need n >= 1, lambda > 0, kappa > 1/2");
    }
    const double nn = static_cast<double>(n);
    return std::sqrt(nn) * std::pow(horizon / nn, kappa) / lambda;
}

inline EstimationResult estimate(const ObservationPath& path, const ModelSpec& model, const RobustConfig& config,
                                 const OptimizerOptions& opts = {}, double alpha = 0.05) {
    const QuasiLikelihood ql(path, model, config);
    const ParameterBox& box = model.box;
    const Vector start = opts.initial ? *opts.initial : box.initial;
    if (start.size() != model.p || !box.contains(start)) {
        throw std::invalid_argument("estimate: initial point must lie inside the parameter box");
    }
    const double grad_scale = static_cast<double>(path.n());
    auto fg = [&](const Vector& x, Vector& g) { return ql.value_and_gradient(x, g); };
    auto f = [&](const Vector& x) { return ql.value(x); };

    std::optional<BoxOptimum> best;
    int iterations = 0;
    bool need_fallback = false;
    try {
        best = maximize_projected_bfgs(fg, start, box.lower, box.upper, opts.max_iters, opts.tol, grad_scale);
        iterations += best->iterations;
        need_fallback = !best->converged && best->hit_domain_error;
    } catch (const CholeskyFailure&) {
        if (!opts.fallback) throw;
        need_fallback = true;
    }
    if (need_fallback && opts.fallback) {
        BoxOptimum nm = maximize_nelder_mead(f, start, box.lower, box.upper, 200 * model.p * opts.max_iters / 100, 1e-12);
        iterations += nm.iterations;
        if (std::isfinite(nm.value)) {
            BoxOptimum polished = nm;
            try {
                polished = maximize_projected_bfgs(fg, nm.x, box.lower, box.upper, opts.max_iters, opts.tol, grad_scale);
                iterations += polished.iterations;
                polished.method = "nelder-mead+projected-bfgs";
            } catch (const CholeskyFailure&) {
                polished = nm;
            }
            if (!best || polished.value >= best->value) best = polished;
        }
    }
    if (!best || !std::isfinite(best->value)) {
        throw CholeskyFailure("estimate: objective undefined on the explored part of the box");
    }

    EstimationResult r;
    r.theta_hat = best->x;
    r.start = start;
    r.objective_value = best->value;
    r.config = config;
    r.alpha = alpha;
    r.n = path.n();
    r.converged = best->converged;
    r.iterations = iterations;
    r.method = best->method;
    for (Eigen::Index i = 0; i < model.p; ++i) {
        if (r.theta_hat[i] <= box.lower[i] || r.theta_hat[i] >= box.upper[i]) r.on_boundary = true;
    }

    const PluginMatrices pm = plugin_matrices(path, model, r.theta_hat, config);
    r.gamma_hat = pm.gamma;
    r.sigma_hat = pm.sigma;
    r.fisher_hat = pm.fisher;
    try {
        ConfidenceResult ci = confidence_intervals(r.theta_hat, pm.gamma, pm.sigma, r.n, alpha);
        r.avar = std::move(ci.avar);
        r.ci = std::move(ci.ci);
        r.negative_variance = std::move(ci.negative_variance);
    } catch (const SingularGamma&) {
        r.gamma_singular = true;
        r.avar = Matrix::Constant(model.p, model.p, std::numeric_limits<double>::quiet_NaN());
        r.ci.assign(static_cast<std::size_t>(model.p), std::nullopt);
        r.negative_variance.assign(static_cast<std::size_t>(model.p), false);
    }
    return r;
}

} // namespace rvolest
