#pragma once

// Gaussian quasi-likelihood objectives (conventional, density-power and
// Hoelder-based) with analytic theta-derivatives.

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rvolest/mathcore.hpp"
#include "rvolest/model.hpp"
#include "rvolest/path.hpp"

namespace rvolest {

enum class Variant { Gqlf, DensityPower, Hoelder };

inline std::string_view variant_name(Variant v) {
    switch (v) {
        case Variant::Gqlf: return "gqlf";
        case Variant::DensityPower: return "dp";
        case Variant::Hoelder: return "holder";
    }
    return "unknown";
}

inline Variant variant_from_name(std::string_view s) {
    if (s == "gqlf") return Variant::Gqlf;
    if (s == "dp" || s == "density-power") return Variant::DensityPower;
    if (s == "holder" || s == "hoelder") return Variant::Hoelder;
    throw std::invalid_argument("unknown variant '" + std::string(s) + "'");
}

struct RobustConfig {
    Variant variant = Variant::Gqlf;
    double lambda = 0.0;  // ignored for Gqlf
    double lambda_bar = 2.0;

    static RobustConfig gqlf() { return {Variant::Gqlf, 0.0, 2.0}; }
    static RobustConfig density_power(double lambda) { return {Variant::DensityPower, lambda, 2.0}; }
    static RobustConfig hoelder(double lambda) { return {Variant::Hoelder, lambda, 2.0}; }

    bool robust() const { return variant != Variant::Gqlf; }

    void validate() const {
        if (robust() && !(lambda > 0.0 && lambda <= lambda_bar)) {
            throw std::invalid_argument("RobustConfig: lambda must lie in (0, lambda_bar]");
        }
    }

    /// "gqlf", "dp(0.5)", ...
    std::string label() const {
        if (!robust()) return "gqlf";
        char buf[64];
        std::snprintf(buf, sizeof buf, "%s(%g)", std::string(variant_name(variant)).c_str(), lambda);
        return buf;
    }
};

/// Per-increment quantities shared by all three objectives:
/// log det S, q = S^{-1}[eps, eps], a_k = tr(S^{-1} dS_k),
/// b_k = -d q / d theta_k = v' dS_k v with v = S^{-1} eps, and their
/// theta-derivatives da, db.
struct IncrementGeometry {
    double log_det = 0.0;
    double q = 0.0;
    Vector a;
    Vector b;
    Matrix da;
    Matrix db;
};

namespace detail {

inline void scalar_geometry(const ModelEval& ev, double eps, int p, int order, IncrementGeometry& g) {
    const double s = ev.S(0, 0);
    if (!(s > 0.0) || !std::isfinite(s)) throw CholeskyFailure("S is not positive");
    g.log_det = std::log(s);
    g.q = eps * eps / s;
    if (order < 1) return;
    g.a.resize(p);
    g.b.resize(p);
    for (int k = 0; k < p; ++k) {
        g.a[k] = ev.dS[k](0, 0) / s;
        g.b[k] = g.q * g.a[k];
    }
    if (order < 2) return;
    g.da.resize(p, p);
    g.db.resize(p, p);
    for (int k = 0; k < p; ++k) {
        for (int l = 0; l < p; ++l) {
            const double dd = ev.ddS[k * p + l](0, 0) / s;
            g.da(k, l) = -g.a[k] * g.a[l] + dd;
            g.db(k, l) = g.q * (-2.0 * g.a[k] * g.a[l] + dd);
        }
    }
}

inline void matrix_geometry(const ModelEval& ev, const Vector& eps, int p, int order, IncrementGeometry& g) {
    const SpdMatrix chol(ev.S);
    g.log_det = chol.log_det();
    const Vector v = chol.solve(eps);
    g.q = eps.dot(v);
    if (order < 1) return;
    const Matrix sinv = chol.inverse();
    std::vector<Matrix> m(static_cast<std::size_t>(p));
    g.a.resize(p);
    g.b.resize(p);
    for (int k = 0; k < p; ++k) {
        m[k] = sinv * ev.dS[k];
        g.a[k] = m[k].trace();
        g.b[k] = v.dot(ev.dS[k] * v);
    }
    if (order < 2) return;
    g.da.resize(p, p);
    g.db.resize(p, p);
    for (int k = 0; k < p; ++k) {
        for (int l = 0; l < p; ++l) {
            const Matrix& dd = ev.ddS[k * p + l];
            g.da(k, l) = -(m[l] * m[k]).trace() + (sinv * dd).trace();
            g.db(k, l) = -2.0 * v.dot(ev.dS[l] * (m[k] * v)) + v.dot(dd * v);
        }
    }
}

} // namespace detail

/// One objective H_n(theta) bound to a path and a model. The path and model
/// must outlive this object.
class QuasiLikelihood {
public:
    QuasiLikelihood(const ObservationPath& path, const ModelSpec& model, RobustConfig config)
        : path_(&path), model_(&model), config_(config), inc_(path) {
        config_.validate();
        check_compatible(path, model);
        if (config_.robust()) k_ = k_const(config_.lambda, model.d);
    }

    const RobustConfig& config() const { return config_; }
    const ObservationPath& path() const { return *path_; }
    const ModelSpec& model() const { return *model_; }
    const ScaledIncrements& increments() const { return inc_; }

    /// Route d = 1 through the general matrix code. Used to cross-check the
    /// scalar fast path.
    void force_matrix_path(bool on) { force_matrix_ = on; }

    double value(const Vector& theta) const { return accumulate(theta, 0, nullptr, nullptr, nullptr); }

    std::vector<double> summands(const Vector& theta) const {
        std::vector<double> out;
        accumulate(theta, 0, nullptr, nullptr, &out);
        return out;
    }

    double value_and_gradient(const Vector& theta, Vector& grad) const {
        if (model_->max_order >= 1) return accumulate(theta, 1, &grad, nullptr, nullptr);
        grad = fd_gradient(theta);
        return value(theta);
    }

    Vector gradient(const Vector& theta) const {
        Vector g;
        value_and_gradient(theta, g);
        return g;
    }

    /// d^2 H_n / d theta^2, symmetrized.
    Matrix hessian(const Vector& theta) const {
        Matrix h;
        if (model_->max_order >= 2) {
            Vector g;
            accumulate(theta, 2, &g, &h, nullptr);
        } else {
            h = fd_hessian(theta);
        }
        return 0.5 * (h + h.transpose());
    }

    /// Central differences of value(), step 1e-6 (1 + |theta_k|).
    Vector fd_gradient(const Vector& theta) const {
        Vector g(theta.size());
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
            const double step = 1e-6 * (1.0 + std::abs(theta[k]));
            Vector up = theta, dn = theta;
            up[k] += step;
            dn[k] -= step;
            g[k] = (value(up) - value(dn)) / (2.0 * step);
        }
        return g;
    }

    /// Central differences of gradient(), step 1e-4 (1 + |theta_k|).
    Matrix fd_hessian(const Vector& theta) const {
        const auto p = theta.size();
        Matrix h(p, p);
        for (Eigen::Index k = 0; k < p; ++k) {
            const double step = 1e-4 * (1.0 + std::abs(theta[k]));
            Vector up = theta, dn = theta;
            up[k] += step;
            dn[k] -= step;
            h.col(k) = (gradient(up) - gradient(dn)) / (2.0 * step);
        }
        return 0.5 * (h + h.transpose());
    }

    /// Per-increment geometry at theta, exposed for the plug-in matrices and
    /// residuals. `order` is capped by the model's analytic order.
    void geometry(const Vector& theta, Eigen::Index j, int order, ModelEval& ev, IncrementGeometry& g) const {
        const int p = model_->p;
        model_->evaluate(model_covariate(*path_, *model_, j - 1), theta, order, ev);
        try {
            if (model_->d == 1 && !force_matrix_) {
                detail::scalar_geometry(ev, inc_.eps(j - 1, 0), p, order, g);
            } else {
                detail::matrix_geometry(ev, inc_.eps.row(j - 1).transpose(), p, order, g);
            }
        } catch (const CholeskyFailure& e) {
            throw CholeskyFailure("S(x_{j-1}, theta) not positive definite at j=" + std::to_string(j) + ": " +
                                      e.what(),
                                  static_cast<std::size_t>(j));
        }
    }

private:
    double accumulate(const Vector& theta, int order, Vector* grad, Matrix* hess, std::vector<double>* terms) const {
        if (theta.size() != model_->p) throw std::invalid_argument("theta has wrong dimension");
        const int p = model_->p;
        const double dd = static_cast<double>(model_->d);
        const double lam = config_.lambda;
        const double log_phi0 = -0.5 * dd * kLog2Pi;

        ModelEval ev;
        IncrementGeometry g;
        double total = 0.0;
        if (grad) grad->setZero(p);
        if (hess) hess->setZero(p, p);
        if (terms) terms->reserve(static_cast<std::size_t>(inc_.size()));

        for (Eigen::Index j = 1; j <= inc_.size(); ++j) {
            geometry(theta, j, order, ev, g);
            double term = 0.0;
            switch (config_.variant) {
                case Variant::Gqlf: {
                    term = -0.5 * (g.log_det + g.q);
                    if (order >= 1) *grad -= 0.5 * (g.a - g.b);
                    if (order >= 2) *hess -= 0.5 * (g.da - g.db);
                    break;
                }
                case Variant::DensityPower: {
                    // phi(S^{-1/2} eps)^lambda evaluated in log space; underflow to 0
                    // is the correct limit for large q.
                    const double w = std::exp(lam * (log_phi0 - 0.5 * g.q));
                    const double dpow = std::exp(-0.5 * lam * g.log_det);
                    term = dpow * (w / lam - k_);
                    if (order >= 1) {
                        const Vector inner = w * (g.b - g.a) + lam * k_ * g.a;
                        *grad += 0.5 * dpow * inner;
                        if (order >= 2) {
                            Matrix h = -0.5 * lam * inner * g.a.transpose();
                            h += 0.5 * lam * w * (g.b - g.a) * g.b.transpose();
                            h += w * (g.db - g.da) + lam * k_ * g.da;
                            *hess += 0.5 * dpow * h;
                        }
                    }
                    break;
                }
                case Variant::Hoelder: {
                    const double c = lam / (2.0 * (lam + 1.0));
                    const double w = std::exp(lam * (log_phi0 - 0.5 * g.q));
                    const double weight = std::exp(-c * g.log_det) * w;
                    term = weight / lam;
                    if (order >= 1) {
                        const Vector inner = g.b - g.a / (lam + 1.0);
                        *grad += 0.5 * weight * inner;
                        if (order >= 2) {
                            Matrix h = inner * (0.5 * lam * g.b - c * g.a).transpose();
                            h += g.db - g.da / (lam + 1.0);
                            *hess += 0.5 * weight * h;
                        }
                    }
                    break;
                }
            }
            if (terms) terms->push_back(term);
            total += term;
        }
        return total;
    }

    const ObservationPath* path_;
    const ModelSpec* model_;
    RobustConfig config_;
    ScaledIncrements inc_;
    double k_ = 1.0;
    bool force_matrix_ = false;
};

/// Conventional GQLF, additive constant dropped.
inline double gqlf(const ObservationPath& path, const ModelSpec& model, const Vector& theta) {
    return QuasiLikelihood(path, model, RobustConfig::gqlf()).value(theta);
}

inline double dp_gqlf(const ObservationPath& path, const ModelSpec& model, const Vector& theta, double lambda) {
    return QuasiLikelihood(path, model, RobustConfig::density_power(lambda)).value(theta);
}

inline double hoelder_gqlf(const ObservationPath& path, const ModelSpec& model, const Vector& theta, double lambda) {
    return QuasiLikelihood(path, model, RobustConfig::hoelder(lambda)).value(theta);
}

inline double objective(const ObservationPath& path, const ModelSpec& model, const Vector& theta,
                        const RobustConfig& config) {
    return QuasiLikelihood(path, model, config).value(theta);
}

inline Vector grad_objective(const ObservationPath& path, const ModelSpec& model, const Vector& theta,
                             const RobustConfig& config) {
    return QuasiLikelihood(path, model, config).gradient(theta);
}

inline Matrix hess_objective(const ObservationPath& path, const ModelSpec& model, const Vector& theta,
                             const RobustConfig& config) {
    return QuasiLikelihood(path, model, config).hessian(theta);
}

} // namespace rvolest
