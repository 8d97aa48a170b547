#pragma once

// Box-constrained maximization: projected BFGS driven by an analytic
// gradient, and a projected Nelder-Mead used when the objective cannot be
// evaluated on part of the box.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "rvolest/mathcore.hpp"

namespace rvolest {

struct BoxOptimum {
    Vector x;
    double value = -std::numeric_limits<double>::infinity();
    Vector gradient;
    int iterations = 0;
    bool converged = false;
    bool hit_domain_error = false;
    double projected_gradient = std::numeric_limits<double>::infinity();
    std::string method;
};

inline Vector project(const Vector& x, const Vector& lower, const Vector& upper) {
    return x.cwiseMax(lower).cwiseMin(upper);
}

/// Sup-norm of P(x + g) - x for an ascent problem. Zero exactly at
/// stationary points and at boundary points whose outward derivative is
/// non-negative.
inline double projected_gradient_norm(const Vector& x, const Vector& g, const Vector& lower, const Vector& upper) {
    return (project(x + g, lower, upper) - x).lpNorm<Eigen::Infinity>();
}

/// Maximizes f over [lower, upper]. `fg(x, grad)` returns f(x) and fills
/// its gradient; it may throw CholeskyFailure where f is undefined, which
/// the line search treats as an infeasible trial point.
///
/// Stops when the projected gradient norm is below tol * grad_scale.
template <class ValueGrad>
BoxOptimum maximize_projected_bfgs(ValueGrad&& fg, const Vector& x0, const Vector& lower, const Vector& upper,
                                   int max_iters, double tol, double grad_scale = 1.0) {
    const auto p = x0.size();
    BoxOptimum out;
    out.method = "projected-bfgs";
    out.x = project(x0, lower, upper);
    out.value = fg(out.x, out.gradient);

    Matrix hinv = Matrix::Identity(p, p);
    bool scaled = false;
    const double c1 = 1e-4;

    for (out.iterations = 0; out.iterations < max_iters; ++out.iterations) {
        const Vector& x = out.x;
        const Vector& g = out.gradient;
        out.projected_gradient = projected_gradient_norm(x, g, lower, upper);
        if (out.projected_gradient <= tol * grad_scale) {
            out.converged = true;
            return out;
        }

        // Variables pinned at a bound with the gradient pushing outward.
        std::vector<bool> active(static_cast<std::size_t>(p), false);
        for (Eigen::Index i = 0; i < p; ++i) {
            active[i] = (x[i] <= lower[i] && g[i] < 0.0) || (x[i] >= upper[i] && g[i] > 0.0);
        }
        auto free_direction = [&](const Matrix& h) {
            Vector gf = g;
            for (Eigen::Index i = 0; i < p; ++i)
                if (active[i]) gf[i] = 0.0;
            Vector d = h * gf;
            for (Eigen::Index i = 0; i < p; ++i)
                if (active[i]) d[i] = 0.0;
            return d;
        };

        Vector dir = free_direction(hinv);
        if (!(g.dot(dir) > 0.0)) {
            hinv.setIdentity();
            scaled = false;
            dir = free_direction(hinv);
        }
        if (!scaled) {
            // Unit-length first step; BFGS rescales after the first update.
            const double nrm = dir.norm();
            if (nrm > 0.0) dir /= nrm;
        }

        bool accepted = false;
        Vector x_new, g_new;
        double f_new = 0.0;
        double step = 1.0;
        for (int ls = 0; ls < 60 && !accepted; ++ls, step *= 0.5) {
            x_new = project(x + step * dir, lower, upper);
            if ((x_new - x).lpNorm<Eigen::Infinity>() == 0.0) break;
            try {
                f_new = fg(x_new, g_new);
            } catch (const CholeskyFailure&) {
                out.hit_domain_error = true;
                continue;
            }
            if (!std::isfinite(f_new)) continue;
            if (f_new >= out.value + c1 * g.dot(x_new - x)) {
                accepted = true;
            } else if (std::abs(f_new - out.value) <= 1e-14 * std::max(1.0, std::abs(out.value)) &&
                       projected_gradient_norm(x_new, g_new, lower, upper) < out.projected_gradient) {
                // Function differences are at round-off; progress is measured
                // by the gradient instead.
                accepted = true;
            }
        }
        if (!accepted) {
            if (scaled) {
                hinv.setIdentity();
                scaled = false;
                continue;
            }
            break;
        }

        const Vector s = x_new - out.x;
        // Ascent problem: y is the change of the negated gradient.
        const Vector y = out.gradient - g_new;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (!scaled) {
                hinv = Matrix::Identity(p, p) * (sy / y.squaredNorm());
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Matrix eye = Matrix::Identity(p, p);
            hinv = (eye - rho * s * y.transpose()) * hinv * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        out.x = x_new;
        out.value = f_new;
        out.gradient = g_new;
    }
    out.projected_gradient = projected_gradient_norm(out.x, out.gradient, lower, upper);
    out.converged = out.projected_gradient <= tol * grad_scale;
    return out;
}

/// Nelder-Mead on the box: every trial point is projected, and points where
/// f throws CholeskyFailure score -inf.
template <class Value>
BoxOptimum maximize_nelder_mead(Value&& f, const Vector& x0, const Vector& lower, const Vector& upper,
                                int max_iters, double tol) {
    const auto p = x0.size();
    const double neg_inf = -std::numeric_limits<double>::infinity();
    BoxOptimum out;
    out.method = "nelder-mead";

    auto eval = [&](const Vector& x) {
        try {
            const double v = f(x);
            return std::isfinite(v) ? v : neg_inf;
        } catch (const CholeskyFailure&) {
            out.hit_domain_error = true;
            return neg_inf;
        }
    };

    std::vector<Vector> simplex;
    std::vector<double> values;
    simplex.push_back(project(x0, lower, upper));
    for (Eigen::Index i = 0; i < p; ++i) {
        Vector v = simplex[0];
        const double step = 0.05 * (upper[i] - lower[i]);
        v[i] = (v[i] + step <= upper[i]) ? v[i] + step : v[i] - step;
        simplex.push_back(project(v, lower, upper));
    }
    for (const auto& v : simplex) values.push_back(eval(v));

    std::vector<std::size_t> order(simplex.size());
    for (out.iterations = 0; out.iterations < max_iters; ++out.iterations) {
        std::iota(order.begin(), order.end(), 0);
        // Best first; stable so ties keep insertion order.
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];

        double spread = 0.0;
        for (const auto& v : simplex) spread = std::max(spread, (v - simplex[best]).lpNorm<Eigen::Infinity>());
        if (std::isfinite(values[worst]) &&
            std::abs(values[best] - values[worst]) <= tol * std::max(1.0, std::abs(values[best])) && spread < 1e-7) {
            out.converged = true;
            break;
        }

        Vector centroid = Vector::Zero(p);
        for (std::size_t i = 0; i < simplex.size(); ++i)
            if (i != worst) centroid += simplex[i];
        centroid /= static_cast<double>(p);

        const Vector xr = project(centroid + (centroid - simplex[worst]), lower, upper);
        const double fr = eval(xr);
        if (fr > values[best]) {
            const Vector xe = project(centroid + 2.0 * (centroid - simplex[worst]), lower, upper);
            const double fe = eval(xe);
            if (fe > fr) {
                simplex[worst] = xe;
                values[worst] = fe;
            } else {
                simplex[worst] = xr;
                values[worst] = fr;
            }
            continue;
        }
        if (fr > values[second]) {
            simplex[worst] = xr;
            values[worst] = fr;
            continue;
        }
        const bool outside = fr > values[worst];
        const Vector xc = outside ? project(centroid + 0.5 * (xr - centroid), lower, upper)
                                  : project(centroid + 0.5 * (simplex[worst] - centroid), lower, upper);
        const double fc = eval(xc);
        if (fc > std::max(fr, values[worst])) {
            simplex[worst] = xc;
            values[worst] = fc;
            continue;
        }
        for (std::size_t i = 0; i < simplex.size(); ++i) {
            if (i == best) continue;
            simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
            values[i] = eval(simplex[i]);
        }
    }
    const auto it = std::max_element(values.begin(), values.end());
    out.x = simplex[static_cast<std::size_t>(it - values.begin())];
    out.value = *it;
    return out;
}

} // namespace rvolest
