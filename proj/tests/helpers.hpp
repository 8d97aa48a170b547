#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "rvolest.hpp"

namespace testing_helpers {

using rvolest::Matrix;
using rvolest::Vector;

/// Adaptive Gauss-Kronrod on [lo, hi].
inline double integrate(const std::function<double(double)>& f, double lo = -12.0, double hi = 12.0) {
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-13);
}

inline double integrate2(const std::function<double(double, double)>& f, double lo = -12.0, double hi = 12.0) {
    return integrate([&](double x) { return integrate([&](double y) { return f(x, y); }, lo, hi); }, lo, hi);
}

/// Centered normal density written out by hand, d = 1.
inline double normal_pdf1(double z, double var) {
    return std::exp(-0.5 * z * z / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

/// Centered normal density for a 2x2 covariance, inverse by cofactors.
inline double normal_pdf2(double x, double y, const Matrix& c) {
    const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
    const double q = (c(1, 1) * x * x - 2.0 * c(0, 1) * x * y + c(0, 0) * y * y) / det;
    return std::exp(-0.5 * q) / (2.0 * std::numbers::pi * std::sqrt(det));
}

/// Two-dimensional response with a scalar covariate x:
/// S(x, theta) = [[e^{t1 + x}, t3], [t3, e^{t2 - x}]]. Analytic up to order 2.
inline rvolest::ModelSpec make_bivariate_model() {
    rvolest::ModelSpec m;
    m.name = "bivariate-test";
    m.d = 2;
    m.p = 3;
    m.cov_dim = 1;
    m.max_order = 2;
    m.box = {Vector::Constant(3, -3.0), Vector::Constant(3, 3.0), Vector::Zero(3)};
    m.box.lower[2] = -0.5;
    m.box.upper[2] = 0.5;
    m.evaluate = [](std::span<const double> x, const Vector& th, int order, rvolest::ModelEval& out) {
        const double e1 = std::exp(th[0] + x[0]);
        const double e2 = std::exp(th[1] - x[0]);
        out.S.resize(2, 2);
        out.S << e1, th[2], th[2], e2;
        if (order < 1) return;
        out.dS.assign(3, Matrix::Zero(2, 2));
        out.dS[0](0, 0) = e1;
        out.dS[1](1, 1) = e2;
        out.dS[2](0, 1) = out.dS[2](1, 0) = 1.0;
        if (order < 2) return;
        out.ddS.assign(9, Matrix::Zero(2, 2));
        out.ddS[0](0, 0) = e1;
        out.ddS[4](1, 1) = e2;
    };
    return m;
}

/// Path of the bivariate model at theta with Gaussian increments.
inline rvolest::ObservationPath bivariate_path(const Vector& theta, int n, std::uint64_t seed) {
    const rvolest::ModelSpec m = make_bivariate_model();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    rvolest::RowMatrix x(n + 1, 1), y(n + 1, 2);
    const double h = 1.0 / n;
    y.row(0).setZero();
    rvolest::ModelEval ev;
    for (int j = 0; j <= n; ++j) x(j, 0) = std::sin(2.0 * std::numbers::pi * j * h);
    for (int j = 1; j <= n; ++j) {
        m.evaluate({&x(j - 1, 0), 1}, theta, 0, ev);
        const Matrix l = rvolest::SpdMatrix(ev.S).lower();
        Vector w(2);
        w[0] = z(rng);
        w[1] = z(rng);
        y.row(j) = y.row(j - 1) + (std::sqrt(h) * l * w).transpose();
    }
    return rvolest::ObservationPath::make(1.0, std::move(x), std::move(y));
}

/// Short exp-linear path, optionally with a few spikes.
inline rvolest::ObservationPath small_trig_path(int n, std::uint64_t seed, double spike_prob = 0.0) {
    rvolest::Scenario sc = rvolest::preset(spike_prob > 0.0 ? "sec6-1-spike" : "sec6-1-clean", n, seed);
    sc.substeps = 2;
    if (spike_prob > 0.0) sc.spike->prob = spike_prob;
    return rvolest::simulate(sc).observed;
}

inline double max_rel_error(const Vector& a, const Vector& b) {
    const double scale = std::max(1.0, b.lpNorm<Eigen::Infinity>());
    return (a - b).lpNorm<Eigen::Infinity>() / scale;
}

} // namespace testing_helpers
