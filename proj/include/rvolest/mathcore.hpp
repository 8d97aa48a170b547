#pragma once

// Closed-form Gaussian constants and small dense SPD utilities.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "rvolest/errors.hpp"

namespace rvolest {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// Cholesky-factored symmetric positive definite matrix.
///
/// Construction fails with CholeskyFailure when the input is not symmetric to
/// 1e-12 relative, or when a pivot drops below 1e-12 times the largest
/// diagonal entry. Intended for d <= ~8.
class SpdMatrix {
public:
    SpdMatrix() = default;

    explicit SpdMatrix(const Matrix& m) : m_(m), l_(Matrix::Zero(m.rows(), m.cols())) {
        if (m.rows() != m.cols() || m.rows() == 0) {
            throw CholeskyFailure("SpdMatrix: matrix must be square and non-empty");
        }
        const Eigen::Index d = m.rows();
        double max_diag = 0.0;
        double max_abs = 0.0;
        for (Eigen::Index i = 0; i < d; ++i) {
            max_diag = std::max(max_diag, m(i, i));
            for (Eigen::Index j = 0; j < d; ++j) max_abs = std::max(max_abs, std::abs(m(i, j)));
        }
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = i + 1; j < d; ++j) {
                if (std::abs(m(i, j) - m(j, i)) > 1e-12 * max_abs) {
                    throw CholeskyFailure("SpdMatrix: matrix is not symmetric");
                }
            }
        }
        if (!(max_diag > 0.0) || !std::isfinite(max_diag)) {
            throw CholeskyFailure("SpdMatrix: non-positive diagonal");
        }
        const double floor = 1e-12 * max_diag;
        log_det_ = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            double pivot = m(j, j);
            for (Eigen::Index k = 0; k < j; ++k) pivot -= l_(j, k) * l_(j, k);
            if (!(pivot > floor)) {
                throw CholeskyFailure("SpdMatrix: pivot " + std::to_string(j) + " not positive");
            }
            const double ljj = std::sqrt(pivot);
            l_(j, j) = ljj;
            log_det_ += std::log(pivot);
            for (Eigen::Index i = j + 1; i < d; ++i) {
                double s = m(i, j);
                for (Eigen::Index k = 0; k < j; ++k) s -= l_(i, k) * l_(j, k);
                l_(i, j) = s / ljj;
            }
        }
    }

    Eigen::Index dim() const { return m_.rows(); }
    const Matrix& matrix() const { return m_; }
    const Matrix& lower() const { return l_; }
    double log_det() const { return log_det_; }
    double det() const { return std::exp(log_det_); }

    /// Solves S x = b.
    Vector solve(const Vector& b) const {
        Vector y = l_.triangularView<Eigen::Lower>().solve(b);
        return l_.transpose().triangularView<Eigen::Upper>().solve(y);
    }

    /// L^{-1} b, so that |L^{-1} b|^2 = S^{-1}[b, b].
    Vector whiten(const Vector& b) const { return l_.triangularView<Eigen::Lower>().solve(b); }

    /// b' S^{-1} b.
    double inv_quad(const Vector& b) const { return whiten(b).squaredNorm(); }

    Matrix inverse() const { return solve_matrix(Matrix::Identity(dim(), dim())); }

    Matrix solve_matrix(const Matrix& b) const {
        Matrix y = l_.triangularView<Eigen::Lower>().solve(b);
        return l_.transpose().triangularView<Eigen::Upper>().solve(y);
    }

private:
    Matrix m_;
    Matrix l_;
    double log_det_ = 0.0;
};

/// N_d(mean, cov) density.
class GaussKernel {
public:
    GaussKernel(Vector mean, const Matrix& cov) : mean_(std::move(mean)), cov_(cov) {
        if (mean_.size() != cov_.dim()) throw std::invalid_argument("GaussKernel: dimension mismatch");
    }

    static GaussKernel standard(int d) { return GaussKernel(Vector::Zero(d), Matrix::Identity(d, d)); }

    Eigen::Index dim() const { return mean_.size(); }
    const Vector& mean() const { return mean_; }
    const SpdMatrix& cov() const { return cov_; }

    double log_density(const Vector& z) const {
        const double d = static_cast<double>(dim());
        return -0.5 * (d * kLog2Pi + cov_.log_det() + cov_.inv_quad(z - mean_));
    }
    double density(const Vector& z) const { return std::exp(log_density(z)); }

private:
    Vector mean_;
    SpdMatrix cov_;
};

/// K_{lambda,d} = (2 pi)^{-d lambda / 2} / (lambda + 1)^{1 + d/2}.
inline double k_const(double lambda, int d) {
    if (!(lambda >= 0.0) || d < 1) throw std::invalid_argument("k_const: need lambda >= 0 and d >= 1");
    const double dd = static_cast<double>(d);
    return std::exp(-0.5 * dd * lambda * kLog2Pi - (1.0 + 0.5 * dd) * std::log1p(lambda));
}

/// Integral of phi(z; mu, cov)^a over R^d: a^{-d/2} det(2 pi cov)^{(1-a)/2}.
inline double phi_power_integral(double a, const SpdMatrix& cov) {
    if (!(a > 0.0)) throw std::invalid_argument("phi_power_integral: need a > 0");
    const double d = static_cast<double>(cov.dim());
    const double log_det_2pi = d * kLog2Pi + cov.log_det();
    return std::exp(-0.5 * d * std::log(a) + 0.5 * (1.0 - a) * log_det_2pi);
}

inline double phi_power_integral(double a, const Matrix& cov) { return phi_power_integral(a, SpdMatrix(cov)); }

/// Integral of phi(z)^{lambda+1} A[z, z] dz = K_{lambda,d} tr(A).
inline double gauss_quadratic_moment(double lambda, const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("gauss_quadratic_moment: A must be square");
    return k_const(lambda, static_cast<int>(a.rows())) * a.trace();
}

/// Integral of phi(z)^{lambda+1} A1[z, z] A2[z, z] dz
/// = K_{lambda,d} / (lambda + 1) * (tr A1 tr A2 + 2 tr(A1 A2)).
inline double gauss_biquadratic_moment(double lambda, const Matrix& a1, const Matrix& a2) {
    if (a1.rows() != a1.cols() || a1.rows() != a2.rows() || a2.rows() != a2.cols()) {
        throw std::invalid_argument("gauss_biquadratic_moment: dimension mismatch");
    }
    const double k = k_const(lambda, static_cast<int>(a1.rows()));
    return k / (lambda + 1.0) * (a1.trace() * a2.trace() + 2.0 * (a1 * a2).trace());
}

/// Coefficient of tr(A_k) tr(A_l) / 4 in the density-power score covariance:
/// (1/(2 lambda + 1) + 2 lambda - 1) K_{2 lambda,d} - lambda^2 K_{lambda,d}^2.
/// Vanishes as lambda -> 0.
inline double eps_prime(double lambda, int d) {
    if (!(lambda > 0.0)) throw std::invalid_argument("eps_prime: need lambda > 0");
    const double k = k_const(lambda, d);
    const double k2 = k_const(2.0 * lambda, d);
    return (1.0 / (2.0 * lambda + 1.0) + 2.0 * lambda - 1.0) * k2 - lambda * lambda * k * k;
}

/// Coefficient of tr(A_k) tr(A_l) in the Hoelder-based score covariance:
/// (1/4) (1/(2 lambda + 1) - 1/(lambda + 1)^2) K_{2 lambda,d}.
inline double eps_dprime(double lambda, int d) {
    if (!(lambda > 0.0)) throw std::invalid_argument("eps_dprime: need lambda > 0");
    const double l1 = lambda + 1.0;
    return 0.25 * (1.0 / (2.0 * lambda + 1.0) - 1.0 / (l1 * l1)) * k_const(2.0 * lambda, d);
}

} // namespace rvolest
