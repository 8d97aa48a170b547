#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "rvolest/model.hpp"

namespace rvolest {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Equally spaced sample (X_{t_j}, Y_{t_j}), j = 0..n, t_j = j T / n.
struct ObservationPath {
    double T = 1.0;
    std::vector<double> times;
    RowMatrix covariates;  // (n+1) x cov_dim, may have zero columns
    RowMatrix responses;   // (n+1) x d

    static ObservationPath make(double horizon, RowMatrix covariates, RowMatrix responses) {
        ObservationPath p;
        p.T = horizon;
        p.covariates = std::move(covariates);
        p.responses = std::move(responses);
        const auto rows = p.responses.rows();
        if (rows < 2) throw std::invalid_argument("ObservationPath: need at least one increment");
        if (p.covariates.rows() != rows) {
            if (p.covariates.cols() == 0) {
                p.covariates.resize(rows, 0);
            } else {
                throw std::invalid_argument("ObservationPath: covariate/response length mismatch");
            }
        }
        const auto n = rows - 1;
        p.times.resize(static_cast<std::size_t>(rows));
        for (Eigen::Index j = 0; j <= n; ++j) {
            p.times[static_cast<std::size_t>(j)] = static_cast<double>(j) * horizon / static_cast<double>(n);
        }
        p.validate();
        return p;
    }

    Eigen::Index n() const { return responses.rows() - 1; }
    int d() const { return static_cast<int>(responses.cols()); }
    int cov_dim() const { return static_cast<int>(covariates.cols()); }
    double h() const { return T / static_cast<double>(n()); }

    std::span<const double> covariate_row(Eigen::Index j) const {
        return {covariates.data() + j * covariates.cols(), static_cast<std::size_t>(covariates.cols())};
    }
    std::span<const double> response_row(Eigen::Index j) const {
        return {responses.data() + j * responses.cols(), static_cast<std::size_t>(responses.cols())};
    }

    void validate() const {
        if (!(T > 0.0)) throw std::invalid_argument("ObservationPath: horizon must be positive");
        if (responses.rows() < 2 || responses.cols() < 1) {
            throw std::invalid_argument("ObservationPath: need d >= 1 and n >= 1");
        }
        if (static_cast<Eigen::Index>(times.size()) != responses.rows() || covariates.rows() != responses.rows()) {
            throw std::invalid_argument("ObservationPath: lengths must equal n+1");
        }
        const double step = h();
        for (std::size_t j = 0; j < times.size(); ++j) {
            const double expected = static_cast<double>(j) * step;
            if (std::abs(times[j] - expected) > 1e-9 * std::max(1.0, T)) {
                throw std::invalid_argument("ObservationPath: times must be t_j = j T / n");
            }
        }
        if (!responses.allFinite() || !covariates.allFinite()) {
            throw std::invalid_argument("ObservationPath: non-finite sample");
        }
    }
};

/// The covariate the model sees at time t_j.
inline std::span<const double> model_covariate(const ObservationPath& path, const ModelSpec& model, Eigen::Index j) {
    return model.covariate_source == CovariateSource::SelfResponse ? path.response_row(j) : path.covariate_row(j);
}

inline void check_compatible(const ObservationPath& path, const ModelSpec& model) {
    if (path.d() != model.d) throw std::invalid_argument("model/path response dimension mismatch");
    const int seen = model.covariate_source == CovariateSource::SelfResponse ? path.d() : path.cov_dim();
    if (seen != model.cov_dim) throw std::invalid_argument("model/path covariate dimension mismatch");
}

/// eps_j = h^{-1/2} (Y_{t_j} - Y_{t_{j-1}}), stored at row j-1.
struct ScaledIncrements {
    RowMatrix eps;

    explicit ScaledIncrements(const ObservationPath& path) : eps(path.n(), path.d()) {
        const double scale = 1.0 / std::sqrt(path.h());
        for (Eigen::Index j = 1; j <= path.n(); ++j) {
            eps.row(j - 1) = (path.responses.row(j) - path.responses.row(j - 1)) * scale;
        }
    }

    Eigen::Index size() const { return eps.rows(); }
};

} // namespace rvolest
