#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rvolest/mathcore.hpp"

namespace rvolest {

/// Closed parameter box with a start point inside it.
struct ParameterBox {
    Vector lower;
    Vector upper;
    Vector initial;

    Eigen::Index dim() const { return lower.size(); }

    void validate() const {
        if (lower.size() != upper.size() || lower.size() != initial.size() || lower.size() == 0) {
            throw std::invalid_argument("ParameterBox: inconsistent dimensions");
        }
        for (Eigen::Index i = 0; i < lower.size(); ++i) {
            if (!(lower[i] < upper[i])) throw std::invalid_argument("ParameterBox: need lower < upper");
            if (initial[i] < lower[i] || initial[i] > upper[i]) {
                throw std::invalid_argument("ParameterBox: initial point outside the box");
            }
        }
    }

    bool contains(const Vector& theta) const {
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
            if (theta[i] < lower[i] || theta[i] > upper[i]) return false;
        }
        return true;
    }
};

inline ParameterBox uniform_box(int p, double lower, double upper, double initial) {
    return {Vector::Constant(p, lower), Vector::Constant(p, upper), Vector::Constant(p, initial)};
}

/// Componentwise projection onto [lower, upper].
inline Vector clamp_to_box(const Vector& theta, const ParameterBox& box) {
    if (theta.size() != box.dim()) throw std::invalid_argument("clamp_to_box: dimension mismatch");
    return theta.cwiseMax(box.lower).cwiseMin(box.upper);
}

enum class CovariateSource { External, SelfResponse };

/// Output buffers of a model evaluation. Reused across calls so that
/// evaluating along a path does not allocate.
struct ModelEval {
    Matrix S;
    std::vector<Matrix> dS;   // p entries, dS[k] = d S / d theta_k
    std::vector<Matrix> ddS;  // p*p entries, ddS[k*p + l]
};

/// Parametric diffusion coefficient S(x, theta) = sigma sigma'.
///
/// `evaluate(x, theta, order, out)` fills out.S, and out.dS when order >= 1,
/// and out.ddS when order >= 2. `max_order` says how far the analytic
/// derivatives go; the likelihood falls back to finite differences above it.
struct ModelSpec {
    using Evaluator =
        std::function<void(std::span<const double> x, const Vector& theta, int order, ModelEval& out)>;

    std::string name;
    int d = 1;
    int p = 1;
    int cov_dim = 0;
    CovariateSource covariate_source = CovariateSource::External;
    int max_order = 0;
    Evaluator evaluate;
    ParameterBox box;

    Matrix S(std::span<const double> x, const Vector& theta) const {
        ModelEval e;
        evaluate(x, theta, 0, e);
        return e.S;
    }

    std::vector<Matrix> dS(std::span<const double> x, const Vector& theta) const {
        if (max_order < 1) throw std::logic_error("ModelSpec: no analytic first derivatives");
        ModelEval e;
        evaluate(x, theta, 1, e);
        return e.dS;
    }

    std::vector<Matrix> ddS(std::span<const double> x, const Vector& theta) const {
        if (max_order < 2) throw std::logic_error("ModelSpec: no analytic second derivatives");
        ModelEval e;
        evaluate(x, theta, 2, e);
        return e.ddS;
    }
};

enum class BuiltinModel { ExpLinear3, RationalDiffusion, ConstLevy };

inline std::string_view builtin_name(BuiltinModel m) {
    switch (m) {
        case BuiltinModel::ExpLinear3: return "exp-linear-3";
        case BuiltinModel::RationalDiffusion: return "rational-diffusion";
        case BuiltinModel::ConstLevy: return "const-levy";
    }
    return "unknown";
}

inline BuiltinModel builtin_from_name(std::string_view name) {
    if (name == "exp-linear-3") return BuiltinModel::ExpLinear3;
    if (name == "rational-diffusion") return BuiltinModel::RationalDiffusion;
    if (name == "const-levy") return BuiltinModel::ConstLevy;
    throw UnknownModel("unknown model '" + std::string(name) + "'");
}

/// Optimizer boxes used in the simulation designs: [-10, 10] from 0 for the
/// regression families, [0, 10] from 5 for the rational diffusion.
inline ParameterBox default_box(BuiltinModel m) {
    switch (m) {
        case BuiltinModel::ExpLinear3: return uniform_box(3, -10.0, 10.0, 0.0);
        case BuiltinModel::RationalDiffusion: return uniform_box(2, 0.0, 10.0, 5.0);
        case BuiltinModel::ConstLevy: return uniform_box(1, -10.0, 10.0, 0.0);
    }
    throw UnknownModel("unknown builtin");
}

namespace detail {

inline void resize_eval(ModelEval& out, int d, int p, int order) {
    out.S.resize(d, d);
    if (order >= 1) {
        out.dS.resize(static_cast<std::size_t>(p));
        for (auto& m : out.dS) m.resize(d, d);
    }
    if (order >= 2) {
        out.ddS.resize(static_cast<std::size_t>(p * p));
        for (auto& m : out.ddS) m.resize(d, d);
    }
}

} // namespace detail

/// S(x, theta) = exp(theta . x), x in R^3.
inline ModelSpec make_exp_linear3(ParameterBox box) {
    ModelSpec m;
    m.name = "exp-linear-3";
    m.d = 1;
    m.p = 3;
    m.cov_dim = 3;
    m.max_order = 2;
    m.covariate_source = CovariateSource::External;
    m.box = std::move(box);
    m.evaluate = [](std::span<const double> x, const Vector& th, int order, ModelEval& out) {
        detail::resize_eval(out, 1, 3, order);
        const double s = std::exp(th[0] * x[0] + th[1] * x[1] + th[2] * x[2]);
        out.S(0, 0) = s;
        if (order >= 1) {
            for (int k = 0; k < 3; ++k) out.dS[k](0, 0) = x[k] * s;
        }
        if (order >= 2) {
            for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 3; ++l) out.ddS[k * 3 + l](0, 0) = x[k] * x[l] * s;
        }
    };
    return m;
}

/// sigma(y, theta) = (theta_1 + theta_2 y^2) / (1 + y^2), S = sigma^2, with
/// the covariate being the lagged response itself.
inline ModelSpec make_rational_diffusion(ParameterBox box) {
    ModelSpec m;
    m.name = "rational-diffusion";
    m.d = 1;
    m.p = 2;
    m.cov_dim = 1;
    m.max_order = 2;
    m.covariate_source = CovariateSource::SelfResponse;
    m.box = std::move(box);
    m.evaluate = [](std::span<const double> x, const Vector& th, int order, ModelEval& out) {
        detail::resize_eval(out, 1, 2, order);
        const double y2 = x[0] * x[0];
        const double u[2] = {1.0 / (1.0 + y2), y2 / (1.0 + y2)};
        const double sigma = th[0] * u[0] + th[1] * u[1];
        out.S(0, 0) = sigma * sigma;
        if (order >= 1) {
            for (int k = 0; k < 2; ++k) out.dS[k](0, 0) = 2.0 * sigma * u[k];
        }
        if (order >= 2) {
            for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l) out.ddS[k * 2 + l](0, 0) = 2.0 * u[k] * u[l];
        }
    };
    return m;
}

/// S(theta) = exp(theta), constant in x.
inline ModelSpec make_const_levy(ParameterBox box) {
    ModelSpec m;
    m.name = "const-levy";
    m.d = 1;
    m.p = 1;
    m.cov_dim = 0;
    m.max_order = 2;
    m.covariate_source = CovariateSource::External;
    m.box = std::move(box);
    m.evaluate = [](std::span<const double>, const Vector& th, int order, ModelEval& out) {
        detail::resize_eval(out, 1, 1, order);
        const double s = std::exp(th[0]);
        out.S(0, 0) = s;
        if (order >= 1) out.dS[0](0, 0) = s;
        if (order >= 2) out.ddS[0](0, 0) = s;
    };
    return m;
}

inline ModelSpec make_builtin(BuiltinModel which, ParameterBox box) {
    box.validate();
    ModelSpec m;
    switch (which) {
        case BuiltinModel::ExpLinear3: m = make_exp_linear3(std::move(box)); break;
        case BuiltinModel::RationalDiffusion: m = make_rational_diffusion(std::move(box)); break;
        case BuiltinModel::ConstLevy: m = make_const_levy(std::move(box)); break;
    }
    if (m.box.dim() != m.p) throw std::invalid_argument("make_builtin: box dimension does not match model");
    return m;
}

inline ModelSpec make_builtin(BuiltinModel which) { return make_builtin(which, default_box(which)); }

inline ModelSpec make_builtin(std::string_view name, ParameterBox box) {
    return make_builtin(builtin_from_name(name), std::move(box));
}

inline ModelSpec make_builtin(std::string_view name) { return make_builtin(builtin_from_name(name)); }

} // namespace rvolest
