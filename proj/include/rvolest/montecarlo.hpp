#pragma once

// Replication runner: simulate, estimate with every configured objective,
// aggregate means, standard deviations and CI coverage.

#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rvolest/estimator.hpp"
#include "rvolest/io.hpp"
#include "rvolest/simulator.hpp"

namespace rvolest {

struct ExperimentPlan {
    Scenario scenario;
    std::vector<RobustConfig> estimators;
    int replications = 200;
    double alpha = 0.05;
    OptimizerOptions optimizer;

    void validate() const {
        scenario.validate();
        if (replications < 1) throw std::invalid_argument("ExperimentPlan: need at least one replication");
        if (estimators.empty()) throw std::invalid_argument("ExperimentPlan: no estimators");
        for (const auto& e : estimators) e.validate();
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("ExperimentPlan: alpha must be in (0, 1)");
    }
};

/// One estimator on one replication. `ok` is false when estimation threw,
/// did not converge, or produced a singular Gamma; such records are left out
/// of every aggregate and counted as failures.
struct ReplicationRecord {
    bool ok = false;
    std::string error;
    Vector theta;
    Vector u;                   // NaN where the variance estimate was negative
    std::vector<int> covered;   // 1, 0, or -1 when no interval was available
    double seconds = 0.0;
};

struct SummaryRow {
    RobustConfig config;
    int coord = 0;  // 1-based
    double mean = 0.0;
    double sd = 0.0;
    double coverage = 0.0;
    int failures = 0;
    double mean_time_s = 0.0;
};

struct SummaryTable {
    std::vector<RobustConfig> estimators;
    int p = 0;
    int replications = 0;
    std::vector<SummaryRow> rows;                        // estimator-major, then coord
    std::vector<std::vector<ReplicationRecord>> records; // [rep][estimator]

    const SummaryRow& row(std::size_t estimator, int coord) const {
        return rows[estimator * static_cast<std::size_t>(p) + static_cast<std::size_t>(coord - 1)];
    }
};

inline unsigned default_thread_count() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/// Runs fn(i) for i in [0, count) on `threads` workers. Each index is
/// processed exactly once; results must be written to per-index slots.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = next++; i < count; i = next++) fn(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                    next = count;
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline ReplicationRecord run_one(const ObservationPath& path, const ModelSpec& model, const RobustConfig& config,
                                 const Vector& theta0, double alpha, const OptimizerOptions& opts) {
    ReplicationRecord rec;
    const auto p = model.p;
    rec.theta = Vector::Constant(p, std::numeric_limits<double>::quiet_NaN());
    rec.u = rec.theta;
    rec.covered.assign(static_cast<std::size_t>(p), -1);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const EstimationResult r = estimate(path, model, config, opts, alpha);
        rec.theta = r.theta_hat;
        if (!r.converged) {
            rec.error = "not converged";
        } else if (r.gamma_singular) {
            rec.error = "singular Gamma";
        } else {
            const ConfidenceResult ci = confidence_intervals(r.theta_hat, r.gamma_hat, r.sigma_hat, r.n, alpha, theta0);
            rec.u = *ci.u;
            for (Eigen::Index i = 0; i < p; ++i) {
                const auto& iv = ci.ci[static_cast<std::size_t>(i)];
                if (iv) rec.covered[i] = (iv->lower <= theta0[i] && theta0[i] <= iv->upper) ? 1 : 0;
            }
            rec.ok = true;
        }
    } catch (const Error& e) {
        rec.error = e.what();
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

inline SummaryTable summarize(const std::vector<RobustConfig>& estimators, int p,
                              std::vector<std::vector<ReplicationRecord>> records) {
    SummaryTable t;
    t.estimators = estimators;
    t.p = p;
    t.replications = static_cast<int>(records.size());
    for (std::size_t e = 0; e < estimators.size(); ++e) {
        int failures = 0;
        double time = 0.0;
        for (const auto& rep : records) {
            if (!rep[e].ok) ++failures;
            time += rep[e].seconds;
        }
        for (int c = 0; c < p; ++c) {
            SummaryRow row;
            row.config = estimators[e];
            row.coord = c + 1;
            row.failures = failures;
            row.mean_time_s = records.empty() ? 0.0 : time / static_cast<double>(records.size());
            double sum = 0.0, sumsq = 0.0;
            int count = 0, hits = 0, eligible = 0;
            for (const auto& rep : records) {
                const auto& r = rep[e];
                if (!r.ok) continue;
                sum += r.theta[c];
                ++count;
                const int cov = r.covered[static_cast<std::size_t>(c)];
                if (cov >= 0) {
                    ++eligible;
                    hits += cov;
                }
            }
            const double nan = std::numeric_limits<double>::quiet_NaN();
            row.mean = count > 0 ? sum / count : nan;
            for (const auto& rep : records) {
                if (rep[e].ok) sumsq += std::pow(rep[e].theta[c] - row.mean, 2);
            }
            row.sd = count > 1 ? std::sqrt(sumsq / (count - 1)) : (count == 1 ? 0.0 : nan);
            row.coverage = eligible > 0 ? static_cast<double>(hits) / eligible : nan;
            t.rows.push_back(row);
        }
    }
    t.records = std::move(records);
    return t;
}

/// Replication r uses rng_stream(seed, r, .); results do not depend on the
/// number of threads.
inline SummaryTable run_plan(const ExperimentPlan& plan, unsigned threads = default_thread_count()) {
    plan.validate();
    const ModelSpec model = plan.scenario.estimation_model();
    const Vector theta0 = plan.scenario.theta0;
    const auto reps = static_cast<std::size_t>(plan.replications);
    std::vector<std::vector<ReplicationRecord>> records(reps);
    parallel_for(reps, threads, [&](std::size_t r) {
        const PathBundle bundle = simulate(plan.scenario, r);
        auto& row = records[r];
        row.reserve(plan.estimators.size());
        for (const auto& cfg : plan.estimators) {
            row.push_back(run_one(bundle.observed, model, cfg, theta0, plan.alpha, plan.optimizer));
        }
    });
    return summarize(plan.estimators, model.p, std::move(records));
}

struct CoveragePoint {
    double lambda = 0.0;
    std::vector<double> coverage;  // per coordinate
};

/// Coverage frequency per lambda for one robust variant.
inline std::vector<CoveragePoint> coverage_curve(const ExperimentPlan& base, Variant variant,
                                                 const std::vector<double>& lambdas,
                                                 unsigned threads = default_thread_count()) {
    ExperimentPlan plan = base;
    plan.estimators.clear();
    for (double l : lambdas) plan.estimators.push_back(RobustConfig{variant, l, 2.0});
    const SummaryTable t = run_plan(plan, threads);
    std::vector<CoveragePoint> out;
    for (std::size_t e = 0; e < lambdas.size(); ++e) {
        CoveragePoint pt{lambdas[e], {}};
        for (int c = 1; c <= t.p; ++c) pt.coverage.push_back(t.row(e, c).coverage);
        out.push_back(std::move(pt));
    }
    return out;
}

inline std::string summary_csv(const SummaryTable& t) {
    std::ostringstream os;
    os << "estimator,lambda,coord,mean,sd,coverage,failures,mean_time_s\n";
    for (const auto& r : t.rows) {
        os << variant_name(r.config.variant) << ',' << fmt_double(r.config.lambda) << ',' << r.coord << ','
           << fmt_double(r.mean) << ',' << fmt_double(r.sd) << ',' << fmt_double(r.coverage) << ',' << r.failures
           << ',' << fmt_double(r.mean_time_s) << '\n';
    }
    return os.str();
}

namespace detail {

inline std::string raw_csv(const SummaryTable& t, const char* prefix, bool use_u) {
    std::ostringstream os;
    os << "rep,estimator,lambda";
    for (int c = 1; c <= t.p; ++c) os << ',' << prefix << c;
    os << '\n';
    for (std::size_t e = 0; e < t.estimators.size(); ++e) {
        for (std::size_t r = 0; r < t.records.size(); ++r) {
            const ReplicationRecord& rec = t.records[r][e];
            os << r << ',' << variant_name(t.estimators[e].variant) << ',' << fmt_double(t.estimators[e].lambda);
            const Vector& v = use_u ? rec.u : rec.theta;
            for (int c = 0; c < t.p; ++c) {
                os << ',' << (rec.ok || !use_u ? fmt_double(v[c]) : std::string("nan"));
            }
            os << '\n';
        }
    }
    return os.str();
}

} // namespace detail

/// Per replication and estimator: rep, estimator, lambda, theta_1..theta_p.
inline std::string raw_theta_csv(const SummaryTable& t) { return detail::raw_csv(t, "theta_", false); }

/// Standardized statistics sqrt(n)(theta_hat - theta0)/sqrt(avar_ii).
inline std::string raw_u_csv(const SummaryTable& t) { return detail::raw_csv(t, "u_", true); }

/// One row per (lambda, coord); meant for single-variant sweeps.
inline std::string lambda_sweep_csv(const SummaryTable& t) {
    std::ostringstream os;
    os << "lambda,coord,mean,sd\n";
    for (const auto& r : t.rows) {
        os << fmt_double(r.config.lambda) << ',' << r.coord << ',' << fmt_double(r.mean) << ',' << fmt_double(r.sd)
           << '\n';
    }
    return os.str();
}

} // namespace rvolest
