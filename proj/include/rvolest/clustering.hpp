#pragma once

// Classification of increments into a diffusive part C_n and a jump/spike
// part D_n by one-dimensional K-means on absolute standardized residuals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rvolest/errors.hpp"
#include "rvolest/io.hpp"
#include "rvolest/likelihood.hpp"

namespace rvolest {

/// |h^{-1/2} S_{j-1}(theta)^{-1/2} (Y_j - Y_{j-1})| for j = 1..n, stored at j-1.
inline std::vector<double> residuals(const ObservationPath& path, const ModelSpec& model, const Vector& theta) {
    check_compatible(path, model);
    const ScaledIncrements inc(path);
    std::vector<double> out(static_cast<std::size_t>(path.n()));
    ModelEval ev;
    for (Eigen::Index j = 1; j <= path.n(); ++j) {
        model.evaluate(model_covariate(path, model, j - 1), theta, 0, ev);
        double r = 0.0;
        if (model.d == 1) {
            const double s = ev.S(0, 0);
            if (!(s > 0.0) || !std::isfinite(s)) {
                throw CholeskyFailure("S not positive at j=" + std::to_string(j), static_cast<std::size_t>(j));
            }
            r = std::abs(inc.eps(j - 1, 0)) / std::sqrt(s);
        } else {
            const Vector e = inc.eps.row(j - 1).transpose();
            try {
                r = std::sqrt(SpdMatrix(ev.S).inv_quad(e));
            } catch (const CholeskyFailure& err) {
                throw CholeskyFailure(std::string(err.what()) + " at j=" + std::to_string(j),
                                      static_cast<std::size_t>(j));
            }
        }
        out[static_cast<std::size_t>(j - 1)] = r;
    }
    return out;
}

/// K-means partition. Cluster ids run in ascending order of size, so the
/// largest cluster K-1 is C_n and the others form D_n.
struct Partition {
    int K = 0;
    std::vector<int> labels;   // labels[j-1] for increment j
    std::vector<int> sizes;    // per cluster id
    std::vector<double> centers;
    std::vector<bool> in_d;    // in_d[j-1]
    double wcss = 0.0;
    std::vector<double> wcss_history;  // Lloyd iterations of the winning restart

    int c_label() const { return K - 1; }
    std::size_t size_d() const { return static_cast<std::size_t>(std::count(in_d.begin(), in_d.end(), true)); }

    /// 1-based increment indices.
    std::vector<int> d_indices() const {
        std::vector<int> out;
        for (std::size_t i = 0; i < in_d.size(); ++i)
            if (in_d[i]) out.push_back(static_cast<int>(i) + 1);
        return out;
    }
    std::vector<int> c_indices() const {
        std::vector<int> out;
        for (std::size_t i = 0; i < in_d.size(); ++i)
            if (!in_d[i]) out.push_back(static_cast<int>(i) + 1);
        return out;
    }
};

struct KMeansOptions {
    int restarts = 10;
    std::uint64_t seed = 20240101;
    int max_iters = 300;
};

namespace detail {

struct LloydRun {
    std::vector<int> labels;
    std::vector<double> centers;
    std::vector<double> history;
    double wcss = 0.0;
};

inline int nearest(double v, const std::vector<double>& centers) {
    int best = 0;
    double bd = std::abs(v - centers[0]);
    for (std::size_t c = 1; c < centers.size(); ++c) {
        const double dd = std::abs(v - centers[c]);
        if (dd < bd) {
            bd = dd;
            best = static_cast<int>(c);
        }
    }
    return best;
}

inline double wcss_of(const std::vector<double>& v, const std::vector<int>& labels, const std::vector<double>& centers) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += std::pow(v[i] - centers[static_cast<std::size_t>(labels[i])], 2);
    return s;
}

inline LloydRun lloyd(const std::vector<double>& v, std::vector<double> centers, int max_iters) {
    const std::size_t k = centers.size();
    LloydRun run;
    run.labels.assign(v.size(), -1);
    for (int it = 0; it < max_iters; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const int l = nearest(v[i], centers);
            if (l != run.labels[i]) {
                run.labels[i] = l;
                changed = true;
            }
        }
        run.history.push_back(wcss_of(v, run.labels, centers));
        if (!changed && it > 0) break;
        std::vector<double> sum(k, 0.0);
        std::vector<std::size_t> cnt(k, 0);
        for (std::size_t i = 0; i < v.size(); ++i) {
            sum[static_cast<std::size_t>(run.labels[i])] += v[i];
            ++cnt[static_cast<std::size_t>(run.labels[i])];
        }
        for (std::size_t c = 0; c < k; ++c)
            if (cnt[c] > 0) centers[c] = sum[c] / static_cast<double>(cnt[c]);
        run.history.push_back(wcss_of(v, run.labels, centers));
    }
    run.centers = std::move(centers);
    run.wcss = wcss_of(v, run.labels, run.centers);
    return run;
}

/// First center at a seeded random point, then repeatedly the point farthest
/// from all chosen centers.
inline std::vector<double> farthest_point_seeds(const std::vector<double>& v, int k, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
    std::vector<double> centers{v[pick(rng)]};
    std::vector<double> dist(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) dist[i] = std::abs(v[i] - centers[0]);
    while (static_cast<int>(centers.size()) < k) {
        const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        centers.push_back(v[far]);
        for (std::size_t i = 0; i < v.size(); ++i) dist[i] = std::min(dist[i], std::abs(v[i] - v[far]));
    }
    return centers;
}

} // namespace detail

inline Partition kmeans(const std::vector<double>& values, int K, const KMeansOptions& opts = {}) {
    if (K < 2) throw std::invalid_argument("kmeans: K must be >= 2");
    if (values.size() < static_cast<std::size_t>(K)) throw std::invalid_argument("kmeans: need at least K values");
    if (opts.restarts < 1) throw std::invalid_argument("kmeans: restarts must be >= 1");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (*lo == *hi) throw DegenerateInput("kmeans: all values are identical");

    std::mt19937_64 rng(opts.seed);
    detail::LloydRun best;
    bool have = false;
    for (int r = 0; r < opts.restarts; ++r) {
        detail::LloydRun run = detail::lloyd(values, detail::farthest_point_seeds(values, K, rng), opts.max_iters);
        if (!have || run.wcss < best.wcss) {
            best = std::move(run);
            have = true;
        }
    }

    std::vector<int> count(static_cast<std::size_t>(K), 0);
    for (int l : best.labels) ++count[static_cast<std::size_t>(l)];
    std::vector<int> order(static_cast<std::size_t>(K));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (count[a] != count[b]) return count[a] < count[b];
        return best.centers[a] > best.centers[b];
    });
    std::vector<int> rank(static_cast<std::size_t>(K));
    for (int i = 0; i < K; ++i) rank[static_cast<std::size_t>(order[i])] = i;

    Partition out;
    out.K = K;
    out.wcss = best.wcss;
    out.wcss_history = std::move(best.history);
    out.sizes.resize(static_cast<std::size_t>(K));
    out.centers.resize(static_cast<std::size_t>(K));
    for (int c = 0; c < K; ++c) {
        out.sizes[static_cast<std::size_t>(rank[c])] = count[c];
        out.centers[static_cast<std::size_t>(rank[c])] = best.centers[c];
    }
    out.labels.resize(values.size());
    out.in_d.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        out.labels[i] = rank[static_cast<std::size_t>(best.labels[i])];
        out.in_d[i] = out.labels[i] != out.c_label();
    }
    return out;
}

enum class MergeMode { SpikePairRule, Off };

/// Under SpikePairRule, whenever increments j and j+1 are both in D_n the
/// second moves to C_n. The sweep runs left to right on the updated flags,
/// so a run {3,4,5} becomes {3,5}.
inline Partition merge_consecutive(Partition part, MergeMode mode) {
    if (mode == MergeMode::Off) return part;
    const int c = part.c_label();
    for (std::size_t i = 0; i + 1 < part.in_d.size(); ++i) {
        if (part.in_d[i] && part.in_d[i + 1]) {
            --part.sizes[static_cast<std::size_t>(part.labels[i + 1])];
            ++part.sizes[static_cast<std::size_t>(c)];
            part.labels[i + 1] = c;
            part.in_d[i + 1] = false;
        }
    }
    return part;
}

struct KSuggestion {
    std::vector<int> ks;
    std::vector<std::size_t> size_d;
    std::vector<double> log_size_d;
    int suggested = 0;
    int change_at = 0;     // k0, 0 when no abrupt change was seen
    bool no_change = false;
};

/// Runs kmeans for K in [k_min, k_max]. The first K = k0 whose |D_n|
/// differs from the previous K by at least `factor` (either direction)
/// gives the suggestion k0 - 1; without such a change k_max is suggested
/// and `no_change` is set.
inline KSuggestion suggest_k(const std::vector<double>& values, int k_min, int k_max, double factor = 3.0,
                             const KMeansOptions& opts = {}) {
    if (k_min < 2 || k_max < k_min || static_cast<std::size_t>(k_max) >= values.size()) {
        throw std::invalid_argument("suggest_k: need 2 <= k_min <= k_max < n");
    }
    if (!(factor > 1.0)) throw std::invalid_argument("suggest_k: factor must exceed 1");
    KSuggestion out;
    for (int k = k_min; k <= k_max; ++k) {
        const Partition part = kmeans(values, k, opts);
        const std::size_t s = part.size_d();
        out.ks.push_back(k);
        out.size_d.push_back(s);
        out.log_size_d.push_back(std::log(static_cast<double>(std::max<std::size_t>(s, 1))));
        if (out.change_at == 0 && out.size_d.size() > 1) {
            const double prev = static_cast<double>(std::max<std::size_t>(out.size_d[out.size_d.size() - 2], 1));
            const double cur = static_cast<double>(std::max<std::size_t>(s, 1));
            if (std::max(prev, cur) >= factor * std::min(prev, cur)) out.change_at = k;
        }
    }
    if (out.change_at > 0) {
        out.suggested = out.change_at - 1;
    } else {
        out.suggested = k_max;
        out.no_change = true;
    }
    return out;
}

/// Share of spike observation indices j whose increment j or j+1 lies in D_n.
inline double spike_capture_fraction(const Partition& part, const std::vector<int>& spike_indices) {
    if (spike_indices.empty()) return 0.0;
    const auto n = static_cast<int>(part.in_d.size());
    int hit = 0;
    for (int j : spike_indices) {
        const bool a = j >= 1 && j <= n && part.in_d[static_cast<std::size_t>(j - 1)];
        const bool b = j + 1 >= 1 && j + 1 <= n && part.in_d[static_cast<std::size_t>(j)];
        if (a || b) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(spike_indices.size());
}

inline std::string clusters_csv(const ObservationPath& path, const std::vector<double>& eps_hat, const Partition& part) {
    std::ostringstream os;
    os << "j,t_j,eps_hat,label,in_D\n";
    for (std::size_t i = 0; i < eps_hat.size(); ++i) {
        os << i + 1 << ',' << fmt_double(path.times[i + 1]) << ',' << fmt_double(eps_hat[i]) << ',' << part.labels[i]
           << ',' << (part.in_d[i] ? 1 : 0) << '\n';
    }
    return os.str();
}

inline std::string k_sweep_csv(const KSuggestion& s) {
    std::ostringstream os;
    os << "K,size_D,log_size_D\n";
    for (std::size_t i = 0; i < s.ks.size(); ++i) {
        os << s.ks[i] << ',' << s.size_d[i] << ',' << fmt_double(s.log_size_d[i]) << '\n';
    }
    return os.str();
}

} // namespace rvolest
