// rvolest: simulate paths, estimate diffusion parameters, run Monte Carlo
// plans and cluster residuals.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rvolest.hpp"

namespace fs = std::filesystem;
using namespace rvolest;

namespace {

constexpr int kExitEstimator = 1;
constexpr int kExitInput = 2;

struct Shared {
    std::string preset;
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> n;
    std::string out = ".";
    std::optional<unsigned> threads;
};

unsigned resolve_threads(const Shared& s) {
    if (s.threads) return std::max(1u, *s.threads);
    if (const char* env = std::getenv("RVOLEST_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
        throw InputError(std::string("RVOLEST_THREADS: expected a positive integer, got '") + env + "'");
    }
    return default_thread_count();
}

Scenario resolve_scenario(const Shared& s) {
    Scenario sc;
    if (!s.config.empty()) {
        nlohmann::json j = read_json_file(s.config);
        if (j.contains("scenario")) j = j["scenario"];
        if (!s.preset.empty() && !j.contains("preset")) j["preset"] = s.preset;
        sc = scenario_from_json(j);
    } else if (!s.preset.empty()) {
        try {
            sc = preset(s.preset, s.n.value_or(5000));
        } catch (const std::invalid_argument& e) {
            throw InputError(e.what());
        }
    } else {
        throw InputError("need --preset or --config");
    }
    if (s.n && !s.config.empty()) sc.n = *s.n;
    if (s.seed) sc.seed = *s.seed;
    try {
        sc.validate();
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    return sc;
}

/// Writes every file or none: contents go to temporaries first and are
/// renamed once all writes succeeded.
void commit(const std::string& dir, const std::map<std::string, std::string>& files) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw InputError("cannot create output directory '" + dir + "': " + ec.message());
    std::vector<std::pair<fs::path, fs::path>> staged;
    for (const auto& [name, body] : files) {
        const fs::path final_path = fs::path(dir) / name;
        const fs::path tmp = fs::path(final_path).concat(".tmp");
        std::ofstream os(tmp, std::ios::binary);
        os << body;
        if (!os) {
            for (const auto& st : staged) fs::remove(st.first, ec);
            fs::remove(tmp, ec);
            throw InputError("cannot write '" + final_path.string() + "'");
        }
        staged.emplace_back(tmp, final_path);
    }
    for (const auto& [tmp, final_path] : staged) fs::rename(tmp, final_path);
}

RobustConfig make_config(const std::string& variant, double lambda) {
    Variant v;
    try {
        v = variant_from_name(variant);
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    RobustConfig c{v, v == Variant::Gqlf ? 0.0 : lambda, 2.0};
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    return c;
}

/// "gqlf,dp:0.5,holder:0.5"
std::vector<RobustConfig> parse_estimators(const std::string& list) {
    std::vector<RobustConfig> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto colon = item.find(':');
        if (colon == std::string::npos) {
            out.push_back(make_config(item, 0.5));
            continue;
        }
        double lam = 0.0;
        try {
            lam = std::stod(item.substr(colon + 1));
        } catch (const std::exception&) {
            throw InputError("bad lambda in estimator '" + item + "'");
        }
        out.push_back(make_config(item.substr(0, colon), lam));
    }
    if (out.empty()) throw InputError("no estimators given");
    return out;
}

nlohmann::json matrix_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json r = nlohmann::json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) {
            if (std::isfinite(m(i, k))) {
                r.push_back(m(i, k));
            } else {
                r.push_back(nullptr);
            }
        }
        rows.push_back(r);
    }
    return rows;
}

nlohmann::json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

ParameterBox box_from_flags(BuiltinModel m, const std::vector<double>& lower, const std::vector<double>& upper,
                            const std::vector<double>& initial) {
    ParameterBox box = default_box(m);
    auto assign = [&](Vector& dst, const std::vector<double>& src, const char* what) {
        if (src.empty()) return;
        if (static_cast<Eigen::Index>(src.size()) != dst.size()) {
            throw InputError(std::string(what) + ": expected " + std::to_string(dst.size()) + " values");
        }
        for (std::size_t i = 0; i < src.size(); ++i) dst[static_cast<Eigen::Index>(i)] = src[i];
    };
    assign(box.lower, lower, "--box-lower");
    assign(box.upper, upper, "--box-upper");
    assign(box.initial, initial, "--initial");
    try {
        box.validate();
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    return box;
}

BuiltinModel model_from_flag(const std::string& name) {
    try {
        return builtin_from_name(name);
    } catch (const UnknownModel& e) {
        throw InputError(e.what());
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust Gaussian quasi-likelihood estimation of diffusion coefficients"};
    app.require_subcommand(1);
    Shared sh;
    auto add_shared = [&](CLI::App* sub, bool scenario) {
        if (scenario) {
            sub->add_option("--preset", sh.preset, "named scenario");
            sub->add_option("--config", sh.config, "scenario JSON file");
            sub->add_option("--n", sh.n, "number of increments");
        }
        sub->add_option("--seed", sh.seed, "master seed");
        sub->add_option("--out", sh.out, "output directory");
        sub->add_option("--threads", sh.threads, "worker threads (default: RVOLEST_THREADS or all cores)");
    };

    // simulate
    auto* sim = app.add_subcommand("simulate", "simulate a path; writes path.csv, truth.csv, scenario.json");
    add_shared(sim, true);
    std::uint64_t rep = 0;
    sim->add_option("--rep", rep, "replication index");

    // estimate
    auto* est = app.add_subcommand("estimate", "estimate theta from path.csv; writes estimate.json");
    add_shared(est, false);
    std::string path_file, model_name = "exp-linear-3", variant = "dp";
    double lambda = 0.5, alpha = 0.05, kappa = 1.0;
    std::vector<double> box_lower, box_upper, initial;
    OptimizerOptions opts;
    bool no_fallback = false;
    est->add_option("--path", path_file, "path.csv")->required();
    est->add_option("--model", model_name, "exp-linear-3 | rational-diffusion | const-levy");
    est->add_option("--variant", variant, "gqlf | dp | holder");
    est->add_option("--lambda", lambda, "robustness parameter");
    est->add_option("--alpha", alpha, "CI level is 1 - alpha");
    est->add_option("--kappa", kappa, "exponent in the taper check sqrt(n) h^kappa / lambda");
    est->add_option("--box-lower", box_lower)->expected(1, -1);
    est->add_option("--box-upper", box_upper)->expected(1, -1);
    est->add_option("--initial", initial)->expected(1, -1);
    est->add_option("--max-iters", opts.max_iters);
    est->add_option("--tol", opts.tol);
    est->add_flag("--no-fallback", no_fallback, "disable the Nelder-Mead fallback");

    // montecarlo
    auto* mc = app.add_subcommand("montecarlo", "replicated estimation; writes summary.csv, raw_theta.csv, raw_u.csv");
    add_shared(mc, true);
    int reps = 200;
    std::string estimators = "gqlf,dp:0.5,holder:0.5";
    mc->add_option("--reps", reps, "replications");
    mc->add_option("--estimators", estimators, "comma list, e.g. gqlf,dp:0.5,holder:0.5");
    mc->add_option("--variant", variant, "single estimator variant (overrides --estimators with --lambda)");
    mc->add_option("--lambda", lambda, "lambda for --variant");
    mc->add_option("--alpha", alpha);

    // sweep-lambda
    auto* sw = app.add_subcommand("sweep-lambda", "mean/sd over a lambda grid; writes lambda_sweep.csv, raw_theta.csv");
    add_shared(sw, true);
    std::vector<double> lambdas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    sw->add_option("--reps", reps, "replications");
    sw->add_option("--variant", variant, "dp | holder");
    sw->add_option("--lambda", lambdas, "lambda grid")->expected(1, -1);
    sw->add_option("--alpha", alpha);

    // cluster
    auto* cl = app.add_subcommand("cluster", "K-means on residuals; writes clusters.csv, k_sweep.csv");
    add_shared(cl, true);
    int k = 0, k_min = 2, k_max = 8;
    double factor = 3.0;
    std::string merge = "pair";
    cl->add_option("--path", path_file, "path.csv (otherwise simulated from --preset/--config)");
    cl->add_option("--model", model_name);
    cl->add_option("--variant", variant, "estimator used for theta_hat");
    cl->add_option("--lambda", lambda);
    cl->add_option("--k", k, "cluster count (default: suggested)");
    cl->add_option("--k-min", k_min);
    cl->add_option("--k-max", k_max);
    cl->add_option("--factor", factor, "size ratio counted as an abrupt change");
    cl->add_option("--merge", merge, "pair | off");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    try {
        const unsigned threads = resolve_threads(sh);
        std::map<std::string, std::string> files;

        if (*sim) {
            const Scenario sc = resolve_scenario(sh);
            const PathBundle b = simulate(sc, rep);
            files["path.csv"] = path_csv(b.observed);
            files["truth.csv"] = truth_csv(b, sc.n, sc.T);
            files["scenario.json"] = to_json(sc).dump(2) + "\n";
        } else if (*est) {
            const ObservationPath path = read_path_csv(path_file);
            const BuiltinModel m = model_from_flag(model_name);
            const ModelSpec model = make_builtin(m, box_from_flags(m, box_lower, box_upper, initial));
            try {
                check_compatible(path, model);
            } catch (const std::invalid_argument& e) {
                throw InputError(e.what());
            }
            const RobustConfig cfg = make_config(variant, lambda);
            opts.fallback = !no_fallback;
            if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("--alpha must be in (0, 1)");
            const EstimationResult r = estimate(path, model, cfg, opts, alpha);

            nlohmann::json j;
            j["model"] = std::string(builtin_name(m));
            j["variant"] = std::string(variant_name(cfg.variant));
            j["lambda"] = cfg.lambda;
            j["path"] = path_file;
            j["n"] = r.n;
            j["box"] = {{"lower", vector_json(model.box.lower)},
                        {"upper", vector_json(model.box.upper)},
                        {"initial", vector_json(model.box.initial)}};
            j["theta_hat"] = vector_json(r.theta_hat);
            j["objective"] = r.objective_value;
            j["gamma_hat"] = matrix_json(r.gamma_hat);
            j["sigma_hat"] = matrix_json(r.sigma_hat);
            j["fisher_hat"] = matrix_json(r.fisher_hat);
            j["avar"] = matrix_json(r.avar);
            nlohmann::json ci = nlohmann::json::array();
            for (const auto& iv : r.ci) {
                ci.push_back(iv ? nlohmann::json{iv->lower, iv->upper} : nlohmann::json(nullptr));
            }
            j["ci"] = ci;
            j["alpha"] = alpha;
            j["negative_variance"] = r.negative_variance;
            j["gamma_singular"] = r.gamma_singular;
            j["converged"] = r.converged;
            j["on_boundary"] = r.on_boundary;
            j["iterations"] = r.iterations;
            j["method"] = r.method;
            if (cfg.robust()) {
                j["taper"] = {{"kappa", kappa},
                              {"value", check_taper_schedule(r.n, cfg.lambda, kappa, path.T)}};
            } else {
                j["taper"] = nullptr;
            }
            files["estimate.json"] = j.dump(2) + "\n";
        } else if (*mc || *sw) {
            ExperimentPlan plan;
            plan.scenario = resolve_scenario(sh);
            plan.replications = reps;
            plan.alpha = alpha;
            if (*mc) {
                plan.estimators = mc->count("--variant") > 0 ? std::vector<RobustConfig>{make_config(variant, lambda)}
                                                             : parse_estimators(estimators);
            } else {
                if (!sw->count("--variant")) variant = "dp";
                for (double l : lambdas) {
                    const RobustConfig c = make_config(variant, l);
                    if (!c.robust()) throw InputError("sweep-lambda needs a robust variant");
                    plan.estimators.push_back(c);
                }
            }
            try {
                plan.validate();
            } catch (const std::invalid_argument& e) {
                throw InputError(e.what());
            }
            const SummaryTable t = run_plan(plan, threads);
            files["raw_theta.csv"] = raw_theta_csv(t);
            if (*mc) {
                files["summary.csv"] = summary_csv(t);
                files["raw_u.csv"] = raw_u_csv(t);
            } else {
                files["lambda_sweep.csv"] = lambda_sweep_csv(t);
            }
        } else if (*cl) {
            ObservationPath path;
            ModelSpec model;
            if (!path_file.empty()) {
                path = read_path_csv(path_file);
                const BuiltinModel m = model_from_flag(model_name);
                model = make_builtin(m);
            } else {
                const Scenario sc = resolve_scenario(sh);
                path = simulate(sc).observed;
                model = sc.estimation_model();
            }
            try {
                check_compatible(path, model);
            } catch (const std::invalid_argument& e) {
                throw InputError(e.what());
            }
            if (merge != "pair" && merge != "off") throw InputError("--merge must be 'pair' or 'off'");
            if (k_min < 2 || k_max < k_min || k_max >= path.n()) throw InputError("need 2 <= k-min <= k-max < n");
            if (k != 0 && (k < 2 || k >= path.n())) throw InputError("--k must be in [2, n)");
            if (!(factor > 1.0)) throw InputError("--factor must exceed 1");
            const EstimationResult r = estimate(path, model, make_config(variant, lambda));
            const std::vector<double> eps = residuals(path, model, r.theta_hat);
            const KSuggestion sug = suggest_k(eps, k_min, k_max, factor);
            const int chosen = k != 0 ? k : sug.suggested;
            const Partition part =
                merge_consecutive(kmeans(eps, chosen), merge == "pair" ? MergeMode::SpikePairRule : MergeMode::Off);
            files["clusters.csv"] = clusters_csv(path, eps, part);
            files["k_sweep.csv"] = k_sweep_csv(sug);
            std::cerr << "K=" << chosen << (k == 0 ? " (suggested)" : "") << ", |D_n|=" << part.size_d() << '\n';
        }
        commit(sh.out, files);
        return 0;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const Error& e) {
        std::cerr << "estimation failed: " << e.what() << '\n';
        return kExitEstimator;
    } catch (const std::exception& e) {
        std::cerr << "estimation failed: " << e.what() << '\n';
        return kExitEstimator;
    }
}
