#pragma once

// Text formats: scenario JSON, path.csv, truth.csv.

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rvolest/errors.hpp"
#include "rvolest/simulator.hpp"

namespace rvolest {

/// Shortest text that reads back to the same double (17 significant digits).
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline Vector from_std(const std::vector<double>& v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
    return out;
}

inline const char* covariate_name(CovariateKind k) {
    switch (k) {
        case CovariateKind::None: return "none";
        case CovariateKind::TrigDeterministic: return "trig";
        case CovariateKind::SelfResponse: return "self";
    }
    return "none";
}

inline CovariateKind covariate_from(const std::string& s) {
    if (s == "none") return CovariateKind::None;
    if (s == "trig") return CovariateKind::TrigDeterministic;
    if (s == "self") return CovariateKind::SelfResponse;
    throw InputError("covariate: unknown kind '" + s + "'");
}

template <class T>
T field(const nlohmann::json& j, const char* key, const T& fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("field '") + key + "': " + e.what());
    }
}

} // namespace detail

inline nlohmann::json to_json(const Scenario& s) {
    nlohmann::json j;
    j["name"] = s.name;
    j["model"] = std::string(builtin_name(s.model));
    j["theta0"] = detail::to_std(s.theta0);
    if (s.box) {
        j["box"] = {{"lower", detail::to_std(s.box->lower)},
                    {"upper", detail::to_std(s.box->upper)},
                    {"initial", detail::to_std(s.box->initial)}};
    }
    j["drift"] = {{"kind", s.drift.kind == DriftKind::Linear ? "linear" : "zero"}, {"coef", s.drift.coef}};
    j["covariate"] = detail::covariate_name(s.covariate);
    if (s.jump) {
        const JumpSpec& js = *s.jump;
        j["jump"] = {{"intensity", js.intensity}, {"law", js.law == JumpLaw::Normal ? "normal" : "gamma"},
                     {"mean", js.mean},           {"variance", js.variance},
                     {"shape", js.shape},         {"rate", js.rate},
                     {"scale", js.scale}};
    } else {
        j["jump"] = nullptr;
    }
    if (s.spike) {
        j["spike"] = {{"prob", s.spike->prob}, {"variance", s.spike->variance}};
    } else {
        j["spike"] = nullptr;
    }
    j["n"] = s.n;
    j["T"] = s.T;
    j["substeps"] = s.substeps;
    j["seed"] = s.seed;
    return j;
}

/// Reads a scenario. A "preset" key starts from that preset and the other
/// keys override it.
inline Scenario scenario_from_json(const nlohmann::json& j) {
    using detail::field;
    if (!j.is_object()) throw InputError("scenario: expected a JSON object");
    Scenario s;
    if (j.contains("preset")) {
        const auto name = field<std::string>(j, "preset", "");
        try {
            s = preset(name, field<int>(j, "n", 5000), field<std::uint64_t>(j, "seed", 1));
        } catch (const std::invalid_argument& e) {
            throw InputError(e.what());
        }
    }
    s.name = field<std::string>(j, "name", s.name);
    if (j.contains("model")) {
        try {
            s.model = builtin_from_name(field<std::string>(j, "model", ""));
        } catch (const UnknownModel& e) {
            throw InputError(e.what());
        }
    }
    if (j.contains("theta0")) s.theta0 = detail::from_std(field<std::vector<double>>(j, "theta0", {}));
    if (j.contains("box") && !j["box"].is_null()) {
        const auto& b = j["box"];
        s.box = ParameterBox{detail::from_std(field<std::vector<double>>(b, "lower", {})),
                             detail::from_std(field<std::vector<double>>(b, "upper", {})),
                             detail::from_std(field<std::vector<double>>(b, "initial", {}))};
    }
    if (j.contains("drift")) {
        const auto& dj = j["drift"];
        const auto kind = field<std::string>(dj, "kind", "zero");
        if (kind != "zero" && kind != "linear") throw InputError("drift.kind must be 'zero' or 'linear'");
        s.drift = DriftSpec{kind == "linear" ? DriftKind::Linear : DriftKind::Zero, field<double>(dj, "coef", 0.0)};
    }
    if (j.contains("covariate")) s.covariate = detail::covariate_from(field<std::string>(j, "covariate", ""));
    if (j.contains("jump")) {
        const auto& jj = j["jump"];
        if (jj.is_null()) {
            s.jump.reset();
        } else {
            JumpSpec js;
            js.intensity = field<double>(jj, "intensity", 0.0);
            const auto law = field<std::string>(jj, "law", "normal");
            if (law != "normal" && law != "gamma") throw InputError("jump.law must be 'normal' or 'gamma'");
            js.law = law == "normal" ? JumpLaw::Normal : JumpLaw::Gamma;
            js.mean = field<double>(jj, "mean", 0.0);
            js.variance = field<double>(jj, "variance", 1.0);
            js.shape = field<double>(jj, "shape", 1.0);
            js.rate = field<double>(jj, "rate", 1.0);
            js.scale = field<double>(jj, "scale", 1.0);
            s.jump = js;
        }
    }
    if (j.contains("spike")) {
        const auto& sj = j["spike"];
        if (sj.is_null()) {
            s.spike.reset();
        } else {
            s.spike = SpikeSpec{field<double>(sj, "prob", 0.0), field<double>(sj, "variance", 1.0)};
        }
    }
    s.n = field<int>(j, "n", s.n);
    s.T = field<double>(j, "T", s.T);
    s.substeps = field<int>(j, "substeps", s.substeps);
    s.seed = field<std::uint64_t>(j, "seed", s.seed);
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    return s;
}

inline nlohmann::json read_json_file(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw InputError("cannot open '" + file + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(file + ": " + e.what());
    }
}

/// path.csv: header j,t,X_1..X_m,Y_1..Y_d.
inline std::string path_csv(const ObservationPath& path) {
    std::ostringstream os;
    os << "j,t";
    for (int c = 0; c < path.cov_dim(); ++c) os << ",X_" << c + 1;
    for (int c = 0; c < path.d(); ++c) os << ",Y_" << c + 1;
    os << '\n';
    for (Eigen::Index j = 0; j <= path.n(); ++j) {
        os << j << ',' << fmt_double(path.times[static_cast<std::size_t>(j)]);
        for (int c = 0; c < path.cov_dim(); ++c) os << ',' << fmt_double(path.covariates(j, c));
        for (int c = 0; c < path.d(); ++c) os << ',' << fmt_double(path.responses(j, c));
        os << '\n';
    }
    return os.str();
}

/// truth.csv: one row per event, kind in {jump, spike}.
inline std::string truth_csv(const PathBundle& b, int n, double horizon) {
    std::ostringstream os;
    os << "kind,time,index,size\n";
    for (std::size_t i = 0; i < b.jump_times.size(); ++i) {
        const double t = b.jump_times[i];
        const long j = std::clamp(static_cast<long>(std::ceil(t * n / horizon)), 1L, static_cast<long>(n));
        os << "jump," << fmt_double(t) << ',' << j << ',' << fmt_double(b.jump_sizes[i]) << '\n';
    }
    for (int j : b.spike_indices) {
        const double t = static_cast<double>(j) * horizon / n;
        os << "spike," << fmt_double(t) << ',' << j << ",\n";
    }
    return os.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_cell(const std::string& s, std::size_t line_no, const std::string& col) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) {
        throw InputError("line " + std::to_string(line_no) + ", column " + col + ": not a number '" + s + "'");
    }
    return v;
}

} // namespace detail

/// Parses path.csv as written by path_csv. Times are checked against the
/// equally spaced grid; the horizon is the last time.
inline ObservationPath parse_path_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("path.csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_csv_line(line);
    if (header.size() < 3 || header[0] != "j" || header[1] != "t") {
        throw InputError("path.csv: header must start with j,t");
    }
    int cov = 0, d = 0;
    for (std::size_t c = 2; c < header.size(); ++c) {
        if (header[c].rfind("X_", 0) == 0 && d == 0) {
            ++cov;
        } else if (header[c].rfind("Y_", 0) == 0) {
            ++d;
        } else {
            throw InputError("path.csv: unexpected column '" + header[c] + "'");
        }
    }
    if (d == 0) throw InputError("path.csv: no Y columns");

    std::vector<double> times, xs, ys;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) {
            throw InputError("path.csv line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()));
        }
        const double jv = detail::parse_cell(cells[0], line_no, "j");
        if (jv != static_cast<double>(times.size())) {
            throw InputError("path.csv line " + std::to_string(line_no) + ": j out of sequence");
        }
        times.push_back(detail::parse_cell(cells[1], line_no, "t"));
        for (int c = 0; c < cov; ++c) xs.push_back(detail::parse_cell(cells[2 + c], line_no, header[2 + c]));
        for (int c = 0; c < d; ++c) ys.push_back(detail::parse_cell(cells[2 + cov + c], line_no, header[2 + cov + c]));
    }
    if (times.size() < 2) throw InputError("path.csv: need at least two rows");
    const auto rows = static_cast<Eigen::Index>(times.size());
    RowMatrix x(rows, cov), y(rows, d);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (int c = 0; c < cov; ++c) x(r, c) = xs[static_cast<std::size_t>(r * cov + c)];
        for (int c = 0; c < d; ++c) y(r, c) = ys[static_cast<std::size_t>(r * d + c)];
    }
    if (times.front() != 0.0) throw InputError("path.csv: first time must be 0");
    try {
        ObservationPath p = ObservationPath::make(times.back(), std::move(x), std::move(y));
        for (std::size_t j = 0; j < times.size(); ++j) {
            if (std::abs(times[j] - p.times[j]) > 1e-9 * std::max(1.0, p.T)) {
                throw InputError("path.csv: times are not equally spaced (row j=" + std::to_string(j) + ")");
            }
        }
        return p;
    } catch (const std::invalid_argument& e) {
        throw InputError(std::string("path.csv: ") + e.what());
    }
}

inline ObservationPath read_path_csv(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw InputError("cannot open '" + file + "'");
    return parse_path_csv(in);
}

} // namespace rvolest
