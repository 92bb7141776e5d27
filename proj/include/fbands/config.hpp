#pragma once

#include "fbands/error.hpp"
#include "fbands/ingest.hpp"
#include "fbands/pipeline.hpp"

#include "json.hpp"

#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace fbands {

struct RunConfig {
    std::size_t grid_tau = 24;
    PipelineConfig pipeline;
    std::vector<double> alphas = {0.05};
    std::vector<RegionMethod> methods = {RegionMethod{MethodKind::Lp, NormTag::Linf}};
    std::vector<ModelFamily> models = {ModelFamily::FNP};
    std::uint64_t seed = 1;
    Series series = Series::Demand;
    unsigned threads = 1;
    std::size_t window = 365;
    std::size_t outlier_window = 0; ///< 0 disables outlier replacement
    double outlier_threshold = 5.0;
    std::size_t presmooth = 1;      ///< moving-average width, 1 disables
};

inline const std::set<std::string>& config_keys() {
    static const std::set<std::string> keys = {
        "grid_tau", "q_fpca",  "k_grid", "k_boot_factor", "B",       "alpha",          "method",
        "model",    "n_projections", "seed", "eta", "series", "threads", "cv_mode", "window",
        "max_condition", "ridge_fallback", "outlier_window", "outlier_threshold", "presmooth"};
    return keys;
}

namespace detail {

template <class T>
std::vector<T> one_or_many(const nlohmann::json& v) {
    std::vector<T> out;
    if (v.is_array()) {
        for (const auto& e : v) out.push_back(e.get<T>());
    } else {
        out.push_back(v.get<T>());
    }
    return out;
}

} // namespace detail

/// Applies the keys of `j` on top of `base`. Unknown keys and ill-typed or
/// out-of-range values raise a config error.
[[nodiscard]] inline RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {}) {
    if (!j.is_object()) throw Error(ErrorKind::Config, "config must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!config_keys().count(key)) throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
    }
    RunConfig c = std::move(base);
    try {
        if (j.contains("grid_tau")) c.grid_tau = j["grid_tau"].get<std::size_t>();
        if (j.contains("q_fpca")) c.pipeline.q_fpca = j["q_fpca"].get<std::size_t>();
        if (j.contains("k_grid")) c.pipeline.k_grid = detail::one_or_many<std::size_t>(j["k_grid"]);
        if (j.contains("k_boot_factor")) c.pipeline.k_boot_factor = j["k_boot_factor"].get<double>();
        if (j.contains("B")) c.pipeline.B = j["B"].get<std::size_t>();
        if (j.contains("eta")) c.pipeline.eta = j["eta"].get<double>();
        if (j.contains("n_projections")) c.pipeline.n_projections = j["n_projections"].get<std::size_t>();
        if (j.contains("max_condition")) c.pipeline.max_condition = j["max_condition"].get<double>();
        if (j.contains("ridge_fallback")) c.pipeline.ridge_fallback = j["ridge_fallback"].get<bool>();
        if (j.contains("alpha")) c.alphas = detail::one_or_many<double>(j["alpha"]);
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("threads")) c.threads = j["threads"].get<unsigned>();
        if (j.contains("window")) c.window = j["window"].get<std::size_t>();
        if (j.contains("outlier_window")) c.outlier_window = j["outlier_window"].get<std::size_t>();
        if (j.contains("outlier_threshold")) c.outlier_threshold = j["outlier_threshold"].get<double>();
        if (j.contains("presmooth")) c.presmooth = j["presmooth"].get<std::size_t>();
        if (j.contains("method")) {
            c.methods.clear();
            for (const auto& s : detail::one_or_many<std::string>(j["method"])) {
                const auto m = parse_method(s);
                if (!m) throw Error(ErrorKind::Config, "unknown method '" + s + "' (L1, L2, Linf, Lambda, Depth)");
                c.methods.push_back(*m);
            }
        }
        if (j.contains("model")) {
            c.models.clear();
            for (const auto& s : detail::one_or_many<std::string>(j["model"])) {
                const auto m = parse_model(s);
                if (!m) throw Error(ErrorKind::Config, "unknown model '" + s + "' (FNP, SFPL)");
                c.models.push_back(*m);
            }
        }
        if (j.contains("series")) {
            const auto s = j["series"].get<std::string>();
            if (s == "demand") c.series = Series::Demand;
            else if (s == "price") c.series = Series::Price;
            else throw Error(ErrorKind::Config, "series must be 'demand' or 'price'");
        }
        if (j.contains("cv_mode")) {
            const auto s = j["cv_mode"].get<std::string>();
            if (s == "global") c.pipeline.cv_mode = CvMode::Global;
            else if (s == "local") c.pipeline.cv_mode = CvMode::Local;
            else throw Error(ErrorKind::Config, "cv_mode must be 'global' or 'local'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Config, std::string("config value of the wrong type: ") + e.what());
    }
    if (c.grid_tau != 24) throw Error(ErrorKind::Config, "hourly data fixes grid_tau = 24");
    for (double a : c.alphas) {
        if (!(a > 0.0 && a < 1.0)) throw Error(ErrorKind::Config, "alpha values must lie in (0, 1)");
    }
    if (c.threads == 0) throw Error(ErrorKind::Config, "threads must be positive");
    if (c.window == 0) throw Error(ErrorKind::Config, "window must be positive");
    if (!(c.outlier_threshold > 0.0)) throw Error(ErrorKind::Config, "outlier_threshold must be positive");
    if (c.presmooth == 0) throw Error(ErrorKind::Config, "presmooth must be at least 1");
    c.pipeline.validate();
    return c;
}

[[nodiscard]] inline nlohmann::json load_config_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open config " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::Config, path + ": " + e.what());
    }
}

[[nodiscard]] inline nlohmann::ordered_json config_to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["grid_tau"] = c.grid_tau;
    j["q_fpca"] = c.pipeline.q_fpca;
    j["k_grid"] = c.pipeline.k_grid;
    j["k_boot_factor"] = c.pipeline.k_boot_factor;
    j["B"] = c.pipeline.B;
    j["alpha"] = c.alphas;
    std::vector<std::string> methods, models;
    for (const auto& m : c.methods) methods.push_back(to_string(m));
    for (const auto& m : c.models) models.push_back(to_string(m));
    j["method"] = methods;
    j["model"] = models;
    j["n_projections"] = c.pipeline.n_projections;
    j["seed"] = c.seed;
    j["eta"] = c.pipeline.eta;
    j["series"] = c.series == Series::Demand ? "demand" : "price";
    j["threads"] = c.threads;
    j["cv_mode"] = c.pipeline.cv_mode == CvMode::Global ? "global" : "local";
    j["window"] = c.window;
    j["max_condition"] = c.pipeline.max_condition;
    j["ridge_fallback"] = c.pipeline.ridge_fallback;
    j["outlier_window"] = c.outlier_window;
    j["outlier_threshold"] = c.outlier_threshold;
    j["presmooth"] = c.presmooth;
    return j;
}

/// Loading, optional presmoothing and optional outlier replacement, as the
/// config asks. Returns the sample and human-readable notes.
[[nodiscard]] inline FunctionalSample prepare_sample(const std::vector<HourlyRecord>& records, const RunConfig& c,
                                                     std::vector<std::string>* notes = nullptr) {
    FunctionalSample s = build_daily_curves(records, c.series);
    if (c.presmooth > 1) s = presmooth(s, c.presmooth);
    if (c.outlier_window > 0) {
        auto cleaned = replace_outliers(s, c.outlier_window, c.outlier_threshold);
        if (notes) {
            for (const auto& r : cleaned.audit) notes->push_back("replaced outlier day " + format_date(r.date));
        }
        s = std::move(cleaned.sample);
    }
    if (notes) notes->insert(notes->end(), s.warnings.begin(), s.warnings.end());
    return s;
}

} // namespace fbands
