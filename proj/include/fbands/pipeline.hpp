#pragma once

#include "fbands/bootstrap.hpp"
#include "fbands/error.hpp"
#include "fbands/regression.hpp"
#include "fbands/rng.hpp"
#include "fbands/semimetrics.hpp"

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fbands {

enum class MethodKind { Lp, Lambda, Depth };

struct RegionMethod {
    MethodKind kind = MethodKind::Lp;
    NormTag norm = NormTag::Linf;

    friend bool operator==(const RegionMethod&, const RegionMethod&) = default;
};

[[nodiscard]] inline std::string to_string(const RegionMethod& m) {
    switch (m.kind) {
    case MethodKind::Lp: return to_string(m.norm);
    case MethodKind::Lambda: return "Lambda";
    case MethodKind::Depth: return "Depth";
    }
    return "?";
}

[[nodiscard]] inline std::optional<RegionMethod> parse_method(std::string_view s) {
    if (s == "L1") return RegionMethod{MethodKind::Lp, NormTag::L1};
    if (s == "L2") return RegionMethod{MethodKind::Lp, NormTag::L2};
    if (s == "Linf") return RegionMethod{MethodKind::Lp, NormTag::Linf};
    if (s == "Lambda") return RegionMethod{MethodKind::Lambda};
    if (s == "Depth") return RegionMethod{MethodKind::Depth};
    return std::nullopt;
}

[[nodiscard]] inline std::optional<ModelFamily> parse_model(std::string_view s) {
    if (s == "FNP") return ModelFamily::FNP;
    if (s == "SFPL") return ModelFamily::SFPL;
    return std::nullopt;
}

/// Everything needed to turn one regression sample and query into regions.
struct PipelineConfig {
    ModelFamily model = ModelFamily::FNP;
    std::size_t q_fpca = 4;
    std::vector<std::size_t> k_grid = {3, 5, 7, 10, 15, 20, 30, 40};
    double k_boot_factor = 2.0;
    std::size_t B = 500;
    double eta = 1e-4;
    std::size_t n_projections = 20;
    CvMode cv_mode = CvMode::Global;
    double max_condition = 1e12;
    bool ridge_fallback = false;

    void validate() const {
        if (q_fpca == 0) throw Error(ErrorKind::Config, "q_fpca must be positive");
        if (k_grid.empty()) throw Error(ErrorKind::Config, "k_grid must not be empty");
        for (std::size_t k : k_grid) {
            if (k == 0) throw Error(ErrorKind::Config, "k_grid entries must be positive");
        }
        if (!(k_boot_factor > 1.0)) throw Error(ErrorKind::Config, "k_boot_factor must exceed 1");
        if (B < 2) throw Error(ErrorKind::Config, "B must be at least 2");
        if (!(eta > 0.0)) throw Error(ErrorKind::Config, "eta must be positive");
        if (n_projections == 0) throw Error(ErrorKind::Config, "n_projections must be positive");
        if (!(max_condition > 1.0)) throw Error(ErrorKind::Config, "max_condition must exceed 1");
    }
};

/// FPCA semimetric on the training predictors, or plain L2 when they carry no
/// variance at all.
[[nodiscard]] inline SemimetricModel choose_semimetric(const RegressionSample& sample, std::size_t q) {
    const auto preds = sample.predictors();
    const std::size_t qq = std::min({q, preds.size(), sample.grid().tau()});
    try {
        return fpca_semimetric_fit(preds, qq);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Data) throw;
        return SemimetricModel::l2(sample.grid());
    }
}

struct DayFit {
    ModelSpec spec;
    BootstrapRun run;
};

/// Semimetric, CV choice of k over the admissible part of the grid, then the
/// residual bootstrap at the query.
[[nodiscard]] inline DayFit fit_day(const RegressionSample& sample, const Query& query, const PipelineConfig& cfg,
                                    std::uint64_t seed, unsigned threads = 1) {
    cfg.validate();
    const std::size_t n = sample.size();
    std::vector<std::size_t> ks;
    for (std::size_t k : cfg.k_grid) {
        if (k + 1 <= n) ks.push_back(k);
    }
    if (ks.empty()) {
        throw Error(ErrorKind::InsufficientHistory,
                    "no k in the grid fits a sample of " + std::to_string(n) + " pairs");
    }
    ModelSpec spec{cfg.model, choose_semimetric(sample, cfg.q_fpca)};
    spec.k_boot_factor = cfg.k_boot_factor;
    spec.max_condition = cfg.max_condition;
    spec.ridge_fallback = cfg.ridge_fallback;
    spec.uniform_if_degenerate = true;
    spec.k = ks.size() == 1 ? ks.front()
                            : select_k_cv(sample, spec, ks, cfg.cv_mode,
                                          cfg.cv_mode == CvMode::Local ? std::optional<Query>(query) : std::nullopt);
    auto run = run_bootstrap(sample, spec, query, cfg.B, seed, threads);
    return DayFit{std::move(spec), std::move(run)};
}

[[nodiscard]] inline PredictionRegion build_region(const BootstrapRun& run, const RegionMethod& method, double alpha,
                                                   const PipelineConfig& cfg) {
    switch (method.kind) {
    case MethodKind::Lp: return lp_region(run, alpha, method.norm);
    case MethodKind::Lambda: return lambda_region(run, alpha, cfg.eta);
    case MethodKind::Depth:
        require_alpha(alpha);
        return depth_region(run, alpha, cfg.n_projections, run.seed);
    }
    throw Error(ErrorKind::InvalidArgument, "unknown region method");
}

} // namespace fbands
