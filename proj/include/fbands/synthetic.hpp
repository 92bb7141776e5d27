#pragma once

#include "fbands/curves.hpp"
#include "fbands/error.hpp"
#include "fbands/evaluation.hpp"
#include "fbands/ingest.hpp"
#include "fbands/parallel.hpp"
#include "fbands/pipeline.hpp"
#include "fbands/rng.hpp"

#include <boost/math/distributions/binomial.hpp>

#include <chrono>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

namespace fbands {

/// Functional AR(1) on a 24-hour grid:
///   zeta_i = mu + a (zeta_{i-1} - mu) + sum_k xi_ik phi_k + sigma(t) e_i(t),
/// with xi_ik ~ N(0, score_sd[k]^2) on orthonormal Fourier curves phi_k and
/// e_i(t) i.i.d. standard normal.
struct SyntheticSpec {
    std::size_t n_days = 730;
    Date start = Date{std::chrono::year{2021} / 1 / 4};
    double level = 30000.0;
    double amplitude = 6000.0;
    double a = 0.5;
    std::vector<double> score_sd = {1500.0, 1000.0, 500.0};
    double white_sd = 300.0;
    std::optional<std::vector<double>> white_profile; ///< multiplies white_sd per hour
    double init_amplitude = 3000.0;

    /// White noise only, its std at hour index `peak` (t = 12 on the 1-based
    /// grid by default) `ratio` times the std elsewhere.
    [[nodiscard]] static SyntheticSpec heteroscedastic(double ratio = 5.0, std::size_t peak = 11) {
        SyntheticSpec s;
        s.score_sd.clear();
        s.white_sd = 500.0;
        std::vector<double> profile(24, 1.0);
        profile.at(peak) = ratio;
        s.white_profile = profile;
        return s;
    }

    /// Constant map (a = 0) without noise: every day after the first equals mu.
    [[nodiscard]] static SyntheticSpec degenerate() {
        SyntheticSpec s;
        s.a = 0.0;
        s.score_sd.clear();
        s.white_sd = 0.0;
        return s;
    }

    void validate() const {
        if (n_days == 0) throw Error(ErrorKind::Config, "synthetic n_days must be positive");
        if (!(std::abs(a) < 1.0)) throw Error(ErrorKind::Config, "unstable process: |a| must be below 1");
        if (score_sd.size() > 12) throw Error(ErrorKind::Config, "at most 12 score components");
        for (double s : score_sd) {
            if (!(s >= 0.0)) throw Error(ErrorKind::Config, "score standard deviations must be non-negative");
        }
        if (!(white_sd >= 0.0)) throw Error(ErrorKind::Config, "white_sd must be non-negative");
        if (white_profile) {
            if (white_profile->size() != 24) throw Error(ErrorKind::Config, "white_profile needs 24 values");
            for (double p : *white_profile) {
                if (!(p >= 0.0) || !std::isfinite(p)) throw Error(ErrorKind::Config, "white_profile must be finite and >= 0");
            }
        }
    }
};

/// Fixed point mu(t) = level + amplitude sin(2 pi (t - 8) / 24).
[[nodiscard]] inline Curve synthetic_mean(const SyntheticSpec& s) {
    std::vector<double> v(24);
    for (std::size_t t = 0; t < 24; ++t) {
        v[t] = s.level + s.amplitude * std::sin(2.0 * std::numbers::pi * (static_cast<double>(t) - 8.0) / 24.0);
    }
    return Curve(Grid(24), std::move(v));
}

/// phi_k: sqrt(2/24) sin/cos pairs of increasing frequency, orthonormal on the grid.
[[nodiscard]] inline Curve synthetic_component(std::size_t k) {
    std::vector<double> v(24);
    const double freq = static_cast<double>(k / 2 + 1);
    const double c = std::sqrt(2.0 / 24.0);
    for (std::size_t t = 0; t < 24; ++t) {
        const double arg = 2.0 * std::numbers::pi * freq * static_cast<double>(t) / 24.0;
        v[t] = c * (k % 2 == 0 ? std::sin(arg) : std::cos(arg));
    }
    return Curve(Grid(24), std::move(v));
}

[[nodiscard]] inline Curve synthetic_noise_sd(const SyntheticSpec& s) {
    std::vector<double> v(24, s.white_sd);
    if (s.white_profile) {
        for (std::size_t t = 0; t < 24; ++t) v[t] *= (*s.white_profile)[t];
    }
    return Curve(Grid(24), std::move(v));
}

struct SyntheticSeries {
    std::vector<Curve> curves;
    std::vector<Curve> conditional_means; ///< Phi(zeta_{i-1}); entry 0 is the initial curve
    std::vector<HourlyRecord> records;
};

/// Simulates the process and its hourly CSV representation. Temperature and
/// wind are seasonal daily series that do not enter the demand curve; price is
/// an affine image of demand.
[[nodiscard]] inline SyntheticSeries synthetic_far1(const SyntheticSpec& spec, Rng& rng) {
    spec.validate();
    const Grid grid(24);
    const Curve mu = synthetic_mean(spec);
    const Curve sd = synthetic_noise_sd(spec);
    std::vector<Curve> comps;
    for (std::size_t k = 0; k < spec.score_sd.size(); ++k) comps.push_back(synthetic_component(k));
    std::normal_distribution<double> normal(0.0, 1.0);

    SyntheticSeries out;
    out.curves.reserve(spec.n_days);
    Curve z = mu + synthetic_component(0) * spec.init_amplitude;
    out.curves.push_back(z);
    out.conditional_means.push_back(z);
    for (std::size_t i = 1; i < spec.n_days; ++i) {
        Curve mean = mu + (out.curves.back() - mu) * spec.a;
        Curve next = mean;
        for (std::size_t k = 0; k < comps.size(); ++k) {
            const double xi = spec.score_sd[k] * normal(rng);
            next += comps[k] * xi;
        }
        std::vector<double> v(next.values().begin(), next.values().end());
        for (std::size_t t = 0; t < 24; ++t) v[t] += sd[t] * normal(rng);
        out.curves.emplace_back(grid, std::move(v));
        out.conditional_means.push_back(std::move(mean));
    }

    out.records.reserve(spec.n_days * 24);
    for (std::size_t i = 0; i < spec.n_days; ++i) {
        const Date d = spec.start + std::chrono::days{static_cast<int>(i)};
        const double season = std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / 365.0);
        const double temp = 18.0 - 9.0 * season + 2.0 * normal(rng);
        const double wind = 120000.0 + 40000.0 * normal(rng);
        for (std::size_t h = 0; h < 24; ++h) {
            const double demand = out.curves[i][h];
            out.records.push_back(
                HourlyRecord{HourStamp{d, static_cast<int>(h), std::nullopt}, demand, 2.0 + 1e-4 * demand, temp, wind});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Coverage calibration
// ---------------------------------------------------------------------------

/// Central interval of Binomial(n, p) between its (1 - confidence)/2 and
/// (1 + confidence)/2 quantiles (smallest k with cdf(k) >= level), as fractions of n.
[[nodiscard]] inline std::pair<double, double> binomial_acceptance(std::size_t n, double p, double confidence) {
    const boost::math::binomial_distribution<double> dist(static_cast<double>(n), p);
    auto quantile = [&](double level) {
        std::size_t k = 0;
        while (k < n && boost::math::cdf(dist, static_cast<double>(k)) < level) ++k;
        return static_cast<double>(k) / static_cast<double>(n);
    };
    return {quantile(0.5 * (1.0 - confidence)), quantile(0.5 * (1.0 + confidence))};
}

/// Clopper-Pearson interval for a success probability after `hits` of `n`.
[[nodiscard]] inline std::pair<double, double> clopper_pearson(std::size_t hits, std::size_t n, double confidence) {
    using boost::math::binomial_distribution;
    const double tail = 0.5 * (1.0 - confidence);
    const auto N = static_cast<double>(n), k = static_cast<double>(hits);
    return {binomial_distribution<double>::find_lower_bound_on_p(N, k, tail),
            binomial_distribution<double>::find_upper_bound_on_p(N, k, tail)};
}

struct CalibrationSpec {
    SyntheticSpec process;
    PipelineConfig pipeline;
    std::vector<RegionMethod> methods = {RegionMethod{MethodKind::Lambda}, RegionMethod{MethodKind::Lp, NormTag::Linf}};
    std::vector<double> alphas = {0.2, 0.05};
    std::size_t n_replicates = 200;
    std::size_t window = 365;
    std::uint64_t seed = 1;
    double confidence = 0.99;
    unsigned threads = 1;
};

struct CalibrationRow {
    RegionMethod method;
    double alpha = 0.0;
    std::size_t hits = 0;
    std::size_t n = 0;
    double fcov = 0.0;                      ///< empirical fraction
    std::pair<double, double> ci;           ///< Clopper-Pearson interval of fcov
    std::pair<double, double> acceptance;   ///< binomial interval around 1 - alpha
    [[nodiscard]] bool within() const noexcept { return fcov >= acceptance.first && fcov <= acceptance.second; }
};

struct CalibrationResult {
    std::vector<CalibrationRow> rows;
    std::size_t failures = 0;
};

/// One replicate: an independent series of window + 2 days, the pooled pairs
/// (zeta_{i-1}, zeta_i) of the first window + 1 days, and the day after as truth.
[[nodiscard]] inline std::vector<std::vector<bool>> calibration_replicate(const CalibrationSpec& spec, std::size_t r) {
    SyntheticSpec process = spec.process;
    process.n_days = spec.window + 2;
    Rng rng = make_stream(spec.seed, kSynthStream, r);
    const auto series = synthetic_far1(process, rng);
    const auto daily = build_daily_curves(series.records, Series::Demand);
    std::vector<RegressionPair> pairs;
    for (std::size_t i = 1; i <= spec.window; ++i) {
        pairs.push_back(RegressionPair{daily.days[i - 1].curve, daily.days[i].covariates, daily.days[i].curve});
    }
    const RegressionSample sample(std::move(pairs));
    const Query query{daily.days[spec.window].curve, daily.days[spec.window + 1].covariates};
    const Curve& truth = daily.days[spec.window + 1].curve;
    const auto fit = fit_day(sample, query, spec.pipeline, derive_seed(spec.seed, kReplicateStream, r));
    std::vector<std::vector<bool>> hit(spec.methods.size(), std::vector<bool>(spec.alphas.size()));
    for (std::size_t m = 0; m < spec.methods.size(); ++m) {
        for (std::size_t a = 0; a < spec.alphas.size(); ++a) {
            hit[m][a] = contains(build_region(fit.run, spec.methods[m], spec.alphas[a], spec.pipeline), truth);
        }
    }
    return hit;
}

/// Empirical functional coverage per (method, alpha) over independent replicates.
[[nodiscard]] inline CalibrationResult calibrate(const CalibrationSpec& spec) {
    if (spec.n_replicates < 100) throw Error(ErrorKind::Config, "calibration needs at least 100 replicates");
    for (double a : spec.alphas) require_alpha(a);
    spec.process.validate();
    std::vector<std::optional<std::vector<std::vector<bool>>>> results(spec.n_replicates);
    parallel_for(spec.n_replicates, spec.threads, [&](std::size_t r) {
        try {
            results[r] = calibration_replicate(spec, r);
        } catch (const Error&) {
            results[r].reset();
        }
    });
    CalibrationResult out;
    for (const auto& r : results) out.failures += r ? 0 : 1;
    for (std::size_t m = 0; m < spec.methods.size(); ++m) {
        for (std::size_t a = 0; a < spec.alphas.size(); ++a) {
            CalibrationRow row{spec.methods[m], spec.alphas[a], 0, 0, 0.0, {}, {}};
            for (const auto& r : results) {
                if (!r) continue;
                ++row.n;
                row.hits += (*r)[m][a] ? 1 : 0;
            }
            if (row.n > 0) {
                row.fcov = static_cast<double>(row.hits) / static_cast<double>(row.n);
                row.ci = clopper_pearson(row.hits, row.n, spec.confidence);
                row.acceptance = binomial_acceptance(row.n, 1.0 - spec.alphas[a], spec.confidence);
            }
            out.rows.push_back(row);
        }
    }
    return out;
}

} // namespace fbands
