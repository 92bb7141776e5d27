#pragma once

#include "fbands/curves.hpp"
#include "fbands/depth.hpp"
#include "fbands/error.hpp"
#include "fbands/parallel.hpp"
#include "fbands/regression.hpp"
#include "fbands/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace fbands {

// ---------------------------------------------------------------------------
// Residual bootstrap
// ---------------------------------------------------------------------------

struct ResidualSet {
    std::vector<Curve> residuals; ///< centered, sum to the zero curve
    Curve mean_removed;           ///< mean of the raw residuals
    std::vector<Curve> fitted;    ///< r_b(chi_i), the oversmoothed fit at each pair
};

namespace detail {

inline ResidualSet residuals_from(const FittedRegressor& reg_b) {
    const RegressionSample& s = reg_b.sample();
    std::vector<Curve> fitted;
    std::vector<Curve> raw;
    fitted.reserve(s.size());
    raw.reserve(s.size());
    for (const auto& pr : s.pairs()) {
        fitted.push_back(reg_b.predict(Query{pr.predictor, pr.covariates}));
        raw.push_back(pr.response - fitted.back());
    }
    Curve mean = mean_curve(raw);
    for (Curve& r : raw) r -= mean;
    return ResidualSet{std::move(raw), std::move(mean), std::move(fitted)};
}

} // namespace detail

/// Residuals of the oversmoothed fit (bandwidth b, from spec.boot_k), centered
/// by their sample mean.
[[nodiscard]] inline ResidualSet center_residuals(const RegressionSample& sample, const ModelSpec& spec) {
    spec.validate(sample.size());
    return detail::residuals_from(FittedRegressor(sample, spec, spec.boot_k(sample.size())));
}

/// zeta*_i = r_b(chi_i) + eps*_i with eps*_i drawn uniformly with replacement
/// from the centered residuals. Predictors are untouched.
[[nodiscard]] inline std::vector<Curve> bootstrap_resample(const ResidualSet& resid, const RegressionSample& sample,
                                                           Rng& rng) {
    const std::size_t n = resid.residuals.size();
    if (n == 0 || resid.fitted.size() != n || sample.size() != n) {
        throw Error(ErrorKind::InvalidArgument, "residual set does not match the sample");
    }
    std::vector<Curve> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(resid.fitted[i] + resid.residuals[uniform_index(rng, n)]);
    return out;
}

/// Replicates of the bootstrap predictor r*_h(chi_{N+1}) and the future errors
/// eps*_{N+1}, plus the two base predictions at the query.
struct BootstrapRun {
    std::size_t B = 0;
    std::uint64_t seed = 0;
    std::vector<Curve> boot_predictors;
    std::vector<Curve> boot_errors_eps;
    Curve base_prediction_h;
    Curve base_prediction_b;
    std::size_t k = 0;
    std::size_t k_boot = 0;
};

/// Replicate j draws from its own stream (seed, j), so the run does not depend
/// on `threads`. Bootstrap predictors reuse the bandwidth h of the original fit.
[[nodiscard]] inline BootstrapRun run_bootstrap(const RegressionSample& sample, const ModelSpec& spec,
                                                const Query& query, std::size_t B, std::uint64_t seed,
                                                unsigned threads = 1) {
    if (B == 0) throw Error(ErrorKind::InvalidArgument, "bootstrap needs B >= 1");
    spec.validate(sample.size());
    const std::size_t kb = spec.boot_k(sample.size());
    const FittedRegressor reg_h(sample, spec, spec.k);
    const FittedRegressor reg_b(sample, spec, kb);
    const ResidualSet resid = detail::residuals_from(reg_b);

    const auto w_query = reg_h.weights(query.curve);
    Curve base_h = reg_h.predict_with(sample.responses(), w_query, query.covariates);
    Curve base_b = reg_b.predict(query);

    std::vector<std::optional<Curve>> preds(B);
    std::vector<std::optional<Curve>> eps(B);
    const std::size_t n = sample.size();
    parallel_for(B, threads, [&](std::size_t j) {
        Rng rng = make_stream(seed, kReplicateStream, j);
        const auto star = bootstrap_resample(resid, sample, rng);
        preds[j] = reg_h.predict_with(star, w_query, query.covariates);
        eps[j] = resid.residuals[uniform_index(rng, n)];
    });

    BootstrapRun run{B, seed, {}, {}, std::move(base_h), std::move(base_b), spec.k, kb};
    run.boot_predictors.reserve(B);
    run.boot_errors_eps.reserve(B);
    for (std::size_t j = 0; j < B; ++j) {
        run.boot_predictors.push_back(std::move(*preds[j]));
        run.boot_errors_eps.push_back(std::move(*eps[j]));
    }
    return run;
}

// ---------------------------------------------------------------------------
// Prediction regions
// ---------------------------------------------------------------------------

struct BallRegion {
    Curve center;
    double radius = 0.0;
    NormTag norm = NormTag::Linf;
    bool degenerate = false; ///< zero radius
};

struct BandRegion {
    Curve lower;
    Curve upper;
    Curve center;
};

using PredictionRegion = std::variant<BallRegion, BandRegion>;

/// Band view of a region: bands as is, L_inf balls as center +- radius.
[[nodiscard]] inline std::optional<BandRegion> as_band(const PredictionRegion& region) {
    if (const auto* band = std::get_if<BandRegion>(&region)) return *band;
    const auto& ball = std::get<BallRegion>(region);
    if (ball.norm != NormTag::Linf) return std::nullopt;
    const Curve r = Curve::constant(ball.center.grid(), ball.radius);
    return BandRegion{ball.center - r, ball.center + r, ball.center};
}

inline void require_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0, 1), got " + std::to_string(alpha));
    }
}

/// 1-based order statistic floor(B (1 - alpha)), clamped to [1, B]. The 1e-9
/// guard keeps exact products such as 500 * 0.95 from rounding down.
[[nodiscard]] inline std::size_t order_statistic_index(std::size_t B, double alpha) {
    const double raw = std::floor(static_cast<double>(B) * (1.0 - alpha) + 1e-9);
    return std::clamp<std::size_t>(raw < 1.0 ? 1 : static_cast<std::size_t>(raw), 1, B);
}

/// E*_j = r_b(chi_{N+1}) - r*_h^j(chi_{N+1}) + eps*_{N+1,j}.
[[nodiscard]] inline std::vector<Curve> bootstrap_errors(const BootstrapRun& run) {
    std::vector<Curve> out;
    out.reserve(run.B);
    for (std::size_t j = 0; j < run.B; ++j) {
        out.push_back(run.base_prediction_b - run.boot_predictors[j] + run.boot_errors_eps[j]);
    }
    return out;
}

/// Ball around r_h(chi_{N+1}) whose radius is the bootstrap quantile of ||E*_j||.
[[nodiscard]] inline PredictionRegion lp_region(const BootstrapRun& run, double alpha, NormTag norm) {
    require_alpha(alpha);
    if (run.B == 0) throw Error(ErrorKind::InvalidArgument, "empty bootstrap run");
    std::vector<double> rho;
    rho.reserve(run.B);
    for (const Curve& e : bootstrap_errors(run)) rho.push_back(norm_lp(e, norm));
    std::sort(rho.begin(), rho.end());
    const double radius = rho[order_statistic_index(run.B, alpha) - 1];
    return BallRegion{run.base_prediction_h, radius, norm, !(radius > 0.0)};
}

/// Pointwise population standard deviation of the bootstrap predictors.
[[nodiscard]] inline Curve sigma_star(const BootstrapRun& run) {
    if (run.B < 1) throw Error(ErrorKind::InvalidArgument, "sigma* needs bootstrap replicates");
    const std::size_t tau = run.base_prediction_h.size();
    std::vector<double> mean(tau, 0.0), m2(tau, 0.0);
    // Welford update, one replicate at a time.
    for (std::size_t j = 0; j < run.B; ++j) {
        const auto x = run.boot_predictors[j].values();
        const double count = static_cast<double>(j + 1);
        for (std::size_t t = 0; t < tau; ++t) {
            const double delta = x[t] - mean[t];
            mean[t] += delta / count;
            m2[t] += delta * (x[t] - mean[t]);
        }
    }
    std::vector<double> sd(tau);
    for (std::size_t t = 0; t < tau; ++t) sd[t] = std::sqrt(std::max(0.0, m2[t]) / static_cast<double>(run.B));
    return Curve(run.base_prediction_h.grid(), std::move(sd));
}

/// m_j = max_t |E*_j(t)| / sigma(t); p(lambda) is the fraction of m_j below lambda.
[[nodiscard]] inline std::vector<double> standardized_maxima(const BootstrapRun& run, const Curve& sigma) {
    std::vector<double> m;
    m.reserve(run.B);
    for (const Curve& e : bootstrap_errors(run)) {
        require_same_grid(e, sigma);
        double v = 0.0;
        for (std::size_t t = 0; t < e.size(); ++t) {
            if (!(sigma[t] > 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma must be positive everywhere");
            v = std::max(v, std::abs(e[t]) / sigma[t]);
        }
        m.push_back(v);
    }
    return m;
}

/// Monte Carlo p(lambda) = B^{-1} sum_j I(|E*_j(t)| < lambda sigma(t) for all t).
[[nodiscard]] inline double coverage_probability(std::span<const double> maxima, double lambda) {
    std::size_t hits = 0;
    for (double m : maxima) hits += (m < lambda) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(maxima.size());
}

/// Bisection for lambda*_alpha from the bracket lambda_L = 0, lambda_H = 1
/// doubled until p(lambda_H) >= 1 - alpha. Stops when p(lambda_M) = 1 - alpha or
/// p(lambda_H) - p(lambda_L) < eta. If the bracket collapses onto a jump of the
/// step function first, the upper end (p >= 1 - alpha) is returned.
[[nodiscard]] inline double bisect_lambda(const BootstrapRun& run, const Curve& sigma, double alpha,
                                          double eta = 1e-4) {
    require_alpha(alpha);
    if (!(eta > 0.0)) throw Error(ErrorKind::InvalidArgument, "eta must be positive");
    const auto m = standardized_maxima(run, sigma);
    const double target = 1.0 - alpha;
    auto p = [&](double lambda) { return coverage_probability(m, lambda); };
    auto hits_target = [&](double v) { return std::abs(v - target) < 1e-12; };

    double lo = 0.0;
    double hi = 1.0;
    for (int doubling = 0; p(hi) < target; ++doubling) {
        if (doubling >= 60) throw Error(ErrorKind::NonConvergence, "no upper bracket for lambda below 2^60");
        hi *= 2.0;
    }
    double p_lo = p(lo);
    double p_hi = p(hi);
    for (int iter = 0; iter < 5000; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double p_mid = p(mid);
        if (hits_target(p_mid) || p_hi - p_lo < eta) return mid;
        if (mid <= lo || mid >= hi) return hi;
        if (target < p_mid) {
            hi = mid;
            p_hi = p_mid;
        } else {
            lo = mid;
            p_lo = p_mid;
        }
    }
    throw Error(ErrorKind::NonConvergence, "lambda bisection did not converge");
}

/// sigma* floored at max(1e-8, 1e-6 max_t sigma*(t)).
[[nodiscard]] inline Curve floored_sigma(const Curve& sigma) {
    const double floor = std::max(1e-8, 1e-6 * sigma.max());
    std::vector<double> v(sigma.values().begin(), sigma.values().end());
    for (double& x : v) x = std::max(x, floor);
    return Curve(sigma.grid(), std::move(v));
}

struct LambdaBand {
    BandRegion band;
    double lambda = 0.0;
    Curve sigma; ///< floored sigma*
};

[[nodiscard]] inline LambdaBand lambda_band(const BootstrapRun& run, double alpha, double eta = 1e-4) {
    const Curve sigma = floored_sigma(sigma_star(run));
    const double lambda = bisect_lambda(run, sigma, alpha, eta);
    const Curve half = sigma * lambda;
    return LambdaBand{BandRegion{run.base_prediction_h - half, run.base_prediction_h + half, run.base_prediction_h},
                      lambda, sigma};
}

/// Band r_h(chi_{N+1}) +- lambda*_alpha sigma*(t).
[[nodiscard]] inline PredictionRegion lambda_region(const BootstrapRun& run, double alpha, double eta = 1e-4) {
    return lambda_band(run, alpha, eta).band;
}

/// Future bootstrap observations of the depth method: r*_h^j(chi_{N+1}) + eps*_{N+1,j}.
[[nodiscard]] inline std::vector<Curve> depth_future_observations(const BootstrapRun& run) {
    std::vector<Curve> out;
    out.reserve(run.B);
    for (std::size_t j = 0; j < run.B; ++j) out.push_back(run.boot_predictors[j] + run.boot_errors_eps[j]);
    return out;
}

struct DepthEnvelope {
    BandRegion band;
    std::vector<std::size_t> kept; ///< replicate indices, deepest first
};

/// Envelope of the C = floor((1 - alpha) B) deepest future observations; ties in
/// depth keep the lower replicate index first. alpha = 0 keeps all curves.
[[nodiscard]] inline DepthEnvelope depth_envelope(const BootstrapRun& run, double alpha, std::size_t n_projections,
                                                  std::uint64_t depth_seed) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in [0, 1)");
    if (run.B < 2) throw Error(ErrorKind::InvalidArgument, "depth region needs B >= 2");
    const double raw = std::floor(static_cast<double>(run.B) * (1.0 - alpha) + 1e-9);
    const std::size_t C = raw < 1.0 ? 0 : std::min(run.B, static_cast<std::size_t>(raw));
    if (C == 0) throw Error(ErrorKind::InvalidArgument, "alpha too large: no bootstrap curve would be kept");

    const auto future = depth_future_observations(run);
    const auto depth = random_tukey_depth(future, DepthConfig{n_projections, depth_seed});
    std::vector<std::size_t> order(run.B);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return depth[a] > depth[b]; });
    order.resize(C);

    const std::size_t tau = future.front().size();
    std::vector<double> lo(tau, std::numeric_limits<double>::infinity());
    std::vector<double> hi(tau, -std::numeric_limits<double>::infinity());
    for (std::size_t j : order) {
        for (std::size_t t = 0; t < tau; ++t) {
            lo[t] = std::min(lo[t], future[j][t]);
            hi[t] = std::max(hi[t], future[j][t]);
        }
    }
    const Grid g = future.front().grid();
    return DepthEnvelope{BandRegion{Curve(g, std::move(lo)), Curve(g, std::move(hi)), future[order.front()]},
                         std::move(order)};
}

[[nodiscard]] inline PredictionRegion depth_region(const BootstrapRun& run, double alpha, std::size_t n_projections,
                                                   std::uint64_t depth_seed) {
    return depth_envelope(run, alpha, n_projections, depth_seed).band;
}

} // namespace fbands
