#pragma once

#include "fbands/curves.hpp"
#include "fbands/error.hpp"
#include "fbands/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace fbands {

struct DepthConfig {
    std::size_t n_projections = 20;
    std::uint64_t seed = 0;
};

/// Random direction curves: i.i.d. standard normal grid values, normalized
/// under the grid inner product.
[[nodiscard]] inline std::vector<Curve> random_directions(const Grid& grid, const DepthConfig& config) {
    if (config.n_projections == 0) throw Error(ErrorKind::InvalidArgument, "depth needs at least one projection");
    Rng rng = make_stream(config.seed, kDepthStream);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Curve> out;
    out.reserve(config.n_projections);
    while (out.size() < config.n_projections) {
        std::vector<double> v(grid.tau());
        for (double& x : v) x = normal(rng);
        const double nrm = norm_lp(v, grid.spacing(), NormTag::L2);
        if (!(nrm > 0.0)) continue;
        for (double& x : v) x /= nrm;
        out.emplace_back(grid, std::move(v));
    }
    return out;
}

/// Univariate Tukey depth of each value within the set: min(#{p <= v}, #{p >= v}) / n.
[[nodiscard]] inline std::vector<double> univariate_tukey_depth(std::span<const double> values) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(values.size());
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto le = std::upper_bound(sorted.begin(), sorted.end(), values[i]) - sorted.begin();
        const auto ge = sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), values[i]);
        out[i] = static_cast<double>(std::min(le, ge)) / n;
    }
    return out;
}

/// Random Tukey depth of every curve in the set: the minimum univariate depth
/// over random one-dimensional projections.
[[nodiscard]] inline std::vector<double> random_tukey_depth(std::span<const Curve> curves, const DepthConfig& config) {
    if (curves.empty()) return {};
    for (const Curve& c : curves) require_same_grid(c, curves.front());
    const auto dirs = random_directions(curves.front().grid(), config);
    std::vector<double> depth(curves.size(), 1.0);
    std::vector<double> proj(curves.size());
    for (const Curve& u : dirs) {
        for (std::size_t i = 0; i < curves.size(); ++i) proj[i] = inner_product(curves[i], u);
        const auto d = univariate_tukey_depth(proj);
        for (std::size_t i = 0; i < curves.size(); ++i) depth[i] = std::min(depth[i], d[i]);
    }
    return depth;
}

} // namespace fbands
