#pragma once

#include "fbands/bootstrap.hpp"
#include "fbands/curves.hpp"
#include "fbands/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <variant>
#include <vector>

namespace fbands {

/// Pointwise membership L(t) <= z(t) <= U(t) for band-representable regions.
[[nodiscard]] inline std::vector<bool> pointwise_contains(const PredictionRegion& region, const Curve& truth) {
    const auto band = as_band(region);
    if (!band) {
        throw Error(ErrorKind::UnsupportedRepresentation,
                    "pointwise membership is undefined for an L1/L2 ball");
    }
    require_same_grid(band->lower, truth);
    std::vector<bool> out(truth.size());
    for (std::size_t t = 0; t < truth.size(); ++t) out[t] = band->lower[t] <= truth[t] && truth[t] <= band->upper[t];
    return out;
}

/// Whole-curve membership: ||z - center|| <= radius for balls, every t inside for bands.
[[nodiscard]] inline bool contains(const PredictionRegion& region, const Curve& truth) {
    if (const auto* ball = std::get_if<BallRegion>(&region)) {
        return lp_distance(truth, ball->center, ball->norm) <= ball->radius;
    }
    const auto inside = pointwise_contains(region, truth);
    return std::all_of(inside.begin(), inside.end(), [](bool b) { return b; });
}

/// Winkler interval score of one interval (l, u) at observation z.
[[nodiscard]] constexpr double winkler_pointwise(double l, double u, double z, double alpha) noexcept {
    double s = u - l;
    if (z < l) s += (2.0 / alpha) * (l - z);
    if (z > u) s += (2.0 / alpha) * (z - u);
    return s;
}

struct RegionOutcome {
    Curve truth;
    PredictionRegion region;
    double alpha = 0.05;
};

/// Functional Winkler score: delta(L, U) plus (2/alpha) min{delta(L, z), delta(U, z)}
/// whenever z leaves the band somewhere, with delta the L1 distance.
[[nodiscard]] inline double fws(const RegionOutcome& outcome) {
    const auto band = as_band(outcome.region);
    if (!band) throw Error(ErrorKind::UnsupportedRepresentation, "FWS needs a band region");
    const Curve& z = outcome.truth;
    require_same_grid(band->lower, z);
    bool outside = false;
    for (std::size_t t = 0; t < z.size(); ++t) outside = outside || z[t] < band->lower[t] || z[t] > band->upper[t];
    double score = l1_distance(band->lower, band->upper);
    if (outside) {
        score += (2.0 / outcome.alpha) * std::min(l1_distance(band->lower, z), l1_distance(band->upper, z));
    }
    return score;
}

/// Mean band width, averaged over t then over regions.
[[nodiscard]] inline double awidth(std::span<const PredictionRegion> regions) {
    if (regions.empty()) throw Error(ErrorKind::InvalidArgument, "awidth of an empty region set");
    double acc = 0.0;
    for (const auto& r : regions) {
        const auto band = as_band(r);
        if (!band) throw Error(ErrorKind::UnsupportedRepresentation, "AWidth needs band regions");
        double w = 0.0;
        for (std::size_t t = 0; t < band->lower.size(); ++t) w += band->upper[t] - band->lower[t];
        acc += w / static_cast<double>(band->lower.size());
    }
    return acc / static_cast<double>(regions.size());
}

struct RegionReport {
    double fcov = 0.0;  ///< % of regions containing the whole curve
    double pcov = 0.0;  ///< mean % of grid points covered
    double awidth = 0.0;
    double fws = 0.0;
    std::size_t j_count = 0;
    std::size_t band_count = 0; ///< outcomes entering PCov/AWidth/FWS
};

struct DayScore {
    bool contained = false;
    double pcov = std::numeric_limits<double>::quiet_NaN(); ///< fraction in [0, 1]
    double width = std::numeric_limits<double>::quiet_NaN();
    double fws = std::numeric_limits<double>::quiet_NaN();
    bool band = false;
};

[[nodiscard]] inline DayScore score_outcome(const RegionOutcome& o) {
    DayScore s;
    s.contained = contains(o.region, o.truth);
    const auto band = as_band(o.region);
    if (!band) return s;
    s.band = true;
    const auto inside = pointwise_contains(o.region, o.truth);
    s.pcov = static_cast<double>(std::count(inside.begin(), inside.end(), true)) / static_cast<double>(inside.size());
    const PredictionRegion r = *band;
    s.width = awidth(std::span<const PredictionRegion>(&r, 1));
    s.fws = fws(o);
    return s;
}

/// Aggregates day scores: FCov over all outcomes, the band metrics over band
/// outcomes only (NaN when there are none).
[[nodiscard]] inline RegionReport aggregate(std::span<const DayScore> scores) {
    RegionReport rep;
    rep.j_count = scores.size();
    if (scores.empty()) {
        rep.fcov = rep.pcov = rep.awidth = rep.fws = std::numeric_limits<double>::quiet_NaN();
        return rep;
    }
    std::size_t hits = 0;
    double pcov = 0.0, width = 0.0, f = 0.0;
    for (const auto& s : scores) {
        hits += s.contained ? 1 : 0;
        if (!s.band) continue;
        ++rep.band_count;
        pcov += s.pcov;
        width += s.width;
        f += s.fws;
    }
    rep.fcov = 100.0 * static_cast<double>(hits) / static_cast<double>(scores.size());
    if (rep.band_count == 0) {
        rep.pcov = rep.awidth = rep.fws = std::numeric_limits<double>::quiet_NaN();
    } else {
        const auto nb = static_cast<double>(rep.band_count);
        rep.pcov = 100.0 * pcov / nb;
        rep.awidth = width / nb;
        rep.fws = f / nb;
    }
    return rep;
}

[[nodiscard]] inline RegionReport evaluate(std::span<const RegionOutcome> outcomes) {
    std::vector<DayScore> scores;
    scores.reserve(outcomes.size());
    for (const auto& o : outcomes) scores.push_back(score_outcome(o));
    return aggregate(scores);
}

} // namespace fbands
