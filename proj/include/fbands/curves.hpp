#pragma once

#include "fbands/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fbands {

/// Periodic sampling grid: `tau` points per seasonal cycle, `spacing` units of t apart.
class Grid {
public:
    explicit Grid(std::size_t tau, double spacing = 1.0) : tau_(tau), spacing_(spacing) {
        if (tau_ < 2) {
            throw Error(ErrorKind::InvalidArgument, "grid needs tau >= 2, got " + std::to_string(tau_));
        }
        if (!(spacing_ > 0.0) || !std::isfinite(spacing_)) {
            throw Error(ErrorKind::InvalidArgument, "grid spacing must be positive and finite");
        }
    }

    [[nodiscard]] std::size_t tau() const noexcept { return tau_; }
    [[nodiscard]] double spacing() const noexcept { return spacing_; }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    std::size_t tau_;
    double spacing_;
};

/// A real function sampled on a Grid. Values are always finite.
class Curve {
public:
    Curve(Grid grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
        if (values_.size() != grid_.tau()) {
            throw Error(ErrorKind::InvalidArgument, "curve has " + std::to_string(values_.size()) +
                                                        " values for a grid of tau " +
                                                        std::to_string(grid_.tau()));
        }
        for (double v : values_) {
            if (!std::isfinite(v)) {
                throw Error(ErrorKind::Data, "curve contains a non-finite value");
            }
        }
    }

    Curve(Grid grid, std::initializer_list<double> values) : Curve(grid, std::vector<double>(values)) {}

    [[nodiscard]] static Curve constant(Grid grid, double value) {
        return Curve(grid, std::vector<double>(grid.tau(), value));
    }

    [[nodiscard]] static Curve zeros(Grid grid) { return constant(grid, 0.0); }

    [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] double operator[](std::size_t t) const noexcept { return values_[t]; }

    [[nodiscard]] double min() const { return *std::min_element(values_.begin(), values_.end()); }
    [[nodiscard]] double max() const { return *std::max_element(values_.begin(), values_.end()); }

    Curve& operator+=(const Curve& other);
    Curve& operator-=(const Curve& other);
    Curve& operator*=(double c) {
        for (double& v : values_) v *= c;
        return *this;
    }

    friend bool operator==(const Curve&, const Curve&) = default;

private:
    Grid grid_;
    std::vector<double> values_;
};

inline void require_same_grid(const Curve& x, const Curve& y) {
    if (!(x.grid() == y.grid())) {
        throw Error(ErrorKind::GridMismatch, "curves live on incompatible grids");
    }
}

inline Curve& Curve::operator+=(const Curve& other) {
    require_same_grid(*this, other);
    for (std::size_t t = 0; t < values_.size(); ++t) values_[t] += other.values_[t];
    return *this;
}

inline Curve& Curve::operator-=(const Curve& other) {
    require_same_grid(*this, other);
    for (std::size_t t = 0; t < values_.size(); ++t) values_[t] -= other.values_[t];
    return *this;
}

[[nodiscard]] inline Curve operator+(Curve x, const Curve& y) { return x += y; }
[[nodiscard]] inline Curve operator-(Curve x, const Curve& y) { return x -= y; }
[[nodiscard]] inline Curve operator*(Curve x, double c) { return x *= c; }
[[nodiscard]] inline Curve operator*(double c, Curve x) { return x *= c; }

enum class NormTag { L1, L2, Linf };

[[nodiscard]] inline const char* to_string(NormTag tag) noexcept {
    switch (tag) {
    case NormTag::L1: return "L1";
    case NormTag::L2: return "L2";
    case NormTag::Linf: return "Linf";
    }
    return "?";
}

/// Rectangle-rule L_p norm on the grid.
[[nodiscard]] inline double norm_lp(std::span<const double> values, double spacing, NormTag p) {
    double acc = 0.0;
    switch (p) {
    case NormTag::L1:
        for (double v : values) acc += std::abs(v);
        return spacing * acc;
    case NormTag::L2:
        for (double v : values) acc += v * v;
        return std::sqrt(spacing * acc);
    case NormTag::Linf:
        for (double v : values) acc = std::max(acc, std::abs(v));
        return acc;
    }
    return acc;
}

[[nodiscard]] inline double norm_lp(const Curve& x, NormTag p) {
    return norm_lp(x.values(), x.grid().spacing(), p);
}

/// Spacing-weighted inner product on the grid.
[[nodiscard]] inline double inner_product(const Curve& x, const Curve& y) {
    require_same_grid(x, y);
    double acc = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) acc += x[t] * y[t];
    return x.grid().spacing() * acc;
}

[[nodiscard]] inline double lp_distance(const Curve& x, const Curve& y, NormTag p) {
    require_same_grid(x, y);
    double acc = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        const double d = std::abs(x[t] - y[t]);
        switch (p) {
        case NormTag::L1: acc += d; break;
        case NormTag::L2: acc += d * d; break;
        case NormTag::Linf: acc = std::max(acc, d); break;
        }
    }
    const double h = x.grid().spacing();
    switch (p) {
    case NormTag::L1: return h * acc;
    case NormTag::L2: return std::sqrt(h * acc);
    case NormTag::Linf: return acc;
    }
    return acc;
}

[[nodiscard]] inline double l1_distance(const Curve& x, const Curve& y) {
    return lp_distance(x, y, NormTag::L1);
}

/// Pointwise mean of a nonempty set of curves on a shared grid.
[[nodiscard]] inline Curve mean_curve(std::span<const Curve> curves) {
    if (curves.empty()) {
        throw Error(ErrorKind::InvalidArgument, "mean of an empty curve set");
    }
    std::vector<double> acc(curves.front().size(), 0.0);
    for (const Curve& c : curves) {
        require_same_grid(c, curves.front());
        for (std::size_t t = 0; t < acc.size(); ++t) acc[t] += c[t];
    }
    for (double& v : acc) v /= static_cast<double>(curves.size());
    return Curve(curves.front().grid(), std::move(acc));
}

} // namespace fbands
