#pragma once

#include "fbands/curves.hpp"
#include "fbands/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace fbands {

enum class SemimetricKind { L2Raw, Fpca };

/// Proximity measure between curves. For the FPCA kind the distance is the
/// Euclidean distance between projections on the leading q eigencurves of the
/// sample covariance operator, so it is a seminorm of the difference.
class SemimetricModel {
public:
    SemimetricModel(Grid grid, SemimetricKind kind, std::vector<Curve> basis, std::optional<Curve> mean,
                    std::vector<double> eigenvalues, double total_variance)
        : grid_(grid), kind_(kind), basis_(std::move(basis)), mean_(std::move(mean)),
          eigenvalues_(std::move(eigenvalues)), total_variance_(total_variance) {}

    [[nodiscard]] static SemimetricModel l2(Grid grid) {
        return SemimetricModel(grid, SemimetricKind::L2Raw, {}, std::nullopt, {}, 0.0);
    }

    [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
    [[nodiscard]] SemimetricKind kind() const noexcept { return kind_; }
    [[nodiscard]] std::size_t q() const noexcept {
        return kind_ == SemimetricKind::Fpca ? basis_.size() : grid_.tau();
    }
    [[nodiscard]] const std::vector<Curve>& basis() const noexcept { return basis_; }
    [[nodiscard]] const std::optional<Curve>& mean() const noexcept { return mean_; }
    [[nodiscard]] const std::vector<double>& eigenvalues() const noexcept { return eigenvalues_; }
    [[nodiscard]] double total_variance() const noexcept { return total_variance_; }

    /// Fraction of total sample variance carried by the retained eigencurves.
    [[nodiscard]] double explained_fraction() const noexcept {
        if (total_variance_ <= 0.0) return 0.0;
        double s = 0.0;
        for (double e : eigenvalues_) s += e;
        return s / total_variance_;
    }

    /// Coordinates whose Euclidean distance equals the semimetric.
    [[nodiscard]] std::vector<double> coordinates(const Curve& x) const {
        if (!(x.grid() == grid_)) {
            throw Error(ErrorKind::GridMismatch, "curve grid differs from the semimetric grid");
        }
        if (kind_ == SemimetricKind::L2Raw) {
            const double root = std::sqrt(grid_.spacing());
            std::vector<double> out(x.size());
            for (std::size_t t = 0; t < x.size(); ++t) out[t] = root * x[t];
            return out;
        }
        std::vector<double> out(basis_.size());
        for (std::size_t k = 0; k < basis_.size(); ++k) out[k] = inner_product(x, basis_[k]);
        return out;
    }

private:
    Grid grid_;
    SemimetricKind kind_;
    std::vector<Curve> basis_;
    std::optional<Curve> mean_;
    std::vector<double> eigenvalues_;
    double total_variance_;
};

[[nodiscard]] inline double euclidean(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

namespace detail {

struct CovarianceEigen {
    Eigen::VectorXd values;  // descending, operator scale
    Eigen::MatrixXd vectors; // columns, unit Euclidean norm
    double trace = 0.0;
    Curve mean;
};

inline CovarianceEigen covariance_eigen(std::span<const Curve> sample) {
    if (sample.empty()) throw Error(ErrorKind::InvalidArgument, "FPCA needs a nonempty sample");
    const Grid grid = sample.front().grid();
    const auto tau = static_cast<Eigen::Index>(grid.tau());
    const auto n = static_cast<Eigen::Index>(sample.size());
    Curve mean = mean_curve(sample);

    Eigen::MatrixXd centered(n, tau);
    for (Eigen::Index i = 0; i < n; ++i) {
        require_same_grid(sample[static_cast<std::size_t>(i)], mean);
        for (Eigen::Index t = 0; t < tau; ++t) {
            centered(i, t) = sample[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)] -
                             mean[static_cast<std::size_t>(t)];
        }
    }
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw Error(ErrorKind::NonConvergence, "covariance eigendecomposition failed");
    }
    // Operator eigenvalues carry the grid spacing.
    const double h = grid.spacing();
    CovarianceEigen out{solver.eigenvalues().reverse() * h, solver.eigenvectors().rowwise().reverse(),
                        cov.trace() * h, std::move(mean)};
    return out;
}

} // namespace detail

/// Fits the FPCA semimetric on the leading q eigencurves of the centered sample.
/// Each eigencurve has unit norm under the spacing-weighted inner product and its
/// largest-magnitude coordinate is positive.
[[nodiscard]] inline SemimetricModel fpca_semimetric_fit(std::span<const Curve> sample, std::size_t q) {
    if (sample.empty()) throw Error(ErrorKind::InvalidArgument, "FPCA needs a nonempty sample");
    const Grid grid = sample.front().grid();
    if (q == 0 || q > grid.tau()) {
        throw Error(ErrorKind::InvalidArgument, "FPCA q must lie in [1, tau]");
    }
    if (q > sample.size()) {
        throw Error(ErrorKind::InvalidArgument, "FPCA q exceeds the sample size");
    }
    auto eig = detail::covariance_eigen(sample);
    if (!(eig.trace > 0.0)) {
        throw Error(ErrorKind::Data, "FPCA sample has zero variance (all curves identical)");
    }
    const double root = std::sqrt(grid.spacing());
    std::vector<Curve> basis;
    std::vector<double> values;
    basis.reserve(q);
    for (std::size_t k = 0; k < q; ++k) {
        Eigen::VectorXd u = eig.vectors.col(static_cast<Eigen::Index>(k));
        Eigen::Index arg = 0;
        for (Eigen::Index t = 1; t < u.size(); ++t) {
            if (std::abs(u(t)) > std::abs(u(arg))) arg = t;
        }
        if (u(arg) < 0.0) u = -u;
        std::vector<double> v(static_cast<std::size_t>(u.size()));
        for (Eigen::Index t = 0; t < u.size(); ++t) v[static_cast<std::size_t>(t)] = u(t) / root;
        basis.emplace_back(grid, std::move(v));
        values.push_back(std::max(0.0, eig.values(static_cast<Eigen::Index>(k))));
    }
    return SemimetricModel(grid, SemimetricKind::Fpca, std::move(basis), std::move(eig.mean),
                           std::move(values), eig.trace);
}

/// Smallest q (at most q_max) whose eigencurves explain at least `fraction` of the variance.
[[nodiscard]] inline SemimetricModel fpca_semimetric_fit_explained(std::span<const Curve> sample,
                                                                   double fraction, std::size_t q_max) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "explained-variance fraction must lie in (0, 1]");
    }
    if (sample.empty()) throw Error(ErrorKind::InvalidArgument, "FPCA needs a nonempty sample");
    q_max = std::min({q_max, sample.front().grid().tau(), sample.size()});
    auto eig = detail::covariance_eigen(sample);
    std::size_t q = 1;
    double acc = 0.0;
    for (; q <= q_max; ++q) {
        acc += std::max(0.0, eig.values(static_cast<Eigen::Index>(q - 1)));
        if (acc >= fraction * eig.trace) break;
    }
    return fpca_semimetric_fit(sample, std::min(q, q_max));
}

[[nodiscard]] inline double semimetric_eval(const SemimetricModel& model, const Curve& x, const Curve& y) {
    require_same_grid(x, y);
    if (model.kind() == SemimetricKind::L2Raw) {
        if (!(x.grid() == model.grid())) {
            throw Error(ErrorKind::GridMismatch, "curve grid differs from the semimetric grid");
        }
        return lp_distance(x, y, NormTag::L2);
    }
    const Curve diff = x - y;
    const auto c = model.coordinates(diff);
    double acc = 0.0;
    for (double v : c) acc += v * v;
    return std::sqrt(acc);
}

} // namespace fbands
