#pragma once

#include "fbands/curves.hpp"
#include "fbands/error.hpp"
#include "fbands/semimetrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fbands {

/// Exogenous scalar covariates of one day.
struct CovariateRow {
    std::vector<double> x;

    friend bool operator==(const CovariateRow&, const CovariateRow&) = default;
};

/// Explanatory side of a prediction: the previous curve and the current covariates.
struct Query {
    Curve curve;
    CovariateRow covariates;
};

struct RegressionPair {
    Curve predictor;
    CovariateRow covariates;
    Curve response;
};

/// Ordered (predictor, covariates, response) triples {(chi_i, zeta_i), i in S}.
class RegressionSample {
public:
    explicit RegressionSample(std::vector<RegressionPair> pairs, std::vector<long long> indices = {})
        : pairs_(std::move(pairs)), indices_(std::move(indices)) {
        if (pairs_.empty()) throw Error(ErrorKind::InvalidArgument, "regression sample is empty");
        if (indices_.empty()) {
            indices_.resize(pairs_.size());
            for (std::size_t i = 0; i < pairs_.size(); ++i) indices_[i] = static_cast<long long>(i);
        }
        if (indices_.size() != pairs_.size()) {
            throw Error(ErrorKind::InvalidArgument, "regression sample index list has the wrong length");
        }
        for (std::size_t i = 1; i < indices_.size(); ++i) {
            if (indices_[i] <= indices_[i - 1]) {
                throw Error(ErrorKind::InvalidArgument, "regression sample indices must strictly increase");
            }
        }
        const Grid& g = pairs_.front().predictor.grid();
        const std::size_t p = pairs_.front().covariates.x.size();
        for (const auto& pr : pairs_) {
            if (!(pr.predictor.grid() == g) || !(pr.response.grid() == g)) {
                throw Error(ErrorKind::GridMismatch, "regression sample mixes grids");
            }
            if (pr.covariates.x.size() != p) {
                throw Error(ErrorKind::InvalidArgument, "regression sample mixes covariate dimensions");
            }
            for (double v : pr.covariates.x) {
                if (!std::isfinite(v)) throw Error(ErrorKind::Data, "non-finite covariate");
            }
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return pairs_.size(); }
    [[nodiscard]] std::size_t p() const noexcept { return pairs_.front().covariates.x.size(); }
    [[nodiscard]] const Grid& grid() const noexcept { return pairs_.front().predictor.grid(); }
    [[nodiscard]] const std::vector<RegressionPair>& pairs() const noexcept { return pairs_; }
    [[nodiscard]] const RegressionPair& operator[](std::size_t i) const noexcept { return pairs_[i]; }
    [[nodiscard]] const std::vector<long long>& indices() const noexcept { return indices_; }

    [[nodiscard]] std::vector<Curve> predictors() const {
        std::vector<Curve> out;
        out.reserve(pairs_.size());
        for (const auto& pr : pairs_) out.push_back(pr.predictor);
        return out;
    }

    [[nodiscard]] std::vector<Curve> responses() const {
        std::vector<Curve> out;
        out.reserve(pairs_.size());
        for (const auto& pr : pairs_) out.push_back(pr.response);
        return out;
    }

    /// Same predictors and covariates, new responses (a bootstrap resample).
    [[nodiscard]] RegressionSample with_responses(std::span<const Curve> responses) const {
        if (responses.size() != pairs_.size()) {
            throw Error(ErrorKind::InvalidArgument, "response count differs from sample size");
        }
        std::vector<RegressionPair> out = pairs_;
        for (std::size_t i = 0; i < out.size(); ++i) {
            require_same_grid(out[i].response, responses[i]);
            out[i].response = responses[i];
        }
        return RegressionSample(std::move(out), indices_);
    }

    [[nodiscard]] RegressionSample without(std::size_t drop) const {
        std::vector<RegressionPair> out;
        std::vector<long long> idx;
        for (std::size_t i = 0; i < pairs_.size(); ++i) {
            if (i == drop) continue;
            out.push_back(pairs_[i]);
            idx.push_back(indices_[i]);
        }
        return RegressionSample(std::move(out), std::move(idx));
    }

private:
    std::vector<RegressionPair> pairs_;
    std::vector<long long> indices_;
};

enum class ModelFamily { FNP, SFPL };

[[nodiscard]] inline const char* to_string(ModelFamily f) noexcept {
    return f == ModelFamily::FNP ? "FNP" : "SFPL";
}

struct ModelSpec {
    ModelFamily family = ModelFamily::FNP;
    SemimetricModel semimetric;
    std::size_t k = 10;
    /// Oversmoothing factor for the bootstrap bandwidth b.
    double k_boot_factor = 2.0;
    /// X~'X~ is treated as singular beyond this condition number.
    double max_condition = 1e12;
    /// Add a 1e-8*trace ridge instead of failing on a singular SFPL design.
    bool ridge_fallback = false;
    /// When every predictor coincides with the query, average all responses
    /// instead of failing with a degenerate bandwidth.
    bool uniform_if_degenerate = false;

    /// Neighbour count behind b: min(n, ceil(k_boot_factor * k)).
    [[nodiscard]] std::size_t boot_k(std::size_t n) const {
        const auto kb = static_cast<std::size_t>(std::ceil(k_boot_factor * static_cast<double>(k)));
        return std::min(n, kb);
    }

    void validate(std::size_t n) const {
        if (k == 0 || k > n) {
            throw Error(ErrorKind::InvalidArgument,
                        "k = " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
        }
        if (!(k_boot_factor > 1.0)) throw Error(ErrorKind::InvalidArgument, "k_boot_factor must exceed 1");
    }
};

/// K(u) = 0.75 (1 - u^2) on the open interval (0, 1).
[[nodiscard]] constexpr double epanechnikov(double u) noexcept {
    return (u > 0.0 && u < 1.0) ? 0.75 * (1.0 - u * u) : 0.0;
}

inline constexpr double kBandwidthInflation = 1.0 + 1e-9;

namespace detail {

/// Predictor coordinates under a semimetric, so distances become Euclidean.
class CoordinateTable {
public:
    CoordinateTable(const SemimetricModel& d, std::span<const Curve> curves) : dim_(d.q()) {
        data_.reserve(curves.size() * dim_);
        for (const Curve& c : curves) {
            const auto x = d.coordinates(c);
            data_.insert(data_.end(), x.begin(), x.end());
        }
        n_ = curves.size();
    }

    [[nodiscard]] std::size_t size() const noexcept { return n_; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * dim_, dim_};
    }

    [[nodiscard]] std::vector<double> distances(std::span<const double> q) const {
        std::vector<double> out(n_);
        for (std::size_t i = 0; i < n_; ++i) out[i] = euclidean(q, row(i));
        return out;
    }

    /// Symmetric n x n distance matrix, row-major.
    [[nodiscard]] std::vector<double> pairwise() const {
        std::vector<double> out(n_ * n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = i + 1; j < n_; ++j) {
                const double v = euclidean(row(i), row(j));
                out[i * n_ + j] = v;
                out[j * n_ + i] = v;
            }
        }
        return out;
    }

private:
    std::size_t dim_;
    std::size_t n_ = 0;
    std::vector<double> data_;
};

inline bool all_zero(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

inline double kth_smallest(std::span<const double> dist, std::size_t k) {
    if (k == 0 || k > dist.size()) {
        throw Error(ErrorKind::InvalidArgument, "k = " + std::to_string(k) + " outside [1, " +
                                                    std::to_string(dist.size()) + "]");
    }
    std::vector<double> tmp(dist.begin(), dist.end());
    std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(k - 1), tmp.end());
    return tmp[k - 1];
}

inline double knn_from_distances(std::span<const double> dist, std::size_t k) {
    const double dk = kth_smallest(dist, k);
    if (!(dk > 0.0)) {
        throw Error(ErrorKind::DegenerateBandwidth,
                    all_zero(dist) ? "all distances to the query are zero"
                                   : "k-th nearest distance is zero");
    }
    return dk * kBandwidthInflation;
}

inline std::vector<double> nw_from_distances(std::span<const double> dist, double h) {
    if (!(h > 0.0)) throw Error(ErrorKind::InvalidArgument, "bandwidth must be positive");
    std::vector<double> w(dist.size());
    double total = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        w[i] = epanechnikov(dist[i] / h);
        total += w[i];
    }
    if (!(total > 0.0)) throw Error(ErrorKind::EmptyNeighborhood, "no predictor within the bandwidth");
    for (double& v : w) v /= total;
    return w;
}

/// kNN bandwidth followed by NW weights; optional uniform weights when every
/// distance is zero.
inline std::vector<double> knn_weights(std::span<const double> dist, std::size_t k, bool uniform_if_degenerate) {
    if (uniform_if_degenerate && all_zero(dist)) {
        return std::vector<double>(dist.size(), 1.0 / static_cast<double>(dist.size()));
    }
    return nw_from_distances(dist, knn_from_distances(dist, k));
}

/// sum_i w_i y_i over the positive weights, accumulated as offsets from the
/// first weighted response so that equal responses reproduce themselves exactly.
inline std::vector<double> weighted_sum(std::span<const double> w, std::span<const Curve> ys) {
    std::size_t r = 0;
    while (r < w.size() && w[r] == 0.0) ++r;
    if (r == w.size()) return std::vector<double>(ys.front().size(), 0.0);
    const auto ref = ys[r].values();
    std::vector<double> acc(ref.size(), 0.0);
    for (std::size_t i = r + 1; i < w.size(); ++i) {
        if (w[i] == 0.0) continue;
        const auto y = ys[i].values();
        for (std::size_t t = 0; t < acc.size(); ++t) acc[t] += w[i] * (y[t] - ref[t]);
    }
    std::vector<double> out(ref.size());
    for (std::size_t t = 0; t < out.size(); ++t) out[t] = ref[t] + acc[t];
    return out;
}

} // namespace detail

/// k-th smallest semimetric distance from the query to the sample predictors,
/// inflated by 1e-9 so exactly k predictors fall strictly inside the support.
[[nodiscard]] inline double knn_bandwidth(const Curve& query, const RegressionSample& sample, std::size_t k,
                                          const SemimetricModel& d) {
    std::vector<double> dist(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) dist[i] = semimetric_eval(d, query, sample[i].predictor);
    return detail::knn_from_distances(dist, k);
}

[[nodiscard]] inline std::vector<double> nw_weights(const Curve& query, const RegressionSample& sample, double h,
                                                    const SemimetricModel& d) {
    std::vector<double> dist(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) dist[i] = semimetric_eval(d, query, sample[i].predictor);
    return detail::nw_from_distances(dist, h);
}

[[nodiscard]] inline Curve fnp_predict(const Curve& query, const RegressionSample& sample, const ModelSpec& spec) {
    if (spec.family != ModelFamily::FNP) throw Error(ErrorKind::InvalidArgument, "fnp_predict needs an FNP spec");
    spec.validate(sample.size());
    std::vector<double> dist(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) {
        dist[i] = semimetric_eval(spec.semimetric, query, sample[i].predictor);
    }
    const auto w = detail::knn_weights(dist, spec.k, spec.uniform_if_degenerate);
    const auto ys = sample.responses();
    return Curve(sample.grid(), detail::weighted_sum(w, ys));
}

// ---------------------------------------------------------------------------
// Semi-functional partial linear model
// ---------------------------------------------------------------------------

namespace detail {

struct SfplCore {
    Eigen::MatrixXd beta;         // p x tau, zero rows for inactive columns
    Eigen::MatrixXd response_map; // p x n: beta = response_map * Z
    bool ridge_used = false;
};

/// Row-stochastic smoother matrix W_h; row i uses the kNN bandwidth of predictor i.
inline Eigen::MatrixXd smoother_matrix(std::span<const double> pairwise, std::size_t n, std::size_t k,
                                       bool uniform_if_degenerate) {
    Eigen::MatrixXd W(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto w = knn_weights(pairwise.subspan(i * n, n), k, uniform_if_degenerate);
        for (std::size_t j = 0; j < n; ++j) W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w[j];
    }
    return W;
}

/// Z minus its first row. (I - W) annihilates constants, so beta is unchanged,
/// and a sample with identical responses gets beta exactly zero.
inline Eigen::MatrixXd centered_rows(const Eigen::MatrixXd& Z) {
    if (Z.rows() == 0) return Z;
    return Z.rowwise() - Z.row(0);
}

inline SfplCore sfpl_core(const Eigen::MatrixXd& W, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                          double max_condition, bool ridge_fallback) {
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < p; ++j) {
        if ((X.col(j).array() != 0.0).any()) active.push_back(j);
    }
    SfplCore out;
    out.beta = Eigen::MatrixXd::Zero(p, Z.cols());
    out.response_map = Eigen::MatrixXd::Zero(p, n);
    if (active.empty()) return out;

    Eigen::MatrixXd Xa(n, static_cast<Eigen::Index>(active.size()));
    for (std::size_t a = 0; a < active.size(); ++a) Xa.col(static_cast<Eigen::Index>(a)) = X.col(active[a]);
    const Eigen::MatrixXd IW = Eigen::MatrixXd::Identity(n, n) - W;
    const Eigen::MatrixXd Xt = IW * Xa;
    Eigen::MatrixXd M = Xt.transpose() * Xt;
    const Eigen::MatrixXd A = Xt.transpose() * IW;

    const double scale = (Xa.transpose() * Xa).trace();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    const bool singular = !(lo > 0.0) || hi / lo > max_condition || lo <= scale / max_condition;
    if (singular) {
        // The ridge cannot rescue a design the smoother annihilated entirely.
        const double ridge = 1e-8 * M.trace();
        if (!ridge_fallback || M.trace() <= scale / max_condition) {
            throw Error(ErrorKind::SingularDesign,
                        "residualized design X~'X~ is singular or ill-conditioned (min eigenvalue " +
                            std::to_string(lo) + ")");
        }
        M.diagonal().array() += ridge;
        out.ridge_used = true;
    }
    const Eigen::MatrixXd R = M.ldlt().solve(A);
    const Eigen::MatrixXd beta_a = R * centered_rows(Z);
    for (std::size_t a = 0; a < active.size(); ++a) {
        out.beta.row(active[a]) = beta_a.row(static_cast<Eigen::Index>(a));
        out.response_map.row(active[a]) = R.row(static_cast<Eigen::Index>(a));
    }
    return out;
}

inline Eigen::MatrixXd design_matrix(const RegressionSample& s) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(s.p()));
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.p(); ++j) {
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s[i].covariates.x[j];
        }
    }
    return X;
}

inline Eigen::MatrixXd response_matrix(std::span<const Curve> ys) {
    const auto tau = static_cast<Eigen::Index>(ys.front().size());
    Eigen::MatrixXd Z(static_cast<Eigen::Index>(ys.size()), tau);
    for (std::size_t i = 0; i < ys.size(); ++i) {
        for (Eigen::Index t = 0; t < tau; ++t) Z(static_cast<Eigen::Index>(i), t) = ys[i][static_cast<std::size_t>(t)];
    }
    return Z;
}

/// x'beta + sum_i w_i (y_i - x_i'beta).
inline std::vector<double> partial_linear_value(const Eigen::MatrixXd& beta, std::span<const double> w,
                                                const RegressionSample& s, std::span<const Curve> ys,
                                                const CovariateRow& x) {
    const auto tau = static_cast<std::size_t>(beta.cols());
    const auto p = static_cast<std::size_t>(beta.rows());
    std::vector<double> out(tau, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        if (x.x[j] == 0.0) continue;
        for (std::size_t t = 0; t < tau; ++t) {
            out[t] += x.x[j] * beta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(t));
        }
    }
    std::vector<Curve> partial;
    std::vector<double> pw;
    std::vector<double> lin(tau);
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] == 0.0) continue;
        std::fill(lin.begin(), lin.end(), 0.0);
        for (std::size_t j = 0; j < p; ++j) {
            const double xij = s[i].covariates.x[j];
            if (xij == 0.0) continue;
            for (std::size_t t = 0; t < tau; ++t) {
                lin[t] += xij * beta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(t));
            }
        }
        const auto y = ys[i].values();
        for (std::size_t t = 0; t < tau; ++t) lin[t] = y[t] - lin[t];
        partial.emplace_back(ys[i].grid(), lin);
        pw.push_back(w[i]);
    }
    if (partial.empty()) return out;
    const auto smooth = weighted_sum(pw, partial);
    for (std::size_t t = 0; t < tau; ++t) out[t] += smooth[t];
    return out;
}

} // namespace detail

/// Least-squares/NW fit of the partial linear model.
struct SfplFit {
    Eigen::MatrixXd beta; ///< p x tau, one coefficient curve per covariate.
    ModelSpec spec;
    std::shared_ptr<const RegressionSample> sample;
    Eigen::MatrixXd response_map; ///< p x n, beta = response_map * responses.
    bool ridge_used = false;

    [[nodiscard]] Curve coefficient(std::size_t j) const {
        std::vector<double> v(static_cast<std::size_t>(beta.cols()));
        for (std::size_t t = 0; t < v.size(); ++t) v[t] = beta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(t));
        return Curve(sample->grid(), std::move(v));
    }
};

/// beta_h = (X~'X~)^{-1} X~' zeta~ with X~ = (I - W_h) X, zeta~ = (I - W_h) zeta,
/// solved once for all tau grid points. Identically zero covariate columns are
/// dropped from the solve and get a zero coefficient curve.
[[nodiscard]] inline SfplFit sfpl_fit(const RegressionSample& sample, const ModelSpec& spec) {
    if (spec.family != ModelFamily::SFPL) throw Error(ErrorKind::InvalidArgument, "sfpl_fit needs an SFPL spec");
    if (sample.p() == 0) throw Error(ErrorKind::InvalidArgument, "SFPL needs at least one covariate");
    spec.validate(sample.size());
    const auto preds = sample.predictors();
    const detail::CoordinateTable table(spec.semimetric, preds);
    const auto D = table.pairwise();
    const Eigen::MatrixXd W = detail::smoother_matrix(D, sample.size(), spec.k, spec.uniform_if_degenerate);
    const auto ys = sample.responses();
    auto core = detail::sfpl_core(W, detail::design_matrix(sample), detail::response_matrix(ys), spec.max_condition,
                                  spec.ridge_fallback);
    return SfplFit{std::move(core.beta), spec, std::make_shared<const RegressionSample>(sample),
                   std::move(core.response_map), core.ridge_used};
}

[[nodiscard]] inline Curve sfpl_predict(const SfplFit& fit, const Curve& query_curve, const CovariateRow& query_x) {
    const RegressionSample& s = *fit.sample;
    if (query_x.x.size() != s.p()) throw Error(ErrorKind::InvalidArgument, "query covariate dimension mismatch");
    std::vector<double> dist(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) dist[i] = semimetric_eval(fit.spec.semimetric, query_curve, s[i].predictor);
    const auto w = detail::knn_weights(dist, fit.spec.k, fit.spec.uniform_if_degenerate);
    const auto ys = s.responses();
    return Curve(s.grid(), detail::partial_linear_value(fit.beta, w, s, ys, query_x));
}

// ---------------------------------------------------------------------------
// Frozen-bandwidth regressor used by the bootstrap
// ---------------------------------------------------------------------------

/// An FNP or SFPL estimator with its neighbour count fixed. Because the
/// predictors never change under residual resampling, both estimators are
/// linear in the responses, so refitting on new responses only needs the
/// frozen weights (and, for SFPL, the frozen map from responses to beta).
class FittedRegressor {
public:
    FittedRegressor(const RegressionSample& sample, const ModelSpec& spec, std::size_t k)
        : sample_(std::make_shared<const RegressionSample>(sample)), spec_(spec),
          table_(std::make_shared<const detail::CoordinateTable>(spec.semimetric, sample.predictors())),
          responses_(sample.responses()) {
        spec_.k = k;
        spec_.validate(sample.size());
        if (spec_.family == ModelFamily::SFPL) {
            auto fit = sfpl_fit(sample, spec_);
            beta_ = std::move(fit.beta);
            response_map_ = std::move(fit.response_map);
            ridge_used_ = fit.ridge_used;
        }
    }

    [[nodiscard]] const RegressionSample& sample() const noexcept { return *sample_; }
    [[nodiscard]] const ModelSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] std::size_t k() const noexcept { return spec_.k; }
    [[nodiscard]] bool ridge_used() const noexcept { return ridge_used_; }

    [[nodiscard]] std::vector<double> weights(const Curve& query) const {
        const auto dist = table_->distances(spec_.semimetric.coordinates(query));
        return detail::knn_weights(dist, spec_.k, spec_.uniform_if_degenerate);
    }

    [[nodiscard]] Curve predict(const Query& q) const { return predict_with(responses_, weights(q.curve), q.covariates); }

    /// Prediction after refitting on `responses` with the same bandwidths.
    [[nodiscard]] Curve predict_with(std::span<const Curve> responses, std::span<const double> w,
                                     const CovariateRow& x) const {
        if (spec_.family == ModelFamily::FNP) return Curve(sample_->grid(), detail::weighted_sum(w, responses));
        if (x.x.size() != sample_->p()) throw Error(ErrorKind::InvalidArgument, "query covariate dimension mismatch");
        const Eigen::MatrixXd beta = refit_beta(responses);
        return Curve(sample_->grid(), detail::partial_linear_value(beta, w, *sample_, responses, x));
    }

    [[nodiscard]] Eigen::MatrixXd refit_beta(std::span<const Curve> responses) const {
        if (spec_.family == ModelFamily::FNP) return {};
        return response_map_ * detail::centered_rows(detail::response_matrix(responses));
    }

private:
    std::shared_ptr<const RegressionSample> sample_;
    ModelSpec spec_;
    std::shared_ptr<const detail::CoordinateTable> table_;
    std::vector<Curve> responses_;
    Eigen::MatrixXd beta_;
    Eigen::MatrixXd response_map_;
    bool ridge_used_ = false;
};

/// Generic one-step predictor: FNP or SFPL according to the spec.
[[nodiscard]] inline Curve predict(const RegressionSample& sample, const ModelSpec& spec, const Query& q) {
    if (spec.family == ModelFamily::FNP) return fnp_predict(q.curve, sample, spec);
    return sfpl_predict(sfpl_fit(sample, spec), q.curve, q.covariates);
}

// ---------------------------------------------------------------------------
// Cross-validated choice of k
// ---------------------------------------------------------------------------

enum class CvMode { Global, Local };

/// Leave-one-out CV score for each k in the grid:
///   sum_i v_i || zeta_i - r^{(-i)}_{h(k)}(chi_i) ||_2^2,
/// with v_i = 1 (global) or v_i = K(d(chi_i, query)/h_loc) (local, h_loc the kNN
/// bandwidth of the query at the largest k of the grid).
[[nodiscard]] inline std::vector<double> cv_scores(const RegressionSample& sample, const ModelSpec& spec,
                                                   std::span<const std::size_t> k_grid, CvMode mode,
                                                   const std::optional<Query>& query = std::nullopt) {
    const std::size_t n = sample.size();
    if (k_grid.empty()) throw Error(ErrorKind::InvalidArgument, "empty k grid");
    if (n < 3) throw Error(ErrorKind::InvalidArgument, "cross-validation needs at least 3 pairs");
    for (std::size_t k : k_grid) {
        if (k == 0 || k > n - 1) {
            throw Error(ErrorKind::InvalidArgument,
                        "k = " + std::to_string(k) + " outside [1, n_S - 1 = " + std::to_string(n - 1) + "]");
        }
    }
    const auto preds = sample.predictors();
    const auto ys = sample.responses();
    const detail::CoordinateTable table(spec.semimetric, preds);
    const auto D = table.pairwise();

    std::vector<double> v(n, 1.0);
    if (mode == CvMode::Local) {
        if (!query) throw Error(ErrorKind::InvalidArgument, "local cross-validation needs a query");
        const std::size_t kmax = *std::max_element(k_grid.begin(), k_grid.end());
        const auto dq = table.distances(spec.semimetric.coordinates(query->curve));
        const double hloc = detail::knn_from_distances(dq, std::min(kmax, n));
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            v[i] = epanechnikov(dq[i] / hloc);
            total += v[i];
        }
        if (!(total > 0.0)) throw Error(ErrorKind::EmptyNeighborhood, "no training predictor near the query");
    }

    const double h = sample.grid().spacing();
    std::vector<double> scores(k_grid.size(), 0.0);
    const bool sfpl = spec.family == ModelFamily::SFPL;
    std::optional<Eigen::MatrixXd> X;
    if (sfpl) X = detail::design_matrix(sample);

    for (std::size_t g = 0; g < k_grid.size(); ++g) {
        const std::size_t k = k_grid[g];
        double score = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (v[i] == 0.0) continue;
            std::vector<double> dist;
            std::vector<Curve> others;
            dist.reserve(n - 1);
            others.reserve(n - 1);
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                dist.push_back(D[i * n + j]);
                others.push_back(ys[j]);
            }
            const auto w = detail::knn_weights(dist, k, spec.uniform_if_degenerate);
            std::vector<double> pred;
            if (!sfpl) {
                pred = detail::weighted_sum(w, others);
            } else {
                // Exact leave-one-out refit of the partial linear model.
                std::vector<double> Dsub;
                Dsub.reserve((n - 1) * (n - 1));
                Eigen::MatrixXd Xs(static_cast<Eigen::Index>(n - 1), X->cols());
                std::size_t r = 0;
                for (std::size_t a = 0; a < n; ++a) {
                    if (a == i) continue;
                    for (std::size_t b = 0; b < n; ++b) {
                        if (b != i) Dsub.push_back(D[a * n + b]);
                    }
                    Xs.row(static_cast<Eigen::Index>(r++)) = X->row(static_cast<Eigen::Index>(a));
                }
                const auto W = detail::smoother_matrix(Dsub, n - 1, k, spec.uniform_if_degenerate);
                const auto core = detail::sfpl_core(W, Xs, detail::response_matrix(others), spec.max_condition,
                                                    spec.ridge_fallback);
                const auto sub = sample.without(i);
                pred = detail::partial_linear_value(core.beta, w, sub, others, sample[i].covariates);
            }
            double err = 0.0;
            for (std::size_t t = 0; t < pred.size(); ++t) {
                const double e = ys[i][t] - pred[t];
                err += e * e;
            }
            score += v[i] * h * err;
        }
        scores[g] = score;
    }
    return scores;
}

/// argmin of cv_scores; ties go to the smaller k.
[[nodiscard]] inline std::size_t select_k_cv(const RegressionSample& sample, const ModelSpec& spec,
                                             std::span<const std::size_t> k_grid, CvMode mode = CvMode::Global,
                                             const std::optional<Query>& query = std::nullopt) {
    const auto scores = cv_scores(sample, spec, k_grid, mode, query);
    std::size_t best = 0;
    for (std::size_t g = 1; g < k_grid.size(); ++g) {
        if (scores[g] < scores[best] || (scores[g] == scores[best] && k_grid[g] < k_grid[best])) best = g;
    }
    return k_grid[best];
}

} // namespace fbands
