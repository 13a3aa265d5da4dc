#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dnc/errors.hpp"
#include "dnc/schedule.hpp"
#include "dnc/types.hpp"

namespace dnc {

/// Relative eigenvalue floor applied before taking roots or inverses of
/// sample covariances.
inline constexpr double kEigenFloor = 1e-10;

/// Column means of an n x d sample matrix.
inline Vec sample_mean(const Mat& samples) {
    if (samples.rows() == 0) throw ShapeError("sample_mean: no rows");
    return samples.colwise().mean().transpose();
}

/// Unbiased (n - 1) sample covariance of an n x d sample matrix.
inline Mat sample_covariance(const Mat& samples) {
    if (samples.rows() < 2) throw ShapeError("sample_covariance: need at least 2 rows");
    const Vec mu = sample_mean(samples);
    const Mat centered = samples.rowwise() - mu.transpose();
    Mat cov = (centered.transpose() * centered) / static_cast<double>(samples.rows() - 1);
    return 0.5 * (cov + cov.transpose());
}

/// Symmetric eigendecomposition with eigenvalues floored at
/// kEigenFloor * max eigenvalue. Throws when nothing positive remains.
struct FlooredEigen {
    Mat vectors;
    Vec values;

    explicit FlooredEigen(const Mat& sym) {
        if (sym.rows() != sym.cols()) throw ShapeError("eigendecomposition: matrix not square");
        if (!sym.allFinite()) throw NumericalError("eigendecomposition: non-finite matrix entries");
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (sym + sym.transpose()));
        if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed to converge");
        values = es.eigenvalues();
        vectors = es.eigenvectors();
        const double vmax = values.maxCoeff();
        if (!(vmax > 0.0)) {
            std::ostringstream os;
            os << "singular covariance: largest eigenvalue " << vmax << " is not positive";
            throw NumericalError(os.str());
        }
        const double floor = kEigenFloor * vmax;
        for (Eigen::Index i = 0; i < values.size(); ++i) values(i) = std::max(values(i), floor);
    }

    Mat apply(const Vec& diag) const { return vectors * diag.asDiagonal() * vectors.transpose(); }
    Mat sqrt() const { return apply(values.cwiseSqrt()); }
    Mat inv_sqrt() const { return apply(values.cwiseSqrt().cwiseInverse()); }
    Mat inverse() const { return apply(values.cwiseInverse()); }
};

/// Symmetric positive-definite square root U L^{1/2} U^T.
inline Mat sym_sqrt(const Mat& spd) { return FlooredEigen(spd).sqrt(); }

/// Per-shard standardising transform x = A^{-1} (theta - mu) with A the
/// symmetric root of the sample covariance.
struct AffineMap {
    Vec mu;
    Mat sqrt_cov;
    Mat inv_sqrt_cov;
    double log_det_sqrt_cov = 0.0;

    static AffineMap identity(Eigen::Index d) {
        return {Vec::Zero(d), Mat::Identity(d, d), Mat::Identity(d, d), 0.0};
    }

    Eigen::Index dim() const { return mu.size(); }

    /// Covariance A A^T of the Gaussian this map standardises.
    Mat covariance() const { return sqrt_cov * sqrt_cov; }

    Vec to_standard(const Vec& theta) const { return inv_sqrt_cov * (theta - mu); }
    Vec from_standard(const Vec& x) const { return sqrt_cov * x + mu; }
};

inline AffineMap fit_affine(const Mat& samples) {
    const Eigen::Index n = samples.rows();
    const Eigen::Index d = samples.cols();
    if (n < d + 1) {
        std::ostringstream os;
        os << "fit_affine: need at least d+1=" << d + 1 << " samples, got " << n;
        throw ShapeError(os.str());
    }
    const FlooredEigen eig(sample_covariance(samples));
    AffineMap map;
    map.mu = sample_mean(samples);
    map.sqrt_cov = eig.sqrt();
    map.inv_sqrt_cov = eig.inv_sqrt();
    map.log_det_sqrt_cov = 0.5 * eig.values.array().log().sum();
    return map;
}

/// Returns (standardised samples, transformed scores); each row is one draw.
/// Samples map by A^{-1}(theta - mu), scores by A grad.
inline std::pair<Mat, Mat> standardize(const AffineMap& map, const Mat& samples, const Mat& scores) {
    if (samples.cols() != map.dim() || scores.cols() != map.dim() || samples.rows() != scores.rows())
        throw ShapeError("standardize: samples, scores and map dimensions disagree");
    Mat x = (samples.rowwise() - map.mu.transpose()) * map.inv_sqrt_cov.transpose();
    Mat g = scores * map.sqrt_cov.transpose();
    return {std::move(x), std::move(g)};
}

/// Multivariate normal stored with both covariance and precision.
struct GaussianApprox {
    Vec mean;
    Mat cov;
    Mat precision;

    static GaussianApprox from_moments(Vec mean, const Mat& cov) {
        if (cov.rows() != mean.size() || cov.cols() != mean.size())
            throw ShapeError("GaussianApprox: covariance shape does not match mean");
        Mat sym = 0.5 * (cov + cov.transpose());
        Eigen::LLT<Mat> llt(sym);
        if (llt.info() != Eigen::Success) throw NumericalError("GaussianApprox: covariance is not positive definite");
        Mat prec = llt.solve(Mat::Identity(sym.rows(), sym.cols()));
        return {std::move(mean), std::move(sym), 0.5 * (prec + prec.transpose())};
    }

    static GaussianApprox from_samples(const Mat& samples) {
        return from_moments(sample_mean(samples), sample_covariance(samples));
    }

    Eigen::Index dim() const { return mean.size(); }

    /// Log density up to the normalising constant.
    double log_density_unnormalized(const Vec& x) const {
        const Vec r = x - mean;
        return -0.5 * r.dot(precision * r);
    }

    /// n x d matrix of exact draws via the Cholesky factor of cov.
    Mat sample(Eigen::Index n, Rng& rng) const {
        Eigen::LLT<Mat> llt(cov);
        if (llt.info() != Eigen::Success) throw NumericalError("GaussianApprox::sample: covariance not SPD");
        const Mat z = standard_normal(dim(), n, rng);
        Mat draws = (llt.matrixL() * z).transpose();
        draws.rowwise() += mean.transpose();
        return draws;
    }
};

/// Lexicographic order on (shape, entries); used to make sums over shards
/// independent of the order the shards are supplied in.
inline bool lexicographic_less(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows()) return a.rows() < b.rows();
    if (a.cols() != b.cols()) return a.cols() < b.cols();
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

/// Indices of items sorted by key(item) under lexicographic_less, ties
/// broken by position.
template <typename T, typename Key>
std::vector<std::size_t> canonical_order(const std::vector<T>& items, Key key) {
    std::vector<std::size_t> idx(items.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t i, std::size_t j) { return lexicographic_less(key(items[i]), key(items[j])); });
    return idx;
}

/// Product of Gaussian densities: precisions add, means are
/// precision-weighted.
inline GaussianApprox gaussian_product(const std::vector<GaussianApprox>& components) {
    if (components.empty()) throw ShapeError("gaussian_product: no components");
    const Eigen::Index d = components.front().dim();
    Mat prec = Mat::Zero(d, d);
    Vec eta = Vec::Zero(d);
    const auto order = canonical_order(components, [](const GaussianApprox& g) {
        Mat key(g.dim(), g.dim() + 1);
        key << g.mean, g.precision;
        return key;
    });
    for (std::size_t i : order) {
        const auto& c = components[i];
        if (c.dim() != d) throw ShapeError("gaussian_product: dimension mismatch");
        Eigen::LLT<Mat> check(c.precision);
        if (check.info() != Eigen::Success) throw NumericalError("gaussian_product: component precision not SPD");
        prec += c.precision;
        eta += c.precision * c.mean;
    }
    prec = 0.5 * (prec + prec.transpose());
    Eigen::LLT<Mat> llt(prec);
    if (llt.info() != Eigen::Success) throw NumericalError("gaussian_product: summed precision not SPD");
    Mat cov = llt.solve(Mat::Identity(d, d));
    cov = 0.5 * (cov + cov.transpose());
    Vec mean = llt.solve(eta);
    return {std::move(mean), std::move(cov), std::move(prec)};
}

/// Noised marginals of Gaussian components summed naively ("tilde") versus
/// the noised product ("correct").
struct ScoreSumComparison {
    GaussianApprox tilde;
    GaussianApprox correct;
};

inline ScoreSumComparison score_sum_mismatch(const std::vector<GaussianApprox>& components, const VpSchedule& sched,
                                             double t) {
    const double m = sched.mean_scale(t);
    const double s = sched.noise_scale(t);
    if (components.empty()) throw ShapeError("score_sum_mismatch: no components");
    const Eigen::Index d = components.front().dim();
    const Mat noise = (s * s) * Mat::Identity(d, d);

    std::vector<GaussianApprox> noised;
    noised.reserve(components.size());
    for (const auto& c : components) noised.push_back(GaussianApprox::from_moments(m * c.mean, (m * m) * c.cov + noise));

    const GaussianApprox prod = gaussian_product(components);
    return {gaussian_product(noised), GaussianApprox::from_moments(m * prod.mean, (m * m) * prod.cov + noise)};
}

}  // namespace dnc
