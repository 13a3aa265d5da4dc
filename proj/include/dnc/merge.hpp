#pragma once

#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

#include "dnc/energy_model.hpp"
#include "dnc/errors.hpp"
#include "dnc/linalg.hpp"
#include "dnc/samplers.hpp"
#include "dnc/training.hpp"
#include "dnc/types.hpp"

namespace dnc {

/// Product of the shard energy models, each evaluated in its own
/// standardised coordinates:
///   log p_t(theta) = -sum_s E_s(A_s^{-1} (theta - mu_s), t) + const.
class MergedDensity {
public:
    struct Shard {
        EnergyModel model;
        AffineMap map;
    };

    MergedDensity() = default;
    explicit MergedDensity(std::vector<Shard> shards) : shards_(std::move(shards)) {
        if (shards_.empty()) throw ShapeError("MergedDensity: no shards");
        const auto order = canonical_order(shards_, [](const Shard& s) {
            Mat key(s.map.dim(), s.map.dim() + 1);
            key << s.map.mu, s.map.sqrt_cov;
            return key;
        });
        std::vector<Shard> sorted;
        for (std::size_t i : order) sorted.push_back(std::move(shards_[i]));
        shards_ = std::move(sorted);
        const Eigen::Index d = shards_.front().map.dim();
        std::vector<GaussianApprox> gs;
        for (const auto& s : shards_) {
            if (s.map.dim() != d || s.model.dim() != d) throw ShapeError("MergedDensity: shard dimensions disagree");
            gs.push_back(GaussianApprox::from_moments(s.map.mu, s.map.covariance()));
        }
        prior_ = gaussian_product(gs);
    }

    static MergedDensity from_trained(const std::vector<TrainedShard>& trained) {
        std::vector<Shard> shards;
        for (const auto& t : trained) shards.push_back({t.model, t.map});
        return MergedDensity(std::move(shards));
    }

    Eigen::Index dim() const { return prior_.dim(); }
    const GaussianApprox& prior() const { return prior_; }
    const std::vector<Shard>& shards() const { return shards_; }

    /// Columns of theta are points. Returns log densities and gradients.
    std::pair<Vec, Mat> log_density_batch(const Mat& theta, double t) const {
        const Eigen::Index n = theta.cols();
        Vec logp = Vec::Zero(n);
        Mat grad = Mat::Zero(theta.rows(), n);
        const Vec times = Vec::Constant(n, t);
        for (const auto& s : shards_) {
            const Mat x = s.map.inv_sqrt_cov * (theta.colwise() - s.map.mu);
            auto [e, sc] = s.model.energy_and_score(x, times);
            logp -= e;
            grad.noalias() += s.map.inv_sqrt_cov * sc;
        }
        return {std::move(logp), std::move(grad)};
    }

    double log_density(const Vec& theta, double t, Vec* grad = nullptr) const {
        auto [lp, g] = log_density_batch(Mat(theta), t);
        if (grad) *grad = g.col(0);
        return lp(0);
    }

    /// The merged density at a fixed time as an ordinary MCMC target.
    TargetDensity at_time(double t) const {
        TargetDensity td;
        td.dim = static_cast<int>(dim());
        td.log_density_grad = [this, t](const Vec& theta, Vec* grad) { return log_density(theta, t, grad); };
        return td;
    }

private:
    std::vector<Shard> shards_;
    GaussianApprox prior_;
};

namespace detail {

inline void require_equal_shapes(const std::vector<Mat>& shards, const char* who) {
    if (shards.empty()) throw ShapeError(std::string(who) + ": no shards");
    for (const auto& s : shards)
        if (s.rows() != shards.front().rows() || s.cols() != shards.front().cols())
            throw ShapeError(std::string(who) + ": shard sample matrices must have equal shapes");
}

}  // namespace detail

/// Consensus Monte Carlo: draw i of every shard, averaged with weights W_s
/// (inverse sample covariance, or identity when uniform_weights is set).
inline Mat consensus_merge(const std::vector<Mat>& shard_samples, bool uniform_weights = false) {
    detail::require_equal_shapes(shard_samples, "consensus_merge");
    const Eigen::Index d = shard_samples.front().cols();
    Mat wsum = Mat::Zero(d, d);
    Mat acc = Mat::Zero(shard_samples.front().rows(), d);
    for (std::size_t s : canonical_order(shard_samples, [](const Mat& m) -> const Mat& { return m; })) {
        const Mat w = uniform_weights ? Mat(Mat::Identity(d, d)) : FlooredEigen(sample_covariance(shard_samples[s])).inverse();
        wsum += w;
        acc.noalias() += shard_samples[s] * w;
    }
    Eigen::LLT<Mat> llt(wsum);
    if (llt.info() != Eigen::Success) throw NumericalError("consensus_merge: singular weight sum");
    // rows: (sum W)^{-1} sum W_s theta_i, with symmetric W
    return llt.solve(acc.transpose()).transpose();
}

inline std::vector<GaussianApprox> shard_gaussians(const std::vector<Mat>& shard_samples) {
    std::vector<GaussianApprox> out;
    for (const auto& s : shard_samples) out.push_back(GaussianApprox::from_samples(s));
    return out;
}

/// Moment-matching affine maps theta -> B_s (theta - mu_s) + mu_prod with
/// B_s = V_prod^{1/2} V_s^{-1/2}. Returns the transformed shards.
inline std::vector<Mat> swiss_merge(const std::vector<Mat>& shard_samples, const std::vector<GaussianApprox>& gaussians) {
    if (shard_samples.size() != gaussians.size()) throw ShapeError("swiss_merge: one Gaussian per shard required");
    const GaussianApprox prod = gaussian_product(gaussians);
    const Mat prod_root = sym_sqrt(prod.cov);
    std::vector<Mat> out;
    for (std::size_t s = 0; s < shard_samples.size(); ++s) {
        if (shard_samples[s].cols() != prod.dim()) throw ShapeError("swiss_merge: dimension mismatch");
        const Mat b = prod_root * FlooredEigen(gaussians[s].cov).inv_sqrt();
        Mat mapped = (shard_samples[s].rowwise() - gaussians[s].mean.transpose()) * b.transpose();
        mapped.rowwise() += prod.mean.transpose();
        out.push_back(std::move(mapped));
    }
    return out;
}

inline Mat pool(const std::vector<Mat>& parts) {
    Eigen::Index rows = 0;
    for (const auto& p : parts) rows += p.rows();
    Mat out(rows, parts.empty() ? 0 : parts.front().cols());
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        out.middleRows(r, p.rows()) = p;
        r += p.rows();
    }
    return out;
}

/// Parametric Gaussian merge; the result carries an exact sampler.
inline GaussianApprox gaussian_merge(const std::vector<GaussianApprox>& gaussians) { return gaussian_product(gaussians); }

}  // namespace dnc
