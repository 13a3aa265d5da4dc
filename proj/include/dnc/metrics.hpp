#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "json.hpp"

#include "dnc/errors.hpp"
#include "dnc/linalg.hpp"
#include "dnc/types.hpp"

namespace dnc {

/// Mean shift measured in the reference covariance metric.
inline double mahalanobis(const Mat& approx, const Mat& ref) {
    if (approx.cols() != ref.cols()) throw ShapeError("mahalanobis: dimension mismatch");
    if (ref.rows() < ref.cols() + 1) throw ShapeError("mahalanobis: reference needs at least d+1 rows");
    const Vec diff = sample_mean(approx) - sample_mean(ref);
    const Mat prec = FlooredEigen(sample_covariance(ref)).inverse();
    return std::sqrt(std::max(0.0, diff.dot(prec * diff)));
}

struct IadOptions {
    double n_sigma = 5.0;  // half-width of each sample's interval, in sds
    int grid_points = 2048;
};

namespace detail {

inline double sd_of(const Vec& x) {
    const double mu = x.mean();
    return std::sqrt((x.array() - mu).square().sum() / static_cast<double>(std::max<Eigen::Index>(1, x.size() - 1)));
}

inline double quantile_sorted(const std::vector<double>& v, double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Silverman's rule of thumb: 0.9 min(sd, IQR / 1.34) n^{-1/5}.
inline double silverman_bandwidth(const Vec& x) {
    std::vector<double> v(x.data(), x.data() + x.size());
    std::sort(v.begin(), v.end());
    const double sd = sd_of(x);
    const double iqr = quantile_sorted(v, 0.75) - quantile_sorted(v, 0.25);
    double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    if (!(spread > 0.0)) throw NumericalError("kde: zero-variance marginal");
    return 0.9 * spread * std::pow(static_cast<double>(x.size()), -0.2);
}

/// Gaussian KDE on an even grid via linear binning and a discrete
/// convolution. The binning grid extends the evaluation grid by enough
/// kernel widths that mass outside it is negligible.
inline Vec kde_on_grid(const Vec& x, double lo, double hi, int points) {
    const double h = silverman_bandwidth(x);
    const double dx = (hi - lo) / (points - 1);
    const int pad = static_cast<int>(std::ceil(6.0 * h / dx)) + 1;
    const int nbins = points + 2 * pad;
    const double blo = lo - pad * dx;
    std::vector<double> counts(static_cast<std::size_t>(nbins), 0.0);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double pos = (x(i) - blo) / dx;
        if (pos < 0.0 || pos > nbins - 1) continue;
        const auto k = static_cast<int>(std::floor(pos));
        const double frac = pos - k;
        counts[static_cast<std::size_t>(k)] += 1.0 - frac;
        if (k + 1 < nbins) counts[static_cast<std::size_t>(k + 1)] += frac;
    }
    const int kw = std::min(pad, nbins);
    std::vector<double> kernel(static_cast<std::size_t>(2 * kw + 1));
    const double norm = 1.0 / (static_cast<double>(x.size()) * h * std::sqrt(2.0 * M_PI));
    for (int j = -kw; j <= kw; ++j) {
        const double u = j * dx / h;
        kernel[static_cast<std::size_t>(j + kw)] = norm * std::exp(-0.5 * u * u);
    }
    Vec dens = Vec::Zero(points);
    for (int g = 0; g < points; ++g) {
        const int b = g + pad;
        double acc = 0.0;
        for (int j = -kw; j <= kw; ++j) {
            const int src = b + j;
            if (src >= 0 && src < nbins) acc += counts[static_cast<std::size_t>(src)] * kernel[static_cast<std::size_t>(j + kw)];
        }
        dens(g) = acc;
    }
    return dens;
}

inline double trapezoid(const Vec& y, double dx) {
    if (y.size() < 2) return 0.0;
    return dx * (y.sum() - 0.5 * (y(0) + y(y.size() - 1)));
}

}  // namespace detail

/// Half the L1 distance between marginal KDEs of dimension `dim`, over the
/// union of the n_sigma intervals around both sample means.
inline double iad_marginal(const Vec& a, const Vec& f, const IadOptions& opt = {}) {
    if (a.size() < 2 || f.size() < 2) throw ShapeError("iad: need at least two samples per set");
    const double ma = a.mean(), mf = f.mean();
    const double sa = detail::sd_of(a), sf = detail::sd_of(f);
    const double lo = std::min(ma - opt.n_sigma * sa, mf - opt.n_sigma * sf);
    const double hi = std::max(ma + opt.n_sigma * sa, mf + opt.n_sigma * sf);
    if (!(hi > lo)) throw NumericalError("iad: degenerate integration range");
    const Vec pa = detail::kde_on_grid(a, lo, hi, opt.grid_points);
    const Vec pf = detail::kde_on_grid(f, lo, hi, opt.grid_points);
    const double dx = (hi - lo) / (opt.grid_points - 1);
    return 0.5 * detail::trapezoid((pa - pf).cwiseAbs(), dx);
}

inline Vec iad_per_dimension(const Mat& approx, const Mat& ref, const IadOptions& opt = {}) {
    if (approx.cols() != ref.cols()) throw ShapeError("iad: dimension mismatch");
    Vec out(approx.cols());
    for (Eigen::Index i = 0; i < approx.cols(); ++i) out(i) = iad_marginal(approx.col(i), ref.col(i), opt);
    return out;
}

/// Integrated absolute distance averaged over dimensions, in [0, 1].
inline double iad(const Mat& approx, const Mat& ref, const IadOptions& opt = {}) {
    return std::clamp(iad_per_dimension(approx, ref, opt).mean(), 0.0, 1.0);
}

/// Sample skewness (1/n) sum ((x - mean) / sd)^3 with the 1/n sd.
inline double sample_skewness(const Vec& x) {
    if (x.size() < 2) throw ShapeError("skewness: need at least two samples");
    const double mu = x.mean();
    const Eigen::ArrayXd c = x.array() - mu;
    const double sd = std::sqrt(c.square().mean());
    if (!(sd > 0.0)) throw NumericalError("skewness: zero-variance dimension");
    return (c / sd).cube().mean();
}

inline double skew_deviation(const Mat& approx, const Mat& ref) {
    if (approx.cols() != ref.cols()) throw ShapeError("skew_deviation: dimension mismatch");
    double total = 0.0;
    for (Eigen::Index i = 0; i < approx.cols(); ++i)
        total += std::abs(sample_skewness(ref.col(i)) - sample_skewness(approx.col(i)));
    return total / static_cast<double>(approx.cols());
}

struct DiscrepancyReport {
    double mahalanobis = 0.0;
    double iad = 0.0;
    double skew_dev = 0.0;
    Eigen::Index n_approx = 0;
    Eigen::Index n_ref = 0;
    Vec per_dimension_iad;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["mahalanobis"] = mahalanobis;
        j["iad"] = iad;
        j["skew"] = skew_dev;
        j["per_dim_iad"] = std::vector<double>(per_dimension_iad.data(), per_dimension_iad.data() + per_dimension_iad.size());
        j["n_approx"] = n_approx;
        j["n_ref"] = n_ref;
        return j;
    }
};

inline DiscrepancyReport evaluate(const Mat& approx, const Mat& ref, const IadOptions& opt = {}) {
    DiscrepancyReport r;
    r.mahalanobis = mahalanobis(approx, ref);
    r.per_dimension_iad = iad_per_dimension(approx, ref, opt);
    r.iad = std::clamp(r.per_dimension_iad.mean(), 0.0, 1.0);
    r.skew_dev = skew_deviation(approx, ref);
    r.n_approx = approx.rows();
    r.n_ref = ref.rows();
    if (!std::isfinite(r.mahalanobis) || !std::isfinite(r.iad) || !std::isfinite(r.skew_dev))
        throw NumericalError("evaluate: non-finite discrepancy");
    return r;
}

}  // namespace dnc
