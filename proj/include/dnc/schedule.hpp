#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "dnc/errors.hpp"
#include "dnc/types.hpp"

namespace dnc {

/// Variance-preserving noise schedule with linear rate
/// beta(t) = beta_min + t (beta_max - beta_min) on t in [0, 1].
///
/// The transition kernel is x_t | x_0 ~ N(m(t) x_0, s(t)^2 I) with
/// m(t) = exp(-B(t) / 2), B the integrated rate, and m^2 + s^2 = 1.
class VpSchedule {
public:
    VpSchedule() = default;
    VpSchedule(double beta_min, double beta_max) : beta_min_(beta_min), beta_max_(beta_max) {
        if (!(beta_min > 0.0) || !(beta_max >= beta_min) || !std::isfinite(beta_max))
            throw DomainError("VpSchedule: require 0 < beta_min <= beta_max, got beta_min=" +
                              std::to_string(beta_min) + " beta_max=" + std::to_string(beta_max));
    }

    double beta_min() const { return beta_min_; }
    double beta_max() const { return beta_max_; }

    double beta(double t) const {
        check(t);
        return beta_min_ + t * (beta_max_ - beta_min_);
    }

    /// Integral of beta over [0, t].
    double integrated_beta(double t) const {
        check(t);
        return beta_min_ * t + 0.5 * (beta_max_ - beta_min_) * t * t;
    }

    double mean_scale(double t) const { return std::exp(-0.5 * integrated_beta(t)); }

    /// sqrt(1 - m^2), evaluated through expm1 so small t keeps full precision.
    double noise_scale(double t) const { return std::sqrt(-std::expm1(-integrated_beta(t))); }

    /// DSM/TSM mixing weight s^2 / (s^2 + m^2 sigma_data^2).
    double kappa(double t, double sigma_data = 1.0) const {
        if (!(sigma_data > 0.0)) throw DomainError("kappa: sigma_data must be positive");
        const double s = noise_scale(t);
        const double m = mean_scale(t);
        const double s2 = s * s;
        return s2 / (s2 + m * m * sigma_data * sigma_data);
    }

    /// Draws x_t ~ p(x_t | x_0). Returns (x_t, eps) with x_t = m x_0 + s eps.
    std::pair<Vec, Vec> sample_transition(const Vec& x0, double t, Rng& rng) const {
        if (!(t > 0.0)) throw DomainError("sample_transition: t must lie in (0, 1], got " + std::to_string(t));
        Vec eps = standard_normal(x0.size(), rng);
        Vec xt = mean_scale(t) * x0 + noise_scale(t) * eps;
        return {std::move(xt), std::move(eps)};
    }

private:
    static void check(double t) {
        if (!(t >= 0.0 && t <= 1.0)) throw DomainError("VpSchedule: t must lie in [0, 1], got " + std::to_string(t));
    }

    double beta_min_ = 0.1;
    double beta_max_ = 20.0;
};

}  // namespace dnc
