#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>

#include "dnc/errors.hpp"
#include "dnc/training.hpp"
#include "dnc/types.hpp"

namespace dnc {

/// Unnormalised log-density with its gradient.
struct TargetDensity {
    int dim = 0;
    /// Returns log p(theta); writes the gradient when grad is non-null.
    std::function<double(const Vec& theta, Vec* grad)> log_density_grad;
    /// Optional move that leaves the density invariant (e.g. label permutation).
    std::function<void(Vec& theta, Rng& rng)> symmetry_move;

    double log_density(const Vec& theta) const { return log_density_grad(theta, nullptr); }
    Vec grad_log_density(const Vec& theta) const {
        Vec g(theta.size());
        log_density_grad(theta, &g);
        return g;
    }
};

struct HmcConfig {
    int n_samples = 10000;
    int burn_in = 100;
    int leapfrog_steps = 10;
    std::optional<double> step_size;  // nullopt: dual averaging during burn-in
    double target_accept = 0.8;
    std::optional<Mat> mass_matrix;   // momentum covariance; identity when absent
    double step_jitter = 0.2;         // uniform relative jitter; breaks periodic trajectories
    std::uint64_t rng_seed = 0;

    void validate(int d) const {
        if (n_samples < 0 || burn_in < 0) throw ConfigError("HmcConfig: n_samples and burn_in must be >= 0");
        if (leapfrog_steps < 1) throw ConfigError("HmcConfig: leapfrog_steps must be >= 1");
        if (!(target_accept > 0.0 && target_accept < 1.0)) throw ConfigError("HmcConfig: target_accept must lie in (0, 1)");
        if (step_size && !(*step_size > 0.0)) throw ConfigError("HmcConfig: step_size must be positive");
        if (!(step_jitter >= 0.0 && step_jitter < 1.0)) throw ConfigError("HmcConfig: step_jitter must lie in [0, 1)");
        if (mass_matrix && (mass_matrix->rows() != d || mass_matrix->cols() != d))
            throw ShapeError("HmcConfig: mass matrix must be d x d");
    }
};

/// Kinetic energy 0.5 p^T M^{-1} p with momentum p ~ N(0, M).
class Momentum {
public:
    explicit Momentum(int d, const std::optional<Mat>& mass = std::nullopt) {
        if (mass) {
            Eigen::LLT<Mat> llt(*mass);
            if (llt.info() != Eigen::Success) throw NumericalError("mass matrix is not positive definite");
            chol_ = llt.matrixL();
            inv_mass_ = llt.solve(Mat::Identity(d, d));
        } else {
            chol_ = Mat::Identity(d, d);
            inv_mass_ = Mat::Identity(d, d);
        }
        identity_ = !mass.has_value();
    }

    Vec draw(Rng& rng) const { return identity_ ? standard_normal(chol_.rows(), rng) : Vec(chol_ * standard_normal(chol_.rows(), rng)); }
    Mat draw(Eigen::Index n, Rng& rng) const {
        Mat z = standard_normal(chol_.rows(), n, rng);
        return identity_ ? z : Mat(chol_ * z);
    }
    Vec velocity(const Vec& p) const { return identity_ ? p : Vec(inv_mass_ * p); }
    Mat velocity(const Mat& p) const { return identity_ ? p : Mat(inv_mass_ * p); }
    double kinetic(const Vec& p) const { return 0.5 * p.dot(velocity(p)); }
    Vec kinetic(const Mat& p) const { return 0.5 * p.cwiseProduct(velocity(p)).colwise().sum().transpose(); }

private:
    Mat chol_;
    Mat inv_mass_;
    bool identity_ = true;
};

/// Leapfrog integration in place; grad and the returned log density refer
/// to the end point.
inline double leapfrog(const TargetDensity& target, const Momentum& mom, Vec& theta, Vec& p, Vec& grad, double eps,
                       int steps) {
    double logp = 0.0;
    p += 0.5 * eps * grad;
    for (int i = 0; i < steps; ++i) {
        theta += eps * mom.velocity(p);
        logp = target.log_density_grad(theta, &grad);
        if (!std::isfinite(logp) || !grad.allFinite()) return -std::numeric_limits<double>::infinity();
        p += (i + 1 < steps ? eps : 0.5 * eps) * grad;
    }
    return logp;
}

/// Dual averaging of log step size toward a target acceptance statistic.
class DualAveraging {
public:
    DualAveraging(double eps0, double target) : mu_(std::log(10.0 * eps0)), target_(target), log_eps_(std::log(eps0)) {}

    double update(double accept_stat) {
        ++m_;
        const double w = 1.0 / (m_ + t0_);
        hbar_ = (1.0 - w) * hbar_ + w * (target_ - accept_stat);
        log_eps_ = mu_ - std::sqrt(static_cast<double>(m_)) / gamma_ * hbar_;
        const double eta = std::pow(static_cast<double>(m_), -kappa_);
        log_eps_bar_ = eta * log_eps_ + (1.0 - eta) * log_eps_bar_;
        return std::exp(log_eps_);
    }
    double current() const { return std::exp(log_eps_); }
    double final_step() const { return m_ == 0 ? current() : std::exp(log_eps_bar_); }

private:
    double mu_, target_;
    double gamma_ = 0.05, t0_ = 10.0, kappa_ = 0.75;
    double hbar_ = 0.0, log_eps_ = 0.0, log_eps_bar_ = 0.0;
    long m_ = 0;
};

struct HmcResult {
    ShardDraws draws;
    double step_size = 0.0;
    double accept_rate = 0.0;
    long divergences = 0;
};

namespace detail {

// Doubles or halves eps until a single leapfrog step's acceptance crosses 1/2.
inline double initial_step_size(const TargetDensity& target, const Momentum& mom, const Vec& theta0, double logp0,
                                const Vec& grad0, Rng& rng) {
    double eps = 1.0;
    auto log_ratio = [&](double e) {
        Vec theta = theta0, grad = grad0, p = mom.draw(rng);
        const double h0 = logp0 - mom.kinetic(p);
        const double lp = leapfrog(target, mom, theta, p, grad, e, 1);
        const double r = lp - mom.kinetic(p) - h0;
        return std::isfinite(r) ? r : -std::numeric_limits<double>::infinity();
    };
    const double dir = log_ratio(eps) > std::log(0.5) ? 1.0 : -1.0;
    for (int i = 0; i < 60; ++i) {
        const double r = log_ratio(eps);
        if (dir * r <= dir * std::log(0.5)) break;
        eps *= std::pow(2.0, dir);
    }
    return eps;
}

}  // namespace detail

/// Metropolis-adjusted HMC with a fixed number of leapfrog steps. The
/// gradient at every retained draw is recorded alongside it.
inline HmcResult hmc_sample(const TargetDensity& target, const HmcConfig& config, const Vec& init) {
    const int d = target.dim;
    if (init.size() != d) throw ShapeError("hmc_sample: init dimension does not match target");
    config.validate(d);
    Rng rng(config.rng_seed);
    const Momentum mom(d, config.mass_matrix);

    Vec theta = init;
    Vec grad(d);
    double logp = target.log_density_grad(theta, &grad);
    if (!std::isfinite(logp) || !grad.allFinite()) throw NumericalError("hmc_sample: non-finite log density at init");

    double eps = config.step_size ? *config.step_size : detail::initial_step_size(target, mom, theta, logp, grad, rng);
    DualAveraging adapt(eps, config.target_accept);

    HmcResult res;
    res.draws.samples.resize(config.n_samples, d);
    res.draws.scores.resize(config.n_samples, d);
    long accepted = 0;
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    const int total = config.burn_in + config.n_samples;
    for (int it = 0; it < total; ++it) {
        if (target.symmetry_move) {
            target.symmetry_move(theta, rng);
            logp = target.log_density_grad(theta, &grad);
        }
        const double step = config.step_jitter > 0.0 ? eps * (1.0 + config.step_jitter * (2.0 * unif(rng) - 1.0)) : eps;
        Vec p = mom.draw(rng);
        const double h0 = logp - mom.kinetic(p);
        Vec theta_new = theta, grad_new = grad;
        const double logp_new = leapfrog(target, mom, theta_new, p, grad_new, step, config.leapfrog_steps);
        const double log_ratio = logp_new - mom.kinetic(p) - h0;
        double accept_prob = 0.0;
        if (std::isfinite(log_ratio)) {
            accept_prob = std::min(1.0, std::exp(log_ratio));
            if (log_ratio < -1000.0) ++res.divergences;
        } else {
            ++res.divergences;
        }
        if (unif(rng) < accept_prob) {
            theta = std::move(theta_new);
            grad = std::move(grad_new);
            logp = logp_new;
            if (it >= config.burn_in) ++accepted;
        }
        if (it < config.burn_in && !config.step_size) {
            eps = adapt.update(accept_prob);
            if (it + 1 == config.burn_in) eps = adapt.final_step();
        }
        if (it >= config.burn_in) {
            const int row = it - config.burn_in;
            res.draws.samples.row(row) = theta.transpose();
            res.draws.scores.row(row) = grad.transpose();
        }
    }
    res.step_size = eps;
    res.accept_rate = config.n_samples > 0 ? static_cast<double>(accepted) / config.n_samples : 0.0;
    return res;
}

struct AnnealConfig {
    int n_particles = 10000;
    int n_outer = 300;
    int n_inner = 1;
    int leapfrog_steps = 3;
    double step_size = 0.0;      // <= 0: tune at t = 1 toward target_accept
    double target_accept = 0.8;
    int tune_iterations = 100;
    bool precondition = false;   // momentum covariance = prior precision
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (n_particles < 1) throw ConfigError("AnnealConfig: n_particles must be >= 1");
        if (n_outer < 1) throw ConfigError("AnnealConfig: n_outer must be >= 1");
        if (n_inner < 0) throw ConfigError("AnnealConfig: n_inner must be >= 0");
        if (leapfrog_steps < 1) throw ConfigError("AnnealConfig: leapfrog_steps must be >= 1");
    }
};

/// Interface required of a density sequence p_t for annealed sampling:
///   dim(), prior() -> GaussianApprox (the t = 1 density), and
///   log_density_batch(d x N, t) -> (N log densities, d x N gradients).
template <typename Seq>
concept DensitySequence = requires(const Seq& s, const Mat& x, double t) {
    { s.dim() } -> std::convertible_to<Eigen::Index>;
    { s.log_density_batch(x, t) } -> std::same_as<std::pair<Vec, Mat>>;
    { s.prior() } -> std::convertible_to<const GaussianApprox&>;
};

namespace detail {

template <DensitySequence Seq>
std::pair<Vec, Mat> checked_eval(const Seq& seq, const Mat& x, double t) {
    auto out = seq.log_density_batch(x, t);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (!std::isfinite(out.first(j)) || !out.second.col(j).allFinite()) {
            std::ostringstream os;
            os << "annealed_sample: non-finite energy for particle " << j << " at t=" << t;
            throw NumericalError(os.str());
        }
    }
    return out;
}

// One vectorised Metropolis-adjusted HMC step for every particle; returns
// the mean acceptance probability.
template <DensitySequence Seq>
double particle_hmc_step(const Seq& seq, double t, const Momentum& mom, Mat& theta, Vec& logp, Mat& grad, double eps,
                         int steps, Rng& rng) {
    const Eigen::Index n = theta.cols();
    Mat p = mom.draw(n, rng);
    const Vec h0 = logp - mom.kinetic(p);
    Mat th = theta, g = grad;
    Vec lp = logp;
    p += 0.5 * eps * g;
    for (int i = 0; i < steps; ++i) {
        th += eps * mom.velocity(p);
        auto [l, gr] = seq.log_density_batch(th, t);
        lp = std::move(l);
        g = std::move(gr);
        p += (i + 1 < steps ? eps : 0.5 * eps) * g;
    }
    const Vec h1 = lp - mom.kinetic(p);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double r = h1(j) - h0(j);
        const bool ok = std::isfinite(r) && g.col(j).allFinite();
        const double a = ok ? std::min(1.0, std::exp(r)) : 0.0;
        total += a;
        if (unif(rng) < a) {
            theta.col(j) = th.col(j);
            grad.col(j) = g.col(j);
            logp(j) = lp(j);
        }
    }
    return total / static_cast<double>(n);
}

}  // namespace detail

struct AnnealResult {
    Mat samples;        // n_particles x d
    double step_size = 0.0;
    double mean_accept = 0.0;
};

/// Annealed MCMC: particles start from the t = 1 Gaussian and are moved by
/// n_inner HMC updates at each of the times 1 - i / n_outer, i = 1..n_outer.
template <DensitySequence Seq>
AnnealResult annealed_sample(const Seq& seq, const AnnealConfig& config) {
    config.validate();
    Rng rng(config.rng_seed);
    const GaussianApprox& prior = seq.prior();
    const Momentum mom(static_cast<int>(seq.dim()),
                       config.precondition ? std::optional<Mat>(prior.precision) : std::nullopt);

    Mat theta = prior.sample(config.n_particles, rng).transpose();
    AnnealResult res;
    if (config.n_inner == 0) {
        res.samples = theta.transpose();
        res.step_size = config.step_size;
        return res;
    }

    double eps = config.step_size;
    if (!(eps > 0.0)) {
        Mat th = theta;
        auto [lp, g] = detail::checked_eval(seq, th, 1.0);
        eps = 0.5;
        DualAveraging adapt(eps, config.target_accept);
        for (int i = 0; i < config.tune_iterations; ++i) {
            const double a = detail::particle_hmc_step(seq, 1.0, mom, th, lp, g, eps, config.leapfrog_steps, rng);
            eps = adapt.update(a);
        }
        eps = adapt.final_step();
    }

    double accept_total = 0.0;
    for (int i = 1; i <= config.n_outer; ++i) {
        const double t = 1.0 - static_cast<double>(i) / config.n_outer;
        auto [lp, g] = detail::checked_eval(seq, theta, t);
        for (int j = 0; j < config.n_inner; ++j)
            accept_total += detail::particle_hmc_step(seq, t, mom, theta, lp, g, eps, config.leapfrog_steps, rng);
    }
    res.samples = theta.transpose();
    res.step_size = eps;
    res.mean_accept = accept_total / (static_cast<double>(config.n_outer) * config.n_inner);
    return res;
}

}  // namespace dnc
