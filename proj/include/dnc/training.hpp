#pragma once

#include <cmath>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>

#include "dnc/energy_model.hpp"
#include "dnc/errors.hpp"
#include "dnc/linalg.hpp"
#include "dnc/schedule.hpp"
#include "dnc/types.hpp"

namespace dnc {

/// Subposterior draws (rows) with the log-density gradient recorded at each.
struct ShardDraws {
    Mat samples;
    Mat scores;

    Eigen::Index size() const { return samples.rows(); }
    Eigen::Index dim() const { return samples.cols(); }

    void validate() const {
        if (samples.rows() != scores.rows() || samples.cols() != scores.cols())
            throw ShapeError("ShardDraws: samples and scores must have the same shape");
        if (!samples.allFinite() || !scores.allFinite()) throw NumericalError("ShardDraws: non-finite entries");
    }
};

struct AdamConfig {
    double step_size = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(Eigen::Index n, AdamConfig cfg) : cfg_(cfg), m_(Vec::Zero(n)), v_(Vec::Zero(n)) {}

    void step(Vec& params, const Vec& grad) {
        ++t_;
        m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
        v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        params.array() -= cfg_.step_size * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.eps);
    }

private:
    AdamConfig cfg_;
    Vec m_, v_;
    long t_ = 0;
};

enum class Objective { Combined, Dsm, Tsm };

struct TrainConfig {
    int epochs = 500;
    int batch_size = 32;
    AdamConfig adam;
    std::uint64_t rng_seed = 0;
    double t_floor = 1e-5;
    Objective objective = Objective::Combined;
    NetConfig net{};           // input_dim is taken from the data
    int progress_every = 0;    // epochs between progress lines on stderr; 0 disables
    std::string label;         // prefix for progress lines
};

/// Mixed regression target kappa (-eps / s) + (1 - kappa) m^{-1} grad for
/// standardised data (sigma_data = 1).
inline Vec regression_target(const VpSchedule& sched, const Vec& eps, double t, const Vec& transformed_score,
                             Objective objective = Objective::Combined) {
    if (!(t > 0.0)) throw DomainError("regression_target: t must be positive, got " + std::to_string(t));
    const double m = sched.mean_scale(t);
    const double s = sched.noise_scale(t);
    const double kappa = objective == Objective::Combined ? sched.kappa(t, 1.0)
                         : objective == Objective::Dsm    ? 1.0
                                                          : 0.0;
    Vec target = Vec::Zero(eps.size());
    if (kappa > 0.0) target += kappa * (-eps / s);
    if (kappa < 1.0) target += (1.0 - kappa) / m * transformed_score;
    return target;
}

/// A minibatch with its noise realisation; columns are elements.
struct NoisedBatch {
    Mat x0;
    Mat score0;
    Vec t;
    Mat eps;
};

struct LossAndGrad {
    double loss = 0.0;
    Vec grad;
};

/// Mean over the batch of |score_model(x_t, t) - target|^2 and its exact
/// parameter gradient, for a fixed noise realisation.
inline LossAndGrad batch_loss(const EnergyModel& model, const NoisedBatch& batch, Objective objective = Objective::Combined) {
    const Eigen::Index B = batch.x0.cols();
    if (B == 0) throw ShapeError("batch_loss: empty batch");
    const auto& sched = model.schedule();
    Mat xt(batch.x0.rows(), B);
    Mat target(batch.x0.rows(), B);
    for (Eigen::Index j = 0; j < B; ++j) {
        xt.col(j) = sched.mean_scale(batch.t(j)) * batch.x0.col(j) + sched.noise_scale(batch.t(j)) * batch.eps.col(j);
        target.col(j) = regression_target(sched, batch.eps.col(j), batch.t(j), batch.score0.col(j), objective);
    }
    const auto tape = model.forward(xt, batch.t);
    const Mat score = -model.input_gradient(tape, xt);
    const Mat resid = score - target;
    LossAndGrad out;
    out.loss = resid.squaredNorm() / static_cast<double>(B);
    out.grad = model.grad_params((2.0 / static_cast<double>(B)) * resid, xt, tape);
    return out;
}

/// Draws t ~ U(t_floor, 1] and eps ~ N(0, I) for every column of (x0, score0).
inline NoisedBatch draw_noise(Mat x0, Mat score0, double t_floor, Rng& rng) {
    NoisedBatch b;
    const Eigen::Index B = x0.cols();
    b.t.resize(B);
    for (Eigen::Index j = 0; j < B; ++j) b.t(j) = t_floor + (1.0 - t_floor) * uniform_open_closed(rng);
    b.eps = standard_normal(x0.rows(), B, rng);
    b.x0 = std::move(x0);
    b.score0 = std::move(score0);
    return b;
}

inline LossAndGrad batch_loss(const EnergyModel& model, const Mat& x0, const Mat& score0, double t_floor, Rng& rng,
                              Objective objective = Objective::Combined) {
    return batch_loss(model, draw_noise(x0, score0, t_floor, rng), objective);
}

struct TrainedShard {
    EnergyModel model;
    AffineMap map;
    double final_epoch_loss = 0.0;
};

/// Fits the standardising map, then trains an energy model on the
/// standardised draws and scores with Adam, resampling theta_0 uniformly.
inline TrainedShard train_shard(const ShardDraws& draws, const TrainConfig& config, const VpSchedule& sched,
                                std::ostream* progress = &std::cerr) {
    draws.validate();
    if (config.batch_size < 1) throw ConfigError("train_shard: batch_size must be >= 1");
    if (config.epochs < 0) throw ConfigError("train_shard: epochs must be >= 0");
    if (!(config.adam.step_size > 0.0)) throw ConfigError("train_shard: step_size must be positive");
    if (!(config.t_floor > 0.0 && config.t_floor < 1.0)) throw ConfigError("train_shard: t_floor must lie in (0, 1)");

    TrainedShard out;
    out.map = fit_affine(draws.samples);
    auto [x, g] = standardize(out.map, draws.samples, draws.scores);
    const Mat xs = x.transpose();
    const Mat gs = g.transpose();
    const Eigen::Index n = xs.cols();
    const Eigen::Index d = xs.rows();

    Rng rng(config.rng_seed);
    NetConfig net = config.net;
    net.input_dim = static_cast<int>(d);
    out.model = EnergyModel(net, sched, rng());
    Adam adam(out.model.parameters().size(), config.adam);

    const Eigen::Index B = config.batch_size;
    const Eigen::Index steps = (n + B - 1) / B;
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    Mat bx(d, B), bg(d, B);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double total = 0.0;
        for (Eigen::Index step = 0; step < steps; ++step) {
            for (Eigen::Index j = 0; j < B; ++j) {
                const Eigen::Index i = pick(rng);
                bx.col(j) = xs.col(i);
                bg.col(j) = gs.col(i);
            }
            const LossAndGrad lg = batch_loss(out.model, bx, bg, config.t_floor, rng, config.objective);
            if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
                std::ostringstream os;
                os << "train_shard" << (config.label.empty() ? "" : " [" + config.label + "]")
                   << ": non-finite loss at epoch " << epoch << ", batch " << step;
                throw NumericalError(os.str());
            }
            total += lg.loss;
            adam.step(out.model.parameters(), lg.grad);
        }
        out.final_epoch_loss = total / static_cast<double>(steps);
        if (progress && config.progress_every > 0 && ((epoch + 1) % config.progress_every == 0))
            *progress << (config.label.empty() ? "" : config.label + " ") << "epoch " << epoch + 1 << " loss "
                      << out.final_epoch_loss << '\n';
    }
    return out;
}

}  // namespace dnc
