#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dnc/errors.hpp"
#include "dnc/schedule.hpp"
#include "dnc/types.hpp"

namespace dnc {

struct NetConfig {
    int input_dim = 1;
    int hidden_dim = 32;
    int n_residual_blocks = 1;

    void validate() const {
        if (input_dim < 1 || hidden_dim < 1 || n_residual_blocks < 1)
            throw ConfigError("NetConfig: input_dim, hidden_dim and n_residual_blocks must be >= 1");
    }
    int n_layers() const { return 2 + 2 * n_residual_blocks; }
    int layer_in(int k) const { return k == 0 ? input_dim : hidden_dim; }
    int layer_out(int k) const { return k == n_layers() - 1 ? input_dim : hidden_dim; }
    /// Weight count including the extra conditioning column, plus biases.
    Eigen::Index layer_size(int k) const {
        return static_cast<Eigen::Index>(layer_out(k)) * (layer_in(k) + 1) + layer_out(k);
    }
    Eigen::Index parameter_count() const {
        Eigen::Index n = 0;
        for (int k = 0; k < n_layers(); ++k) n += layer_size(k);
        return n;
    }

    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

namespace detail {

using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One dense layer: out x (in + 1) row-major weights whose last column
// multiplies the conditioning scalar, followed by an out-vector of biases.
template <typename Scalar>
struct LayerView {
    using MatMap = Eigen::Map<std::conditional_t<std::is_const_v<Scalar>, const RowMajorMat, RowMajorMat>>;
    using VecMap = Eigen::Map<std::conditional_t<std::is_const_v<Scalar>, const Vec, Vec>>;

    MatMap w;
    VecMap b;
    int in;

    LayerView(Scalar* data, int in_dim, int out_dim)
        : w(data, out_dim, in_dim + 1), b(data + static_cast<Eigen::Index>(out_dim) * (in_dim + 1), out_dim),
          in(in_dim) {}

    auto wx() const { return w.leftCols(in); }
    auto wc() const { return w.col(in); }
    auto wx() { return w.leftCols(in); }
    auto wc() { return w.col(in); }
};

// Z = Wx A + wc cond^T + b 1^T
template <typename L>
Mat affine(const L& layer, const Mat& a, const RowVec& cond) {
    Mat z = layer.wx() * a;
    z.noalias() += layer.wc() * cond;
    z.colwise() += layer.b;
    return z;
}

inline Mat sigmoid(const Mat& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }
inline Mat silu(const Mat& z, const Mat& sig) { return z.cwiseProduct(sig); }
inline Mat silu_d1(const Mat& z, const Mat& sig) {
    return (sig.array() * (1.0 + z.array() * (1.0 - sig.array()))).matrix();
}
inline Mat silu_d2(const Mat& z, const Mat& sig) {
    return (sig.array() * (1.0 - sig.array()) * (2.0 + z.array() * (1.0 - 2.0 * sig.array()))).matrix();
}

}  // namespace detail

/// Residual-MLP energy E(x, t) = |x - psi(x, s(t))|^2 / (2 (m(t)^2 + s(t)^2)).
///
/// All batch methods take points as the columns of a d x B matrix and one
/// time per column. psi is a SiLU network whose every layer receives s(t) as
/// an extra input; hidden layers after the first come in skip-connected
/// pairs, and the output layer is linear.
class EnergyModel {
public:
    EnergyModel() = default;

    /// Zero-initialised output head, fan-in scaled uniform hidden layers.
    EnergyModel(NetConfig config, VpSchedule sched, std::uint64_t init_seed)
        : config_(config), sched_(sched), params_(Vec::Zero(config.parameter_count())) {
        config_.validate();
        Rng rng(init_seed);
        for (int k = 0; k + 1 < config_.n_layers(); ++k) {
            auto layer = mutable_layer(k);
            const double bound = 1.0 / std::sqrt(static_cast<double>(config_.layer_in(k) + 1));
            std::uniform_real_distribution<double> u(-bound, bound);
            for (Eigen::Index i = 0; i < layer.w.rows(); ++i)
                for (Eigen::Index j = 0; j < layer.w.cols(); ++j) layer.w(i, j) = u(rng);
        }
    }

    EnergyModel(NetConfig config, VpSchedule sched, Vec params)
        : config_(config), sched_(sched), params_(std::move(params)) {
        config_.validate();
        if (params_.size() != config_.parameter_count()) {
            std::ostringstream os;
            os << "EnergyModel: expected " << config_.parameter_count() << " parameters, got " << params_.size();
            throw ShapeError(os.str());
        }
    }

    const NetConfig& config() const { return config_; }
    const VpSchedule& schedule() const { return sched_; }
    int dim() const { return config_.input_dim; }
    const Vec& parameters() const { return params_; }
    Vec& parameters() { return params_; }

    Eigen::Index layer_offset(int k) const {
        Eigen::Index off = 0;
        for (int i = 0; i < k; ++i) off += config_.layer_size(i);
        return off;
    }
    detail::LayerView<const double> layer(int k) const {
        return {params_.data() + layer_offset(k), config_.layer_in(k), config_.layer_out(k)};
    }
    detail::LayerView<double> mutable_layer(int k) {
        return {params_.data() + layer_offset(k), config_.layer_in(k), config_.layer_out(k)};
    }

    // ---- batch evaluation -------------------------------------------------

    Mat psi(const Mat& x, const Vec& t) const { return forward(x, t).psi; }

    Vec energy(const Mat& x, const Vec& t) const {
        const Tape tape = forward(x, t);
        return energies(tape, x);
    }

    /// Score -grad_x E for each column.
    Mat score(const Mat& x, const Vec& t) const { return energy_and_score(x, t).second; }

    std::pair<Vec, Mat> energy_and_score(const Mat& x, const Vec& t) const {
        const Tape tape = forward(x, t);
        Vec e = energies(tape, x);
        Mat grad = input_gradient(tape, x);
        return {std::move(e), -grad};
    }

    /// Gradient with respect to the parameters of sum_j <score(x_j, t_j), c_j>.
    Vec grad_params(const Mat& cotangent, const Mat& x, const Vec& t) const {
        if (cotangent.rows() != x.rows() || cotangent.cols() != x.cols())
            throw ShapeError("grad_params: cotangent shape must match the score output");
        return grad_params(cotangent, x, forward(x, t));
    }

    // ---- single-point convenience -----------------------------------------

    double energy(const Vec& x, double t) const { return energy(Mat(x), Vec::Constant(1, t))(0); }
    Vec score(const Vec& x, double t) const { return score(Mat(x), Vec::Constant(1, t)).col(0); }
    Vec psi(const Vec& x, double t) const { return psi(Mat(x), Vec::Constant(1, t)).col(0); }

    /// Forward activations kept for the reverse passes.
    struct Tape {
        RowVec cond;              // s(t_j)
        RowVec inv_var;           // 1 / (m^2 + s^2)
        std::vector<Mat> inputs;  // input to each layer
        std::vector<Mat> pre;     // pre-activations of activated layers
        std::vector<Mat> sig;     // sigmoid(pre)
        Mat psi;
    };

    Tape forward(const Mat& x, const Vec& t) const {
        if (x.rows() != dim()) {
            std::ostringstream os;
            os << "EnergyModel: input has " << x.rows() << " rows, model dimension is " << dim();
            throw ShapeError(os.str());
        }
        if (t.size() != x.cols()) throw ShapeError("EnergyModel: need one time per column");
        if (!x.allFinite()) throw NumericalError("EnergyModel: non-finite input");

        const Eigen::Index B = x.cols();
        const int L = config_.n_layers();
        Tape tape;
        tape.cond.resize(B);
        tape.inv_var.resize(B);
        for (Eigen::Index j = 0; j < B; ++j) {
            const double m = sched_.mean_scale(t(j));
            const double s = sched_.noise_scale(t(j));
            tape.cond(j) = s;
            tape.inv_var(j) = 1.0 / (m * m + s * s);
        }
        tape.inputs.resize(L);
        tape.pre.resize(L - 1);
        tape.sig.resize(L - 1);

        auto activate = [&](int k, const Mat& in) {
            tape.inputs[k] = in;
            tape.pre[k] = detail::affine(layer(k), in, tape.cond);
            tape.sig[k] = detail::sigmoid(tape.pre[k]);
            return detail::silu(tape.pre[k], tape.sig[k]);
        };

        Mat h = activate(0, x);
        for (int b = 0; b < config_.n_residual_blocks; ++b) {
            const Mat u = activate(2 * b + 1, h);
            h += activate(2 * b + 2, u);
        }
        tape.inputs[L - 1] = h;
        tape.psi = detail::affine(layer(L - 1), h, tape.cond);
        if (!tape.psi.allFinite()) throw NumericalError("EnergyModel: non-finite network output");
        return tape;
    }

    Vec energies(const Tape& tape, const Mat& x) const {
        const Mat r = x - tape.psi;
        return (0.5 * r.colwise().squaredNorm().cwiseProduct(tape.inv_var)).transpose();
    }

    /// grad_x E = r / v - J_psi^T r / v with r = x - psi.
    Mat input_gradient(const Tape& tape, const Mat& x) const {
        const int L = config_.n_layers();
        const Mat r_scaled = (x - tape.psi) * tape.inv_var.asDiagonal();
        Mat hbar = -(layer(L - 1).wx().transpose() * r_scaled);
        for (int b = config_.n_residual_blocks - 1; b >= 0; --b) {
            const int k1 = 2 * b + 1, k2 = 2 * b + 2;
            const Mat z2bar = hbar.cwiseProduct(detail::silu_d1(tape.pre[k2], tape.sig[k2]));
            const Mat ubar = layer(k2).wx().transpose() * z2bar;
            const Mat z1bar = ubar.cwiseProduct(detail::silu_d1(tape.pre[k1], tape.sig[k1]));
            hbar.noalias() += layer(k1).wx().transpose() * z1bar;
        }
        const Mat z0bar = hbar.cwiseProduct(detail::silu_d1(tape.pre[0], tape.sig[0]));
        return r_scaled + layer(0).wx().transpose() * z0bar;
    }

    // Differentiates F = sum_j <grad_x E_j, c_j> in the parameters by pushing
    // the tangent c through the network (forward mode) and then running the
    // reverse pass over both the primal and tangent streams. Returns -dF.
    Vec grad_params(const Mat& c, const Mat& x, const Tape& tape) const {
        const int L = config_.n_layers();
        const int nb = config_.n_residual_blocks;
        std::vector<Mat> tin(L), tz(L - 1), d1(L - 1);
        for (int k = 0; k + 1 < L; ++k) d1[k] = detail::silu_d1(tape.pre[k], tape.sig[k]);

        auto tangent = [&](int k, const Mat& in) {
            tin[k] = in;
            tz[k] = layer(k).wx() * in;
            return Mat(d1[k].cwiseProduct(tz[k]));
        };
        Mat hdot = tangent(0, c);
        for (int b = 0; b < nb; ++b) {
            const Mat udot = tangent(2 * b + 1, hdot);
            hdot += tangent(2 * b + 2, udot);
        }
        tin[L - 1] = hdot;
        const Mat psidot = layer(L - 1).wx() * hdot;

        const Mat r = x - tape.psi;
        const Mat rdot = c - psidot;
        // adjoints of psi and psidot
        const Mat psibar = -(rdot * tape.inv_var.asDiagonal());
        const Mat psidotbar = -(r * tape.inv_var.asDiagonal());

        Vec grad = Vec::Zero(params_.size());
        auto accumulate = [&](int k, const Mat& zbar, const Mat& zdotbar) {
            detail::LayerView<double> g(grad.data() + layer_offset(k), config_.layer_in(k), config_.layer_out(k));
            g.wx().noalias() += zbar * tape.inputs[k].transpose();
            g.wx().noalias() += zdotbar * tin[k].transpose();
            g.wc().noalias() += zbar * tape.cond.transpose();
            g.b += zbar.rowwise().sum();
        };
        // Reverse through an activated layer given adjoints of its output and
        // output tangent; returns adjoints of its input and input tangent.
        auto reverse_activated = [&](int k, const Mat& abar, const Mat& adotbar) {
            const Mat d2 = detail::silu_d2(tape.pre[k], tape.sig[k]);
            const Mat zbar = abar.cwiseProduct(d1[k]) + adotbar.cwiseProduct(d2).cwiseProduct(tz[k]);
            const Mat zdotbar = adotbar.cwiseProduct(d1[k]);
            accumulate(k, zbar, zdotbar);
            return std::pair<Mat, Mat>{layer(k).wx().transpose() * zbar, layer(k).wx().transpose() * zdotbar};
        };

        accumulate(L - 1, psibar, psidotbar);
        Mat hbar = layer(L - 1).wx().transpose() * psibar;
        Mat hdotbar = layer(L - 1).wx().transpose() * psidotbar;
        for (int b = nb - 1; b >= 0; --b) {
            auto [ubar, udotbar] = reverse_activated(2 * b + 2, hbar, hdotbar);
            auto [inbar, indotbar] = reverse_activated(2 * b + 1, ubar, udotbar);
            hbar += inbar;
            hdotbar += indotbar;
        }
        reverse_activated(0, hbar, hdotbar);
        return -grad;
    }

private:
    NetConfig config_;
    VpSchedule sched_;
    Vec params_;
};

}  // namespace dnc
