#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dnc/errors.hpp"
#include "dnc/samplers.hpp"
#include "dnc/training.hpp"
#include "dnc/types.hpp"

namespace dnc {

/// Rows are observations. For the mixture model the observations live in
/// `response` and `features` has zero columns.
struct Dataset {
    Mat features;
    Vec response;
    std::vector<std::string> feature_names;

    Eigen::Index size() const { return response.size(); }
    Eigen::Index n_features() const { return features.cols(); }

    Dataset rows(const std::vector<Eigen::Index>& idx) const {
        Dataset out;
        out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
        out.response.resize(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            out.features.row(static_cast<Eigen::Index>(i)) = features.row(idx[i]);
            out.response(static_cast<Eigen::Index>(i)) = response(idx[i]);
        }
        out.feature_names = feature_names;
        return out;
    }
};

struct ShardedDataset {
    std::vector<Dataset> shards;
    Eigen::VectorXi assignment;  // shard index of every original row
    int n_shards() const { return static_cast<int>(shards.size()); }
};

enum class ModelKind { LogReg, Mog, RobustReg, HighDimLogReg };

inline ModelKind parse_model_kind(const std::string& s) {
    if (s == "logreg") return ModelKind::LogReg;
    if (s == "mog") return ModelKind::Mog;
    if (s == "robust_reg") return ModelKind::RobustReg;
    if (s == "highdim_logreg") return ModelKind::HighDimLogReg;
    throw ConfigError("unknown model kind '" + s + "' (expected logreg, mog, robust_reg, highdim_logreg)");
}

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::LogReg: return "logreg";
        case ModelKind::Mog: return "mog";
        case ModelKind::RobustReg: return "robust_reg";
        case ModelKind::HighDimLogReg: return "highdim_logreg";
    }
    return "?";
}

/// Prior and likelihood constants. Variances, not standard deviations,
/// unless noted.
struct ModelParams {
    ModelKind kind = ModelKind::LogReg;
    double coef_prior_var = 5.0;     // logreg: N(0, 5); robust_reg uses 100
    double mean_prior_var = 1.0;     // mog: standard normal prior on locations
    double component_var = 0.2;      // mog: spread of each component
    int n_components = 3;
    double nu = 5.0;                 // robust_reg: Student-t degrees of freedom
    double sigma_prior_scale = 10.0; // robust_reg: sigma = scale * chi^2_1

    static ModelParams defaults(ModelKind kind) {
        ModelParams p;
        p.kind = kind;
        if (kind == ModelKind::RobustReg) p.coef_prior_var = 100.0;
        return p;
    }
};

/// Parameter dimension for a dataset with p covariates.
inline int param_dim(const ModelParams& mp, Eigen::Index p) {
    switch (mp.kind) {
        case ModelKind::LogReg:
        case ModelKind::HighDimLogReg: return static_cast<int>(p) + 1;
        case ModelKind::Mog: return mp.n_components;
        case ModelKind::RobustReg: return static_cast<int>(p) + 2;
    }
    return 0;
}

namespace detail {

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
inline double sigmoid(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Design matrix with a leading intercept column.
inline Mat with_intercept(const Mat& x) {
    Mat out(x.rows(), x.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(x.cols()) = x;
    return out;
}

inline double logreg_loglik(const Mat& design, const Vec& y, const Vec& theta, Vec* grad) {
    const Vec eta = design * theta;
    double ll = 0.0;
    Vec resid(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        ll += y(i) * eta(i) - softplus(eta(i));
        resid(i) = y(i) - sigmoid(eta(i));
    }
    if (grad) *grad = design.transpose() * resid;
    return ll;
}

// Evaluated on the sorted locations so the value is exactly invariant
// under relabelling; the gradient is scattered back to the input order.
inline double mog_log_density(const Vec& x, const Vec& theta, const ModelParams& mp, double prior_weight, Vec* grad) {
    const Eigen::Index k = theta.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return theta(a) < theta(b); });
    Vec th(k);
    for (Eigen::Index j = 0; j < k; ++j) th(j) = theta(order[static_cast<std::size_t>(j)]);

    const double var = mp.component_var;
    const double log_norm = -0.5 * std::log(2.0 * M_PI * var) - std::log(static_cast<double>(k));
    double lp = 0.0;
    Vec g = Vec::Zero(k);
    Vec logc(k);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            const double r = x(i) - th(j);
            logc(j) = log_norm - 0.5 * r * r / var;
        }
        const double mx = logc.maxCoeff();
        const double se = (logc.array() - mx).exp().sum();
        lp += mx + std::log(se);
        if (grad)
            for (Eigen::Index j = 0; j < k; ++j) g(j) += std::exp(logc(j) - mx) / se * (x(i) - th(j)) / var;
    }
    for (Eigen::Index j = 0; j < k; ++j) {
        lp += prior_weight * (-0.5 * th(j) * th(j) / mp.mean_prior_var);
        g(j) -= prior_weight * th(j) / mp.mean_prior_var;
    }
    if (grad) {
        grad->resize(k);
        for (Eigen::Index j = 0; j < k; ++j) (*grad)(order[static_cast<std::size_t>(j)]) = g(j);
    }
    return lp;
}

// Per-observation Student-t log likelihood, up to the constant in nu.
inline double student_t_loglik(double resid, double log_sigma, double nu) {
    const double sigma = std::exp(log_sigma);
    return -log_sigma - 0.5 * (nu + 1.0) * std::log1p(resid * resid / (nu * sigma * sigma));
}

inline double robust_log_density(const Mat& design, const Vec& y, const Vec& theta, const ModelParams& mp,
                                 double prior_weight, Vec* grad) {
    const Eigen::Index q = design.cols();
    const Vec beta = theta.head(q);
    const double omega = theta(q);
    const double sigma2 = std::exp(2.0 * omega);
    const double nu = mp.nu;
    const Vec resid = y - design * beta;
    double lp = 0.0;
    Vec wres(resid.size());
    double domega = 0.0;
    for (Eigen::Index i = 0; i < resid.size(); ++i) {
        const double r2 = resid(i) * resid(i);
        lp += student_t_loglik(resid(i), omega, nu);
        const double denom = nu * sigma2 + r2;
        wres(i) = (nu + 1.0) * resid(i) / denom;
        domega += -1.0 + (nu + 1.0) * r2 / denom;
    }
    // sigma = scale * Z, Z ~ chi^2_1, sampled on log sigma (Jacobian included)
    const double scale = mp.sigma_prior_scale;
    const double log_prior = -0.5 * beta.squaredNorm() / mp.coef_prior_var + 0.5 * omega - std::exp(omega) / (2.0 * scale);
    lp += prior_weight * log_prior;
    if (grad) {
        grad->resize(q + 1);
        grad->head(q) = design.transpose() * wres - prior_weight * beta / mp.coef_prior_var;
        (*grad)(q) = domega + prior_weight * (0.5 - std::exp(omega) / (2.0 * scale));
    }
    return lp;
}

}  // namespace detail

/// Subposterior with the prior raised to the power 1/S. With S = 1 this is
/// the full posterior.
inline TargetDensity subposterior_target(const ModelParams& mp, const Dataset& shard, int n_shards) {
    if (n_shards < 1) throw DomainError("subposterior_target: number of shards must be >= 1");
    const double w = 1.0 / n_shards;
    TargetDensity td;
    td.dim = param_dim(mp, shard.n_features());
    switch (mp.kind) {
        case ModelKind::LogReg:
        case ModelKind::HighDimLogReg: {
            auto design = std::make_shared<const Mat>(detail::with_intercept(shard.features));
            Vec y = shard.response;
            const double pv = mp.coef_prior_var;
            td.log_density_grad = [design, y, pv, w](const Vec& theta, Vec* grad) {
                double lp = detail::logreg_loglik(*design, y, theta, grad) - w * 0.5 * theta.squaredNorm() / pv;
                if (grad) *grad -= w * theta / pv;
                return lp;
            };
            break;
        }
        case ModelKind::Mog: {
            Vec x = shard.response;
            td.log_density_grad = [x, mp, w](const Vec& theta, Vec* grad) {
                return detail::mog_log_density(x, theta, mp, w, grad);
            };
            td.symmetry_move = [](Vec& theta, Rng& rng) {
                std::vector<double> v(theta.data(), theta.data() + theta.size());
                for (std::size_t i = v.size(); i > 1; --i) {
                    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
                    std::swap(v[i - 1], v[pick(rng)]);
                }
                for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = v[static_cast<std::size_t>(i)];
            };
            break;
        }
        case ModelKind::RobustReg: {
            auto design = std::make_shared<const Mat>(detail::with_intercept(shard.features));
            Vec y = shard.response;
            td.log_density_grad = [design, y, mp, w](const Vec& theta, Vec* grad) {
                return detail::robust_log_density(*design, y, theta, mp, w, grad);
            };
            break;
        }
    }
    return td;
}

/// Settings for the synthetic data generators.
struct ToyParams {
    std::optional<Vec> true_theta;   // defaults per kind when absent
    double covariate_mean = 0.5;     // logreg covariate N(mean, sd^2)
    double covariate_sd = 1.0;
    double component_var = 0.2;      // mog
    bool component_spread_is_sd = false;
    int n_covariates = 99;           // highdim_logreg; robust_reg uses 4
    double noise_scale = 1.0;        // robust_reg sigma
    double nu = 5.0;
};

inline Vec default_true_theta(ModelKind kind, const ToyParams& tp, Rng& rng) {
    switch (kind) {
        case ModelKind::LogReg: return Vec::Constant(2, -3.0);
        case ModelKind::Mog: return (Vec(3) << 0.4, 0.0, -0.4).finished();
        case ModelKind::HighDimLogReg: {
            Vec th(tp.n_covariates + 1);
            th(0) = -5.0;
            th.tail(tp.n_covariates) = standard_normal(tp.n_covariates, rng);
            return th;
        }
        case ModelKind::RobustReg: {
            // intercept, four coefficients, log sigma (data use ToyParams::noise_scale)
            Vec th(6);
            th << 1.0, 2.0, -1.0, 0.5, 0.0, 0.0;
            return th;
        }
    }
    return {};
}

/// Reproducible synthetic data for each model kind.
inline Dataset generate_toy(ModelKind kind, const ToyParams& tp, Eigen::Index n, std::uint64_t seed) {
    if (n < 1) throw DomainError("generate_toy: n must be >= 1");
    Rng rng(seed);
    const Vec theta = tp.true_theta ? *tp.true_theta : default_true_theta(kind, tp, rng);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Dataset ds;
    switch (kind) {
        case ModelKind::LogReg:
        case ModelKind::HighDimLogReg: {
            const Eigen::Index p = theta.size() - 1;
            ds.features.resize(n, p);
            ds.response.resize(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index j = 0; j < p; ++j)
                    ds.features(i, j) =
                        kind == ModelKind::LogReg ? tp.covariate_mean + tp.covariate_sd * nd(rng) : nd(rng);
                const double eta = theta(0) + ds.features.row(i).dot(theta.tail(p));
                ds.response(i) = unif(rng) < detail::sigmoid(eta) ? 1.0 : 0.0;
            }
            break;
        }
        case ModelKind::Mog: {
            const double sd = tp.component_spread_is_sd ? tp.component_var : std::sqrt(tp.component_var);
            std::uniform_int_distribution<Eigen::Index> comp(0, theta.size() - 1);
            ds.features.resize(n, 0);
            ds.response.resize(n);
            for (Eigen::Index i = 0; i < n; ++i) ds.response(i) = theta(comp(rng)) + sd * nd(rng);
            break;
        }
        case ModelKind::RobustReg: {
            const Eigen::Index p = theta.size() - 2;
            std::student_t_distribution<double> td(tp.nu);
            ds.features.resize(n, p);
            ds.response.resize(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index j = 0; j < p; ++j) ds.features(i, j) = nd(rng);
                ds.response(i) = theta(0) + ds.features.row(i).dot(theta.segment(1, p)) + tp.noise_scale * td(rng);
            }
            break;
        }
    }
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) ds.feature_names.push_back("x" + std::to_string(j));
    return ds;
}

/// Uniform random partition into S near-equal shards; each shard keeps its
/// rows in original order.
inline ShardedDataset shard_split(const Dataset& data, int n_shards, std::uint64_t seed) {
    const Eigen::Index n = data.size();
    if (n_shards < 1) throw DomainError("shard_split: number of shards must be >= 1");
    if (n_shards > n) throw DomainError("shard_split: more shards than rows");
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    Rng rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    ShardedDataset out;
    out.assignment.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) out.assignment(perm[static_cast<std::size_t>(i)]) = static_cast<int>(i % n_shards);
    std::vector<std::vector<Eigen::Index>> rows(static_cast<std::size_t>(n_shards));
    for (Eigen::Index i = 0; i < n; ++i) rows[static_cast<std::size_t>(out.assignment(i))].push_back(i);
    for (const auto& r : rows) out.shards.push_back(data.rows(r));
    return out;
}

struct CsvSchema {
    std::string response;                 // response column name
    std::vector<std::string> features;    // empty: every other column
    bool standardize = false;             // z-score the covariates
    std::optional<Eigen::Index> expected_rows;
    std::optional<Eigen::Index> expected_features;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::string trim(std::string s) {
    const auto ws = " \t\r\n";
    s.erase(0, s.find_first_not_of(ws));
    const auto e = s.find_last_not_of(ws);
    s.erase(e == std::string::npos ? 0 : e + 1);
    return s;
}

inline std::optional<double> parse_double(const std::string& cell) {
    const std::string t = trim(cell);
    if (t.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace detail

/// Numeric table with a header row. Returns the header and an n x k matrix.
inline std::pair<std::vector<std::string>, Mat> read_numeric_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("'" + path + "': empty file, expected a header row");
    std::vector<std::string> header;
    for (auto& h : detail::split_csv_line(line)) header.push_back(detail::trim(h));
    std::vector<double> values;
    Eigen::Index rows = 0;
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) {
            std::ostringstream os;
            os << "'" << path << "' line " << lineno << ": expected " << header.size() << " fields, found " << cells.size();
            throw DataError(os.str());
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto v = detail::parse_double(cells[c]);
            if (!v) {
                std::ostringstream os;
                os << "'" << path << "' line " << lineno << ", column " << c + 1 << " (" << header[c]
                   << "): non-numeric value '" << detail::trim(cells[c]) << "'";
                throw DataError(os.str());
            }
            values.push_back(*v);
        }
        ++rows;
    }
    const auto k = static_cast<Eigen::Index>(header.size());
    Mat m(rows, k);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < k; ++j) m(i, j) = values[static_cast<std::size_t>(i * k + j)];
    return {std::move(header), std::move(m)};
}

inline Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    auto [header, table] = read_numeric_csv(path);
    if (table.rows() == 0) throw DataError("'" + path + "': no data rows");
    auto column = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError("'" + path + "': no column named '" + name + "'");
        return static_cast<Eigen::Index>(it - header.begin());
    };
    const Eigen::Index ycol = column(schema.response);
    std::vector<Eigen::Index> xcols;
    Dataset ds;
    if (schema.features.empty()) {
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(header.size()); ++j)
            if (j != ycol) xcols.push_back(j);
    } else {
        for (const auto& f : schema.features) xcols.push_back(column(f));
    }
    ds.response = table.col(ycol);
    ds.features.resize(table.rows(), static_cast<Eigen::Index>(xcols.size()));
    for (std::size_t j = 0; j < xcols.size(); ++j) {
        ds.features.col(static_cast<Eigen::Index>(j)) = table.col(xcols[j]);
        ds.feature_names.push_back(header[static_cast<std::size_t>(xcols[j])]);
    }
    if (schema.expected_rows && *schema.expected_rows != ds.size()) {
        std::ostringstream os;
        os << "'" << path << "': expected " << *schema.expected_rows << " rows, found " << ds.size();
        throw DataError(os.str());
    }
    if (schema.expected_features && *schema.expected_features != ds.n_features()) {
        std::ostringstream os;
        os << "'" << path << "': expected " << *schema.expected_features << " features, found " << ds.n_features();
        throw DataError(os.str());
    }
    if (schema.standardize) {
        for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
            auto col = ds.features.col(j);
            const double mu = col.mean();
            const double sd = std::sqrt((col.array() - mu).square().sum() / std::max<Eigen::Index>(1, col.size() - 1));
            col.array() -= mu;
            if (sd > 0.0) col /= sd;
        }
    }
    return ds;
}

/// Approximate mode by Adam ascent on a log density.
inline Vec map_estimate(const TargetDensity& target, Vec init, int steps, AdamConfig adam = {1e-2, 0.9, 0.999, 1e-8}) {
    Adam opt(init.size(), adam);
    Vec grad(init.size());
    for (int i = 0; i < steps; ++i) {
        const double lp = target.log_density_grad(init, &grad);
        if (!std::isfinite(lp) || !grad.allFinite()) throw NumericalError("map_estimate: non-finite log density");
        Vec neg = -grad;
        opt.step(init, neg);
    }
    return init;
}

}  // namespace dnc
