#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dnc/errors.hpp"
#include "dnc/io.hpp"
#include "dnc/linalg.hpp"
#include "dnc/merge.hpp"
#include "dnc/metrics.hpp"
#include "dnc/parallel.hpp"
#include "dnc/samplers.hpp"
#include "dnc/targets.hpp"
#include "dnc/training.hpp"

namespace dnc {

using json = nlohmann::json;

inline const std::vector<std::string>& merge_method_names() {
    static const std::vector<std::string> names{"diffusion", "diffusion-annealed", "consensus", "swiss", "gaussian"};
    return names;
}

// ---- configuration -----------------------------------------------------------

namespace detail {

// Reads keys from a JSON object and rejects any it was not asked about.
class ConfigObject {
public:
    ConfigObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    template <typename T>
    T get(const std::string& key, T fallback) {
        if (!has(key)) return fallback;
        return as<T>(key);
    }

    template <typename T>
    T require(const std::string& key) {
        if (!has(key)) throw ConfigError(where_ + ": missing required key '" + key + "'");
        return as<T>(key);
    }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    ConfigObject child(const std::string& key) {
        static const json empty = json::object();
        return ConfigObject(has(key) ? j_.at(key) : empty, where_ + "." + key);
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
    }

    const std::string& where() const { return where_; }

private:
    template <typename T>
    T as(const std::string& key) {
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }

    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace detail

struct DataSpec {
    std::optional<std::string> csv_path;  // resolved against the config directory
    CsvSchema schema;
    Eigen::Index n = 1000;                // generator only
    std::optional<std::uint64_t> seed;    // generator seed; derived from the experiment seed when absent
    ToyParams toy;
};

/// Subposterior and reference sampler settings.
struct McmcSpec {
    HmcConfig hmc;
    std::string init = "map";  // map | prior_mean
    int map_steps = 500;
};

struct MergedSpec {
    HmcConfig hmc;
    bool precondition = true;  // momentum covariance = Gaussian-product precision
};

struct ExperimentConfig {
    std::string name = "experiment";
    DataSpec data;
    ModelParams model;
    int n_shards = 1;
    VpSchedule sched;
    McmcSpec mcmc;
    McmcSpec reference;
    TrainConfig train;
    AnnealConfig anneal;
    MergedSpec merged;
    std::vector<std::string> methods{"diffusion", "consensus", "swiss", "gaussian"};
    std::uint64_t seed = 0;
    int repeats = 1;
    std::string output_dir = "out";
    int marginal_points = 256;
    bool save_models = true;
    bool save_draws = true;

    void validate() const {
        if (n_shards < 1) throw ConfigError("n_shards must be >= 1");
        if (repeats < 1) throw ConfigError("repeats must be >= 1");
        if (methods.empty()) throw ConfigError("methods must not be empty");
        for (const auto& m : methods)
            if (std::find(merge_method_names().begin(), merge_method_names().end(), m) == merge_method_names().end())
                throw ConfigError("unknown merge method '" + m +
                                  "' (expected diffusion, diffusion-annealed, consensus, swiss, gaussian)");
        if (marginal_points < 2) throw ConfigError("marginal_points must be >= 2");
        mcmc.hmc.validate(1);
        reference.hmc.validate(1);
        merged.hmc.validate(1);
        anneal.validate();
        train.net.validate();
        if (mcmc.init != "map" && mcmc.init != "prior_mean") throw ConfigError("mcmc.init must be 'map' or 'prior_mean'");
    }
};

namespace detail {

inline void read_hmc(ConfigObject& o, HmcConfig& h) {
    h.n_samples = o.get("n_samples", h.n_samples);
    h.burn_in = o.get("burn_in", h.burn_in);
    h.leapfrog_steps = o.get("leapfrog_steps", h.leapfrog_steps);
    if (o.has("step_size")) {
        const json& v = o.raw("step_size");
        if (v.is_string()) {
            if (v.get<std::string>() != "adapt") throw ConfigError(o.where() + ".step_size: expected a number or \"adapt\"");
            h.step_size.reset();
        } else if (v.is_number()) {
            h.step_size = v.get<double>();
        } else {
            throw ConfigError(o.where() + ".step_size: expected a number or \"adapt\"");
        }
    }
    h.target_accept = o.get("target_accept", h.target_accept);
    h.step_jitter = o.get("step_jitter", h.step_jitter);
}

inline void read_mcmc(ConfigObject o, McmcSpec& m) {
    read_hmc(o, m.hmc);
    m.init = o.get("init", m.init);
    m.map_steps = o.get("map_steps", m.map_steps);
    o.finish();
}

inline Objective parse_objective(const std::string& s) {
    if (s == "combined") return Objective::Combined;
    if (s == "dsm") return Objective::Dsm;
    if (s == "tsm") return Objective::Tsm;
    throw ConfigError("unknown training objective '" + s + "' (expected combined, dsm, tsm)");
}

}  // namespace detail

/// Parses an experiment description. Relative CSV paths are resolved
/// against base_dir.
inline ExperimentConfig parse_experiment_config(const json& j, const std::filesystem::path& base_dir = {}) {
    ExperimentConfig c;
    detail::ConfigObject root(j, "config");
    c.name = root.get<std::string>("experiment", c.name);
    c.seed = root.get<std::uint64_t>("seed", c.seed);
    c.repeats = root.get("repeats", c.repeats);
    c.n_shards = root.require<int>("n_shards");
    c.output_dir = root.get<std::string>("output_dir", c.output_dir);
    c.marginal_points = root.get("marginal_points", c.marginal_points);
    c.save_models = root.get("save_models", c.save_models);
    c.save_draws = root.get("save_draws", c.save_draws);
    if (root.has("methods")) c.methods = root.get<std::vector<std::string>>("methods", {});

    {
        auto m = root.child("model");
        c.model = ModelParams::defaults(parse_model_kind(m.require<std::string>("kind")));
        c.model.coef_prior_var = m.get("coef_prior_var", c.model.coef_prior_var);
        c.model.mean_prior_var = m.get("mean_prior_var", c.model.mean_prior_var);
        c.model.component_var = m.get("component_var", c.model.component_var);
        c.model.n_components = m.get("n_components", c.model.n_components);
        c.model.nu = m.get("nu", c.model.nu);
        c.model.sigma_prior_scale = m.get("sigma_prior_scale", c.model.sigma_prior_scale);
        m.finish();
    }
    {
        auto d = root.child("data");
        if (d.has("csv")) {
            std::filesystem::path p = d.require<std::string>("csv");
            if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
            c.data.csv_path = p.string();
            c.data.schema.response = d.require<std::string>("response");
            c.data.schema.features = d.get<std::vector<std::string>>("features", {});
            c.data.schema.standardize = d.get("standardize", false);
            if (d.has("expected_rows")) c.data.schema.expected_rows = d.require<Eigen::Index>("expected_rows");
            if (d.has("expected_features")) c.data.schema.expected_features = d.require<Eigen::Index>("expected_features");
        } else {
            c.data.n = d.get<Eigen::Index>("n", c.data.n);
            if (d.has("seed")) c.data.seed = d.require<std::uint64_t>("seed");
            if (d.has("true_theta")) {
                const auto v = d.require<std::vector<double>>("true_theta");
                c.data.toy.true_theta = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
            }
            c.data.toy.covariate_mean = d.get("covariate_mean", c.data.toy.covariate_mean);
            c.data.toy.covariate_sd = d.get("covariate_sd", c.data.toy.covariate_sd);
            c.data.toy.component_var = d.get("component_var", c.model.component_var);
            c.data.toy.n_covariates = d.get("n_covariates", c.data.toy.n_covariates);
            c.data.toy.noise_scale = d.get("noise_scale", c.data.toy.noise_scale);
            c.data.toy.nu = d.get("nu", c.model.nu);
        }
        d.finish();
    }
    {
        auto s = root.child("sde");
        c.sched = VpSchedule(s.get("beta_min", c.sched.beta_min()), s.get("beta_max", c.sched.beta_max()));
        s.finish();
    }
    if (c.model.kind == ModelKind::Mog) c.mcmc.init = "prior_mean";
    detail::read_mcmc(root.child("mcmc"), c.mcmc);
    c.reference = c.mcmc;
    detail::read_mcmc(root.child("reference"), c.reference);
    {
        auto t = root.child("train");
        c.train.epochs = t.get("epochs", c.train.epochs);
        c.train.batch_size = t.get("batch_size", c.train.batch_size);
        c.train.adam.step_size = t.get("learning_rate", c.train.adam.step_size);
        c.train.adam.beta1 = t.get("beta1", c.train.adam.beta1);
        c.train.adam.beta2 = t.get("beta2", c.train.adam.beta2);
        c.train.adam.eps = t.get("adam_eps", c.train.adam.eps);
        c.train.t_floor = t.get("t_floor", c.train.t_floor);
        c.train.objective = detail::parse_objective(t.get<std::string>("objective", "combined"));
        c.train.net.hidden_dim = t.get("hidden_dim", c.train.net.hidden_dim);
        c.train.net.n_residual_blocks = t.get("n_residual_blocks", c.train.net.n_residual_blocks);
        c.train.progress_every = t.get("progress_every", c.train.progress_every);
        t.finish();
    }
    {
        auto a = root.child("anneal");
        c.anneal.n_particles = a.get("n_particles", c.anneal.n_particles);
        c.anneal.n_outer = a.get("n_outer", c.anneal.n_outer);
        c.anneal.n_inner = a.get("n_inner", c.anneal.n_inner);
        c.anneal.leapfrog_steps = a.get("leapfrog_steps", c.anneal.leapfrog_steps);
        c.anneal.step_size = a.get("step_size", c.anneal.step_size);
        c.anneal.target_accept = a.get("target_accept", c.anneal.target_accept);
        c.anneal.tune_iterations = a.get("tune_iterations", c.anneal.tune_iterations);
        c.anneal.precondition = a.get("precondition", c.anneal.precondition);
        a.finish();
    }
    {
        auto m = root.child("merged_mcmc");
        detail::read_hmc(m, c.merged.hmc);
        c.merged.precondition = m.get("precondition", c.merged.precondition);
        m.finish();
    }
    root.finish();
    c.validate();
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("'" + path + "': invalid JSON: " + e.what());
    }
    return parse_experiment_config(j, std::filesystem::path(path).parent_path());
}

// ---- stages -----------------------------------------------------------------

/// Seed streams used by the pipeline, so every stage draws from its own
/// generator regardless of the order or thread stages run in.
enum class SeedStream : std::uint64_t {
    Data = 1,
    Split = 2,
    ShardMcmc = 1000,
    ShardTrain = 2000,
    Reference = 3000,
    Merge = 4000,
};

inline std::uint64_t seed_for(std::uint64_t base, SeedStream stream, std::uint64_t index = 0) {
    return stream_seed(base, static_cast<std::uint64_t>(stream) * 1000003ULL + index);
}

/// Start point for gradient-based sampling of a target.
inline Vec initial_point(const TargetDensity& target, const McmcSpec& spec, const ModelParams& mp) {
    Vec init = Vec::Zero(target.dim);
    if (mp.kind == ModelKind::Mog) {
        // spread the locations so the start is not on a permutation-fixed ridge
        for (int i = 0; i < target.dim; ++i) init(i) = 0.1 * (i - 0.5 * (target.dim - 1));
    }
    if (spec.init == "map") init = map_estimate(target, init, spec.map_steps);
    return init;
}

/// Draws from one (sub)posterior with gradients recorded.
inline HmcResult sample_posterior(const ModelParams& mp, const Dataset& data, int n_shards, const McmcSpec& spec,
                                  std::uint64_t seed) {
    const TargetDensity target = subposterior_target(mp, data, n_shards);
    HmcConfig cfg = spec.hmc;
    cfg.rng_seed = seed;
    return hmc_sample(target, cfg, initial_point(target, spec, mp));
}

/// Draws from the trained merged density at t = 0 with plain HMC started at
/// the Gaussian-product mean.
inline HmcResult sample_merged_t0(const MergedDensity& md, const MergedSpec& spec, std::uint64_t seed) {
    HmcConfig cfg = spec.hmc;
    cfg.rng_seed = seed;
    if (spec.precondition) cfg.mass_matrix = md.prior().precision;
    return hmc_sample(md.at_time(0.0), cfg, md.prior().mean);
}

/// Samples produced by one merge method.
inline Mat run_merge(const std::string& method, const std::vector<ShardDraws>& draws, const MergedDensity* md,
                     const ExperimentConfig& cfg, std::uint64_t seed) {
    std::vector<Mat> samples;
    for (const auto& d : draws) samples.push_back(d.samples);
    if (method == "consensus") return consensus_merge(samples);
    if (method == "swiss") return pool(swiss_merge(samples, shard_gaussians(samples)));
    if (method == "gaussian") {
        Rng rng(seed);
        return gaussian_merge(shard_gaussians(samples)).sample(samples.front().rows(), rng);
    }
    if (!md) throw ConfigError("merge method '" + method + "' needs trained shard models");
    if (method == "diffusion") return sample_merged_t0(*md, cfg.merged, seed).draws.samples;
    if (method == "diffusion-annealed") {
        AnnealConfig a = cfg.anneal;
        a.rng_seed = seed;
        return annealed_sample(*md, a).samples;
    }
    throw ConfigError("unknown merge method '" + method + "'");
}

/// Marginal KDE curves of approx and reference on the IAD integration range,
/// one block of rows per dimension.
inline void write_marginals_csv(const std::string& path, const Mat& approx, const Mat& ref, int points,
                                const IadOptions& opt = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << "dim,x,approx,reference\n";
    for (Eigen::Index i = 0; i < approx.cols(); ++i) {
        const Vec a = approx.col(i), f = ref.col(i);
        const double lo = std::min(a.mean() - opt.n_sigma * detail::sd_of(a), f.mean() - opt.n_sigma * detail::sd_of(f));
        const double hi = std::max(a.mean() + opt.n_sigma * detail::sd_of(a), f.mean() + opt.n_sigma * detail::sd_of(f));
        const Vec pa = detail::kde_on_grid(a, lo, hi, points);
        const Vec pf = detail::kde_on_grid(f, lo, hi, points);
        for (int g = 0; g < points; ++g)
            out << i << ',' << format_double(lo + (hi - lo) * g / (points - 1)) << ',' << format_double(pa(g)) << ','
                << format_double(pf(g)) << '\n';
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

/// Records stage completion in <dir>/MANIFEST, one "stage status" line each.
class Manifest {
public:
    explicit Manifest(std::filesystem::path dir) : path_(std::move(dir) / "MANIFEST") { flush(); }

    void mark(const std::string& stage, const std::string& status) {
        entries_.emplace_back(stage, status);
        flush();
    }

private:
    void flush() const {
        std::ofstream out(path_, std::ios::binary);
        for (const auto& [stage, status] : entries_) out << stage << ' ' << status << '\n';
        if (!out) throw DataError("cannot write '" + path_.string() + "'");
    }

    std::filesystem::path path_;
    std::vector<std::pair<std::string, std::string>> entries_;
};

struct RunResult {
    Dataset data;
    ShardedDataset sharded;
    std::vector<HmcResult> shard_runs;
    HmcResult reference;
    std::vector<TrainedShard> trained;
    std::map<std::string, Mat> merged;
    std::map<std::string, DiscrepancyReport> reports;
};

namespace detail {

// Runs a stage; errors are re-raised with the stage name prefixed and the
// manifest records the failure.
template <typename F>
auto stage(Manifest& manifest, const std::string& name, F&& f) {
    try {
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            manifest.mark(name, "done");
        } else {
            auto r = f();
            manifest.mark(name, "done");
            return r;
        }
    } catch (const Error& e) {
        manifest.mark(name, std::string("failed: ") + e.what());
        throw_error(e.kind(), "stage '" + name + "': " + e.what());
    } catch (const std::exception& e) {
        manifest.mark(name, std::string("failed: ") + e.what());
        throw_error(ErrorKind::Numerical, "stage '" + name + "': " + e.what());
    }
}

inline bool needs_models(const std::vector<std::string>& methods) {
    return std::any_of(methods.begin(), methods.end(), [](const std::string& m) { return m.rfind("diffusion", 0) == 0; });
}

}  // namespace detail

/// One complete run: data, shards, subposterior sampling, training, every
/// requested merge and its discrepancy against a full-posterior reference.
/// Artifacts are written under dir.
inline RunResult run_pipeline(const ExperimentConfig& cfg, std::uint64_t base_seed, const std::filesystem::path& dir,
                              std::ostream* log = &std::cerr) {
    std::filesystem::create_directories(dir);
    Manifest manifest(dir);
    RunResult r;
    auto say = [&](const std::string& msg) {
        if (log) *log << "[" << cfg.name << "] " << msg << std::endl;
    };

    r.data = detail::stage(manifest, "generate", [&] {
        Dataset ds = cfg.data.csv_path ? load_csv(*cfg.data.csv_path, cfg.data.schema)
                                       : generate_toy(cfg.model.kind, cfg.data.toy, cfg.data.n,
                                                      cfg.data.seed ? *cfg.data.seed : seed_for(base_seed, SeedStream::Data));
        write_dataset_csv((dir / "data.csv").string(), ds);
        return ds;
    });
    say("data: " + std::to_string(r.data.size()) + " rows");

    r.sharded = detail::stage(manifest, "shard", [&] {
        ShardedDataset sd = shard_split(r.data, cfg.n_shards, seed_for(base_seed, SeedStream::Split));
        std::ofstream out(dir / "shards.csv", std::ios::binary);
        out << "row,shard\n";
        for (Eigen::Index i = 0; i < sd.assignment.size(); ++i) out << i << ',' << sd.assignment(i) << '\n';
        return sd;
    });

    detail::stage(manifest, "sample", [&] {
        r.shard_runs.resize(static_cast<std::size_t>(cfg.n_shards));
        parallel_for(cfg.n_shards + 1, [&](int s) {
            if (s == cfg.n_shards) {
                r.reference = sample_posterior(cfg.model, r.data, 1, cfg.reference, seed_for(base_seed, SeedStream::Reference));
            } else {
                r.shard_runs[static_cast<std::size_t>(s)] =
                    sample_posterior(cfg.model, r.sharded.shards[static_cast<std::size_t>(s)], cfg.n_shards, cfg.mcmc,
                                     seed_for(base_seed, SeedStream::ShardMcmc, static_cast<std::uint64_t>(s)));
            }
        });
        if (cfg.save_draws) {
            for (int s = 0; s < cfg.n_shards; ++s)
                write_samples_csv((dir / ("shard_" + std::to_string(s) + "_draws.csv")).string(),
                                  r.shard_runs[static_cast<std::size_t>(s)].draws);
            write_samples_csv((dir / "reference_draws.csv").string(), r.reference.draws);
        }
    });
    say("subposterior and reference sampling done");

    std::vector<ShardDraws> draws;
    for (const auto& run : r.shard_runs) draws.push_back(run.draws);

    std::optional<MergedDensity> md;
    if (detail::needs_models(cfg.methods)) {
        detail::stage(manifest, "train", [&] {
            r.trained.resize(static_cast<std::size_t>(cfg.n_shards));
            parallel_for(cfg.n_shards, [&](int s) {
                TrainConfig tc = cfg.train;
                tc.rng_seed = seed_for(base_seed, SeedStream::ShardTrain, static_cast<std::uint64_t>(s));
                tc.label = "shard " + std::to_string(s);
                r.trained[static_cast<std::size_t>(s)] = train_shard(draws[static_cast<std::size_t>(s)], tc, cfg.sched, log);
            });
            if (cfg.save_models)
                for (int s = 0; s < cfg.n_shards; ++s)
                    save_model((dir / ("shard_" + std::to_string(s) + ".dncem")).string(),
                               r.trained[static_cast<std::size_t>(s)].model, r.trained[static_cast<std::size_t>(s)].map);
        });
        md = MergedDensity::from_trained(r.trained);
        say("training done");
    }

    for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
        const std::string& method = cfg.methods[k];
        const std::uint64_t seed = seed_for(base_seed, SeedStream::Merge, k);
        r.merged[method] = detail::stage(manifest, "merge:" + method, [&] {
            Mat out = run_merge(method, draws, md ? &*md : nullptr, cfg, seed);
            write_samples_csv((dir / ("merged_" + method + ".csv")).string(), out);
            return out;
        });
        say("merge " + method + " done");
    }

    detail::stage(manifest, "evaluate", [&] {
        for (const auto& [method, samples] : r.merged) {
            r.reports[method] = evaluate(samples, r.reference.draws.samples);
            write_marginals_csv((dir / ("marginals_" + method + ".csv")).string(), samples, r.reference.draws.samples,
                                cfg.marginal_points);
        }
    });
    return r;
}

inline json run_diagnostics(const RunResult& r) {
    json j;
    json shards = json::array();
    for (std::size_t s = 0; s < r.shard_runs.size(); ++s) {
        json e;
        e["accept_rate"] = r.shard_runs[s].accept_rate;
        e["step_size"] = r.shard_runs[s].step_size;
        e["divergences"] = r.shard_runs[s].divergences;
        if (s < r.trained.size()) e["final_epoch_loss"] = r.trained[s].final_epoch_loss;
        shards.push_back(e);
    }
    j["shards"] = shards;
    j["reference"] = {{"accept_rate", r.reference.accept_rate},
                      {"step_size", r.reference.step_size},
                      {"divergences", r.reference.divergences}};
    return j;
}

/// Runs every repeat and writes <output_dir>/report.json. Repeat k writes
/// its artifacts to <output_dir>/run_k. Returns the report.
inline json run_experiment(const ExperimentConfig& cfg, std::ostream* log = &std::cerr) {
    const std::filesystem::path root(cfg.output_dir);
    std::filesystem::create_directories(root);
    json report;
    report["experiment"] = cfg.name;
    report["model"] = to_string(cfg.model.kind);
    report["n_shards"] = cfg.n_shards;
    report["seed"] = cfg.seed;
    report["methods"] = cfg.methods;
    json runs = json::array();
    std::map<std::string, std::vector<DiscrepancyReport>> all;
    for (int k = 0; k < cfg.repeats; ++k) {
        const std::uint64_t base = cfg.repeats == 1 ? cfg.seed : stream_seed(cfg.seed, static_cast<std::uint64_t>(k));
        const RunResult r = run_pipeline(cfg, base, root / ("run_" + std::to_string(k)), log);
        json run;
        run["repeat"] = k;
        run["dim"] = r.reference.draws.dim();
        for (const auto& [method, rep] : r.reports) {
            run["metrics"][method] = rep.to_json();
            all[method].push_back(rep);
        }
        run["diagnostics"] = run_diagnostics(r);
        runs.push_back(run);
    }
    report["runs"] = runs;
    for (const auto& [method, reps] : all) {
        auto summarise = [&](auto field) {
            double m = 0.0, v = 0.0;
            for (const auto& rep : reps) m += field(rep);
            m /= static_cast<double>(reps.size());
            for (const auto& rep : reps) v += (field(rep) - m) * (field(rep) - m);
            const double sd = reps.size() > 1 ? std::sqrt(v / static_cast<double>(reps.size() - 1)) : 0.0;
            return json{{"mean", m}, {"sd", sd}};
        };
        report["summary"][method]["mahalanobis"] = summarise([](const DiscrepancyReport& x) { return x.mahalanobis; });
        report["summary"][method]["iad"] = summarise([](const DiscrepancyReport& x) { return x.iad; });
        report["summary"][method]["skew"] = summarise([](const DiscrepancyReport& x) { return x.skew_dev; });
    }
    std::ofstream out(root / "report.json", std::ios::binary);
    out << report.dump(2) << '\n';
    if (!out) throw DataError("cannot write '" + (root / "report.json").string() + "'");
    return report;
}

}  // namespace dnc
