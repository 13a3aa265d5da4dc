#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dnc/experiment.hpp"

namespace {

using namespace dnc;

Vec parse_vector(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

Dataset read_dataset(const std::string& path) {
    CsvSchema schema;
    schema.response = "y";
    return load_csv(path, schema);
}

void require_file(const std::string& path) {
    if (!std::filesystem::exists(path)) throw DataError("no such file '" + path + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Divide-and-conquer posterior merging with diffusion energy models"};
    app.require_subcommand(1);
    app.allow_windows_style_options(false);

    // generate
    auto* gen = app.add_subcommand("generate", "Write a synthetic dataset as CSV");
    std::string gen_model = "logreg", gen_out;
    long gen_n = 1000;
    std::uint64_t gen_seed = 0;
    std::vector<double> gen_theta;
    gen->add_option("--model", gen_model, "logreg, mog, robust_reg or highdim_logreg")->capture_default_str();
    gen->add_option("--n", gen_n, "Number of observations")->capture_default_str();
    gen->add_option("--seed", gen_seed)->capture_default_str();
    gen->add_option("--true-theta", gen_theta, "Generating parameter (comma separated)")->delimiter(',');
    gen->add_option("--out", gen_out)->required();

    // shard
    auto* shd = app.add_subcommand("shard", "Split a dataset CSV into shard CSVs");
    std::string shd_data, shd_dir;
    int shd_n = 1;
    std::uint64_t shd_seed = 0;
    shd->add_option("--data", shd_data)->required();
    shd->add_option("--n-shards", shd_n)->required();
    shd->add_option("--seed", shd_seed)->capture_default_str();
    shd->add_option("--out-dir", shd_dir)->required();

    // sample
    auto* smp = app.add_subcommand("sample", "HMC on a (sub)posterior, recording scores");
    std::string smp_data, smp_model = "logreg", smp_out, smp_init = "map";
    int smp_shards = 1;
    HmcConfig smp_hmc;
    double smp_step = 0.0;
    smp->add_option("--data", smp_data, "Shard CSV with response column y")->required();
    smp->add_option("--model", smp_model)->capture_default_str();
    smp->add_option("--n-shards", smp_shards, "Prior is raised to 1/n-shards")->capture_default_str();
    smp->add_option("--n-samples", smp_hmc.n_samples)->capture_default_str();
    smp->add_option("--burn-in", smp_hmc.burn_in)->capture_default_str();
    smp->add_option("--leapfrog-steps", smp_hmc.leapfrog_steps)->capture_default_str();
    smp->add_option("--step-size", smp_step, "Fixed step size; adapted when omitted");
    smp->add_option("--target-accept", smp_hmc.target_accept)->capture_default_str();
    smp->add_option("--init", smp_init, "map or prior_mean")->capture_default_str();
    smp->add_option("--seed", smp_hmc.rng_seed)->capture_default_str();
    smp->add_option("--out", smp_out)->required();

    // train
    auto* trn = app.add_subcommand("train", "Train an energy model on recorded draws");
    std::string trn_draws, trn_out, trn_objective = "combined";
    TrainConfig trn_cfg;
    double beta_min = 0.1, beta_max = 20.0;
    trn->add_option("--draws", trn_draws, "Sample CSV with score columns")->required();
    trn->add_option("--out", trn_out, "Model file")->required();
    trn->add_option("--epochs", trn_cfg.epochs)->capture_default_str();
    trn->add_option("--batch-size", trn_cfg.batch_size)->capture_default_str();
    trn->add_option("--learning-rate", trn_cfg.adam.step_size)->capture_default_str();
    trn->add_option("--hidden-dim", trn_cfg.net.hidden_dim)->capture_default_str();
    trn->add_option("--residual-blocks", trn_cfg.net.n_residual_blocks)->capture_default_str();
    trn->add_option("--objective", trn_objective, "combined, dsm or tsm")->capture_default_str();
    trn->add_option("--beta-min", beta_min)->capture_default_str();
    trn->add_option("--beta-max", beta_max)->capture_default_str();
    trn->add_option("--progress-every", trn_cfg.progress_every)->capture_default_str();
    trn->add_option("--seed", trn_cfg.rng_seed)->capture_default_str();

    // merge
    auto* mrg = app.add_subcommand("merge", "Merge shard draws or shard models");
    std::string mrg_method, mrg_out;
    std::vector<std::string> mrg_models, mrg_draws;
    MergedSpec mrg_spec;
    AnnealConfig mrg_anneal;
    std::uint64_t mrg_seed = 0;
    mrg->add_option("--method", mrg_method, "diffusion, diffusion-annealed, consensus, swiss or gaussian")
        ->required()
        ->check(CLI::IsMember(merge_method_names()));
    mrg->add_option("--models", mrg_models, "Shard model files (diffusion methods)");
    mrg->add_option("--draws", mrg_draws, "Shard sample CSVs (baseline methods)");
    mrg->add_option("--n-samples", mrg_spec.hmc.n_samples, "Draws for diffusion and gaussian")->capture_default_str();
    mrg->add_option("--burn-in", mrg_spec.hmc.burn_in)->capture_default_str();
    mrg->add_option("--leapfrog-steps", mrg_spec.hmc.leapfrog_steps)->capture_default_str();
    mrg->add_flag("!--no-precondition", mrg_spec.precondition, "Identity mass matrix for t=0 HMC");
    mrg->add_option("--particles", mrg_anneal.n_particles)->capture_default_str();
    mrg->add_option("--timepoints", mrg_anneal.n_outer)->capture_default_str();
    mrg->add_option("--inner-steps", mrg_anneal.n_inner)->capture_default_str();
    mrg->add_option("--anneal-leapfrog-steps", mrg_anneal.leapfrog_steps)->capture_default_str();
    mrg->add_option("--anneal-step-size", mrg_anneal.step_size, "<= 0 tunes at t=1")->capture_default_str();
    mrg->add_option("--seed", mrg_seed)->capture_default_str();
    mrg->add_option("--out", mrg_out)->required();

    // evaluate
    auto* evl = app.add_subcommand("evaluate", "Discrepancy report (JSON on stdout)");
    std::string evl_approx, evl_ref;
    evl->add_option("--approx", evl_approx)->required();
    evl->add_option("--ref", evl_ref)->required();

    // run-experiment
    auto* run = app.add_subcommand("run-experiment", "Run a full pipeline from a JSON config");
    std::string run_config, run_out;
    run->add_option("--config", run_config)->required();
    run->add_option("--output-dir", run_out, "Overrides output_dir from the config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*gen) {
            ToyParams tp;
            if (!gen_theta.empty()) tp.true_theta = parse_vector(gen_theta);
            write_dataset_csv(gen_out, generate_toy(parse_model_kind(gen_model), tp, gen_n, gen_seed));
        } else if (*shd) {
            const ShardedDataset sd = shard_split(read_dataset(shd_data), shd_n, shd_seed);
            std::filesystem::create_directories(shd_dir);
            for (int s = 0; s < sd.n_shards(); ++s)
                write_dataset_csv((std::filesystem::path(shd_dir) / ("shard_" + std::to_string(s) + ".csv")).string(),
                                  sd.shards[static_cast<std::size_t>(s)]);
        } else if (*smp) {
            McmcSpec spec;
            spec.hmc = smp_hmc;
            if (smp_step > 0.0) spec.hmc.step_size = smp_step;
            spec.init = smp_init;
            if (spec.init != "map" && spec.init != "prior_mean") throw ConfigError("--init must be map or prior_mean");
            const HmcResult r = sample_posterior(ModelParams::defaults(parse_model_kind(smp_model)), read_dataset(smp_data),
                                                 smp_shards, spec, smp_hmc.rng_seed);
            write_samples_csv(smp_out, r.draws);
            std::cerr << "accept rate " << r.accept_rate << ", step size " << r.step_size << ", divergences "
                      << r.divergences << '\n';
        } else if (*trn) {
            const SampleFile f = read_samples_csv(trn_draws);
            if (!f.scores) throw DataError("'" + trn_draws + "': training needs score_* columns");
            trn_cfg.objective = detail::parse_objective(trn_objective);
            const TrainedShard t = train_shard({f.samples, *f.scores}, trn_cfg, VpSchedule(beta_min, beta_max));
            save_model(trn_out, t.model, t.map);
            std::cerr << "final epoch loss " << t.final_epoch_loss << '\n';
        } else if (*mrg) {
            ExperimentConfig cfg;
            cfg.merged = mrg_spec;
            cfg.anneal = mrg_anneal;
            std::vector<ShardDraws> draws;
            for (const auto& p : mrg_draws) {
                SampleFile f = read_samples_csv(p);
                draws.push_back({f.samples, f.scores ? *f.scores : Mat::Zero(f.samples.rows(), f.samples.cols())});
            }
            std::optional<MergedDensity> md;
            const bool diffusion = mrg_method.rfind("diffusion", 0) == 0;
            if (diffusion) {
                if (mrg_models.empty()) throw ConfigError("--method " + mrg_method + " needs --models");
                std::vector<TrainedShard> trained;
                for (const auto& p : mrg_models) trained.push_back(load_model(p));
                md = MergedDensity::from_trained(trained);
            } else if (draws.empty()) {
                throw ConfigError("--method " + mrg_method + " needs --draws");
            }
            if (mrg_method == "gaussian") {
                Rng rng(mrg_seed);
                std::vector<Mat> samples;
                for (const auto& d : draws) samples.push_back(d.samples);
                write_samples_csv(mrg_out, gaussian_merge(shard_gaussians(samples)).sample(mrg_spec.hmc.n_samples, rng));
            } else {
                write_samples_csv(mrg_out, run_merge(mrg_method, draws, md ? &*md : nullptr, cfg, mrg_seed));
            }
        } else if (*evl) {
            require_file(evl_approx);
            require_file(evl_ref);
            const SampleFile a = read_samples_csv(evl_approx);
            const SampleFile r = read_samples_csv(evl_ref);
            if (a.samples.cols() != r.samples.cols())
                throw ShapeError("dimension mismatch: '" + evl_approx + "' has " + std::to_string(a.samples.cols()) +
                                 " columns, '" + evl_ref + "' has " + std::to_string(r.samples.cols()));
            std::cout << evaluate(a.samples, r.samples).to_json().dump(2) << '\n';
        } else if (*run) {
            ExperimentConfig cfg = load_experiment_config(run_config);
            if (!run_out.empty()) cfg.output_dir = run_out;
            const json report = run_experiment(cfg);
            std::cout << report["summary"].dump(2) << '\n';
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
