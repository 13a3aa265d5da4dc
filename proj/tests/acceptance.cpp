// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dnc/experiment.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace dnc;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [failed]");
        pass = pass && ok;
    }
};

std::string num(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        out[fs::relative(e.path(), root).string()] = ss.str();
    }
    return out;
}

json toy_logreg_config(const fs::path& out) {
    json j = json::parse(R"({
        "experiment": "toy_logreg",
        "model": {"kind": "logreg", "coef_prior_var": 5.0},
        "data": {"n": 1000, "true_theta": [-3.0, -3.0], "covariate_mean": 0.5, "covariate_sd": 1.0},
        "n_shards": 15,
        "seed": 2024,
        "mcmc": {"n_samples": 10000, "burn_in": 100},
        "train": {"epochs": 500, "batch_size": 32, "hidden_dim": 32, "n_residual_blocks": 1},
        "methods": ["diffusion", "consensus", "swiss", "gaussian"]
    })");
    j["output_dir"] = out.string();
    return j;
}

json mog_config(const fs::path& out) {
    json j = json::parse(R"({
        "experiment": "mixture",
        "model": {"kind": "mog", "component_var": 0.2, "mean_prior_var": 1.0},
        "data": {"n": 2000, "true_theta": [0.4, 0.0, -0.4]},
        "n_shards": 4,
        "seed": 2024,
        "mcmc": {"n_samples": 10000, "burn_in": 100},
        "train": {"epochs": 500},
        "anneal": {"n_particles": 10000, "n_outer": 300, "n_inner": 1, "leapfrog_steps": 3},
        "methods": ["diffusion-annealed", "consensus", "swiss", "gaussian"]
    })");
    j["output_dir"] = out.string();
    return j;
}

// ---- 1 and 10 ------------------------------------------------------------------

Outcome toy_logreg(const fs::path& out, json& report) {
    Outcome o;
    report = run_experiment(parse_experiment_config(toy_logreg_config(out / "toy_logreg_a")), &std::cerr);
    const auto& m = report["runs"][0]["metrics"];
    const double mah = m["diffusion"]["mahalanobis"], iad = m["diffusion"]["iad"];
    const double cons = m["consensus"]["iad"], gauss = m["gaussian"]["iad"];
    o.check(mah <= 0.5, "diffusion Mahalanobis " + num(mah) + " <= 0.5");
    o.check(iad <= 0.10, "diffusion IAD " + num(iad) + " <= 0.10");
    o.check(iad < cons, "beats consensus IAD " + num(cons));
    o.check(iad < gauss, "beats Gaussian IAD " + num(gauss));
    return o;
}

Outcome determinism(const fs::path& out) {
    Outcome o;
    run_experiment(parse_experiment_config(toy_logreg_config(out / "toy_logreg_b")), &std::cerr);
    const auto a = tree(out / "toy_logreg_a"), b = tree(out / "toy_logreg_b");
    int differing = 0;
    for (const auto& [name, contents] : a)
        if (!b.count(name) || b.at(name) != contents) ++differing;
    o.check(a.size() == b.size() && differing == 0,
            std::to_string(a.size()) + " files compared, " + std::to_string(differing) + " differ");
    return o;
}

// ---- 2 ---------------------------------------------------------------------------

Outcome mixture(const fs::path& out) {
    Outcome o;
    const auto cfg = parse_experiment_config(mog_config(out / "mixture"));
    const RunResult r = run_pipeline(cfg, cfg.seed, out / "mixture" / "run_0", &std::cerr);
    const Mat& s = r.merged.at("diffusion-annealed");
    // mode label = ordering pattern of the three locations
    std::map<std::vector<int>, int> counts;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        std::vector<int> idx{0, 1, 2};
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return s(i, a) < s(i, b); });
        ++counts[idx];
    }
    double min_frac = counts.size() == 6 ? 1.0 : 0.0;
    for (const auto& [k, c] : counts) min_frac = std::min(min_frac, static_cast<double>(c) / s.rows());
    o.check(counts.size() == 6 && min_frac >= 0.05,
            std::to_string(counts.size()) + " modes, smallest occupancy " + num(min_frac, 3));
    const double iad = r.reports.at("diffusion-annealed").iad;
    const double cons = r.reports.at("consensus").iad, gauss = r.reports.at("gaussian").iad;
    o.check(iad <= 0.15, "diffusion IAD " + num(iad) + " <= 0.15");
    o.check(iad < cons, "beats consensus IAD " + num(cons));
    o.check(iad < gauss, "beats Gaussian IAD " + num(gauss));
    return o;
}

// ---- 3 ---------------------------------------------------------------------------

Outcome gaussian_closure() {
    Outcome o;
    Rng rng(31);
    const int S = 3, d = 2;
    std::vector<GaussianApprox> truth;
    for (int s = 0; s < S; ++s)
        truth.push_back(GaussianApprox::from_moments(standard_normal(d, rng), testing::random_spd(d, rng, 0.5, 2.0)));
    std::vector<TrainedShard> trained(S);
    parallel_for(S, [&](int s) {
        const GaussianApprox g = truth[static_cast<std::size_t>(s)];
        TargetDensity t;
        t.dim = d;
        t.log_density_grad = [g](const Vec& x, Vec* grad) {
            if (grad) *grad = -g.precision * (x - g.mean);
            return g.log_density_unnormalized(x);
        };
        HmcConfig hc;
        hc.rng_seed = stream_seed(32, static_cast<std::uint64_t>(s));
        const HmcResult draws = hmc_sample(t, hc, g.mean);
        TrainConfig tc;
        tc.rng_seed = stream_seed(33, static_cast<std::uint64_t>(s));
        trained[static_cast<std::size_t>(s)] = train_shard(draws.draws, tc, VpSchedule(), nullptr);
    });
    const MergedDensity md = MergedDensity::from_trained(trained);
    const HmcResult merged = sample_merged_t0(md, MergedSpec{}, 34);
    const GaussianApprox exact = gaussian_product(truth);
    const double mean_err = (sample_mean(merged.draws.samples) - exact.mean).cwiseAbs().maxCoeff();
    const double cov_err = (sample_covariance(merged.draws.samples) - exact.cov).norm() / exact.cov.norm();
    o.check(mean_err <= 0.05, "mean error " + num(mean_err) + " <= 0.05");
    o.check(cov_err <= 0.10, "covariance relative error " + num(cov_err) + " <= 0.10");
    return o;
}

// ---- 4 ---------------------------------------------------------------------------

Outcome score_sum_oracle() {
    Outcome o;
    Rng rng(41);
    const VpSchedule sched;
    double worst = 0.0, smallest_gap = 1e300;
    for (int S : {2, 4, 15}) {
        const Mat v = testing::random_spd(3, rng);
        std::vector<GaussianApprox> gs;
        for (int s = 0; s < S; ++s) gs.push_back(GaussianApprox::from_moments(standard_normal(3, rng), v));
        const Mat v_prod = v / S;
        for (int k = 1; k < 20; ++k) {
            const double t = k / 20.0;
            const auto r = score_sum_mismatch(gs, sched, t);
            const double m = sched.mean_scale(t), s = sched.noise_scale(t);
            const Mat expected = m * m * v_prod + (s * s / S) * Mat::Identity(3, 3);
            worst = std::max(worst, (r.tilde.cov - expected).cwiseAbs().maxCoeff());
            smallest_gap = std::min(smallest_gap, (r.tilde.cov - r.correct.cov).norm());
        }
    }
    o.check(worst <= 1e-10, "max deviation from closed form " + num(worst, 3));
    o.check(smallest_gap > 0.0, "tilde differs from correct at every t (smallest gap " + num(smallest_gap, 3) + ")");
    return o;
}

// ---- 5 ---------------------------------------------------------------------------

Outcome product_oracle() {
    Outcome o;
    Rng rng(51);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<GaussianApprox> gs;
        for (int s = 0; s < 3; ++s)
            gs.push_back(GaussianApprox::from_moments(standard_normal(3, rng), testing::random_spd(3, rng)));
        const auto p = gaussian_product(gs);
        auto [mean, cov] = testing::brute_force_product(gs);
        worst = std::max({worst, (p.mean - mean).cwiseAbs().maxCoeff(), (p.cov - cov).cwiseAbs().maxCoeff()});
    }
    o.check(worst <= 1e-12, "max deviation over 50 triples " + num(worst, 3));
    return o;
}

// ---- 6 ---------------------------------------------------------------------------

double rel(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(b.norm(), 1e-8); }

Outcome gradients() {
    Outcome o;
    Rng rng(61);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    double score_worst = 0.0, param_worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const NetConfig net{3, 16, 1};
        const EnergyModel m(net, VpSchedule(), Vec(0.5 * standard_normal(net.parameter_count(), rng)));
        const Vec x = standard_normal(3, rng);
        const double t = u(rng);
        const Vec fd = -testing::finite_difference([&](const Vec& z) { return m.energy(z, t); }, x);
        score_worst = std::max(score_worst, rel(m.score(x, t), fd));

        const Mat c = standard_normal(3, 1, rng);
        const Vec tv = Vec::Constant(1, t);
        const Vec pfd = testing::finite_difference(
            [&](const Vec& p) { return EnergyModel(net, VpSchedule(), p).score(Mat(x), tv).cwiseProduct(c).sum(); },
            m.parameters(), 1e-6);
        param_worst = std::max(param_worst, rel(m.grad_params(c, Mat(x), tv), pfd));
    }
    o.check(score_worst <= 1e-4, "score vs finite differences " + num(score_worst, 3));
    o.check(param_worst <= 1e-4, "parameter gradient vs finite differences " + num(param_worst, 3));
    for (auto kind : {ModelKind::LogReg, ModelKind::Mog, ModelKind::RobustReg, ModelKind::HighDimLogReg}) {
        ToyParams tp;
        tp.n_covariates = 9;
        const Dataset data = generate_toy(kind, tp, 300, 62);
        const TargetDensity t = subposterior_target(ModelParams::defaults(kind), data, 4);
        double worst = 0.0;
        for (int trial = 0; trial < 25; ++trial) {
            const Vec th = 0.5 * standard_normal(t.dim, rng);
            const Vec fd = testing::finite_difference([&](const Vec& z) { return t.log_density(z); }, th, 1e-6);
            worst = std::max(worst, rel(t.grad_log_density(th), fd));
        }
        o.check(worst <= 1e-4, to_string(kind) + " gradient " + num(worst, 3));
    }
    return o;
}

// ---- 7 ---------------------------------------------------------------------------

Outcome schedule_identities() {
    Outcome o;
    const VpSchedule s;
    Rng rng(71);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double t = u(rng);
        worst = std::max(worst, std::abs(s.mean_scale(t) * s.mean_scale(t) + s.noise_scale(t) * s.noise_scale(t) - 1.0));
    }
    o.check(worst <= 1e-12, "max |m^2 + s^2 - 1| " + num(worst, 3));
    o.check(s.kappa(0.0, 1.0) == 0.0 && s.kappa(1e-12, 1.0) < 1e-10, "kappa at t -> 0 is " + num(s.kappa(1e-12, 1.0), 3));
    // m = s where the integrated rate equals log 2
    const double a = 0.5 * (s.beta_max() - s.beta_min()), b = s.beta_min(), c = -std::log(2.0);
    const double t_eq = (-b + std::sqrt(b * b - 4 * a * c)) / (2 * a);
    o.check(std::abs(s.kappa(t_eq, 1.0) - 0.5) <= 1e-12, "kappa where m = s is " + num(s.kappa(t_eq, 1.0), 15));
    return o;
}

// ---- 8 ---------------------------------------------------------------------------

Outcome metrics_suite() {
    Outcome o;
    Rng rng(81);
    const Mat x = standard_normal(10000, 2, rng);
    const auto self = evaluate(x, x);
    o.check(self.mahalanobis == 0.0 && self.skew_dev == 0.0 && self.iad <= 0.02,
            "self comparison Mah " + num(self.mahalanobis) + ", skew " + num(self.skew_dev) + ", IAD " + num(self.iad));
    const Mat a = standard_normal(100000, 1, rng);
    const Mat b = (standard_normal(100000, 1, rng).array() + 1.0).matrix();
    const double got = iad(a, b), oracle = testing::shifted_normal_tv(1.0);
    o.check(std::abs(got - oracle) <= 0.01, "N(0,1) vs N(1,1) IAD " + num(got) + " vs quadrature " + num(oracle));
    return o;
}

// ---- 9 ---------------------------------------------------------------------------

Outcome sampler_suite() {
    Outcome o;
    for (int d : {1, 5}) {
        TargetDensity t;
        t.dim = d;
        t.log_density_grad = [](const Vec& x, Vec* g) {
            if (g) *g = -x;
            return -0.5 * x.squaredNorm();
        };
        HmcConfig cfg;
        cfg.rng_seed = 90 + d;
        const HmcResult r = hmc_sample(t, cfg, Vec::Zero(d));
        const double mean_err = sample_mean(r.draws.samples).cwiseAbs().maxCoeff();
        const Vec var = sample_covariance(r.draws.samples).diagonal();
        o.check(mean_err <= 0.05 && var.minCoeff() >= 0.9 && var.maxCoeff() <= 1.1,
                "d=" + std::to_string(d) + " max |mean| " + num(mean_err, 3) + ", variance in [" + num(var.minCoeff(), 3) +
                    ", " + num(var.maxCoeff(), 3) + "]");
    }
    TargetDensity t;
    t.dim = 4;
    t.log_density_grad = [](const Vec& x, Vec* g) {
        if (g) *g = -x.array().sinh().matrix();
        return -x.array().cosh().sum();
    };
    Rng rng(99);
    const Momentum mom(4);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const Vec x0 = standard_normal(4, rng), p0 = standard_normal(4, rng);
        Vec x = x0, p = p0, g = t.grad_log_density(x0);
        leapfrog(t, mom, x, p, g, 0.05, 40);
        p = -p;
        leapfrog(t, mom, x, p, g, 0.05, 40);
        worst = std::max({worst, (x - x0).cwiseAbs().maxCoeff(), (p + p0).cwiseAbs().maxCoeff()});
    }
    o.check(worst <= 1e-10, "leapfrog round trip error " + num(worst, 3));
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    fs::path out = fs::temp_directory_path() / "dnc_acceptance";
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--out" && i + 1 < argc) {
            out = argv[++i];
        } else if (a == "--only" && i + 1 < argc) {
            only.push_back(std::stoi(argv[++i]));
        } else {
            std::cerr << "usage: acceptance [--out DIR] [--only N]...\n";
            return 2;
        }
    }
    fs::remove_all(out);
    fs::create_directories(out);

    json toy_report;
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, [&] { return toy_logreg(out, toy_report); }},
        {2, [&] { return mixture(out); }},
        {3, gaussian_closure},
        {4, score_sum_oracle},
        {5, product_oracle},
        {6, gradients},
        {7, schedule_identities},
        {8, metrics_suite},
        {9, sampler_suite},
        {10, [&] {
             if (!fs::exists(out / "toy_logreg_a")) toy_logreg(out, toy_report);
             return determinism(out);
         }},
    };
    const char* names[] = {"",
                           "toy logistic regression",
                           "mixture of Gaussians",
                           "Gaussian closure",
                           "score-sum mismatch oracle",
                           "Gaussian product oracle",
                           "gradient suite",
                           "schedule identities",
                           "metrics suite",
                           "sampler suite",
                           "determinism"};
    int failures = 0;
    std::vector<std::string> lines;
    for (const auto& [id, run] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("error: ") + e.what();
        }
        failures += o.pass ? 0 : 1;
        std::ostringstream line;
        line << "criterion " << id << " (" << names[id] << "): " << (o.pass ? "PASS" : "FAIL") << " | " << o.detail;
        lines.push_back(line.str());
        std::cout << line.str() << std::endl;
    }
    std::cout << "\nsummary\n";
    for (const auto& l : lines) std::cout << l << '\n';
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
