#include <cmath>
#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "nesc/experiments.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvariant = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

nesc::Config load_config(const std::string& path) {
    if (path.empty()) return {};
    return nesc::Config::from_file(path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nash equilibrium seeking in monotone games via extremum-seeking "
                 "golden-ratio dynamics"};
    app.require_subcommand(1);

    std::string config_path, out_dir, inject_name = "none";
    std::uint64_t seed = 0;
    double sigma = 0.0;

    auto add_common = [&](CLI::App* sub, const char* default_out) {
        sub->add_option("--config", config_path, "key = value config file");
        sub->add_option("--out", out_dir, "output directory")->default_val(default_out);
        return sub;
    };

    auto* bil = add_common(app.add_subcommand(
        "bilinear", "three controllers on the bilinear saddle game"), "out/bilinear");
    bil->add_option("--seed", seed, "master RNG seed (overrides sim.seed)");

    auto* fd = add_common(app.add_subcommand(
        "fixed-demand", "price-regulated market game"), "out/fixed-demand");
    fd->add_option("--seed", seed, "master RNG seed (overrides sim.seed)");
    fd->add_option("--sigma", sigma, "cost measurement noise level");

    auto* ns = add_common(app.add_subcommand(
        "noise-study", "Monte Carlo noise sweep over the market game"), "out/noise-study");
    ns->add_option("--seed", seed, "master RNG seed (overrides sim.seed)");

    auto* ce = add_common(app.add_subcommand(
        "counterexample", "projected-flow Lyapunov increase certificate"), "out/counterexample");

    auto* va = add_common(app.add_subcommand(
        "validate", "library invariant suite"), "out/validate");
    va->add_option("--seed", seed, "RNG seed for the probes");
    va->add_option("--inject", inject_name,
                   "fault to inject: none, ftilde-sign-flip, non-monotone-game");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        nesc::Config cfg = load_config(config_path);
        if (bil->parsed()) {
            if (bil->count("--seed")) cfg.set("sim.seed", std::to_string(seed));
            nesc::BilinearResult r = nesc::run_bilinear(cfg, out_dir);
            std::printf("initial residual %.6g (seed %llu)\n", r.initial_residual,
                        static_cast<unsigned long long>(r.seed));
            bool diverged = false;
            for (const auto& run : r.runs) {
                std::printf("%-20s kappa=(%.4f, %.4f)  final=%.4g  tail=[%.4g, %.4g]  mean=%.4g%s\n",
                            run.controller.c_str(), run.kappa[0], run.kappa[1],
                            run.final_residual, run.tail_min, run.tail_max, run.tail_mean,
                            run.diverged ? "  DIVERGED" : "");
                diverged = diverged || run.diverged;
            }
            if (diverged) {
                std::fprintf(stderr, "error: a controller run diverged\n");
                return kExitDivergence;
            }
        } else if (fd->parsed()) {
            if (fd->count("--seed")) cfg.set("sim.seed", std::to_string(seed));
            if (fd->count("--sigma")) cfg.set("noise.sigma", std::to_string(sigma));
            nesc::FixedDemandResult r = nesc::run_fixed_demand(cfg, out_dir);
            std::printf("price* = %.6f\nfinal price = %.6f\ntail max |price err| = %.4g\n"
                        "tail max |mismatch| = %.4g\nfinal residual = %.4g\n",
                        r.price_star, r.final_price, r.tail_price_max_err,
                        r.tail_mismatch_max, r.final_residual);
            if (r.diverged) {
                std::fprintf(stderr, "error: the run diverged\n");
                return kExitDivergence;
            }
        } else if (ns->parsed()) {
            if (ns->count("--seed")) cfg.set("sim.seed", std::to_string(seed));
            nesc::NoiseStudyResult r = nesc::run_noise_study(cfg, out_dir);
            for (const auto& lv : r.levels)
                std::printf("sigma %-8g pooled mean %.6f  std %.6g  (%zu samples)\n",
                            lv.sigma, lv.pooled_mean, lv.pooled_std, lv.samples);
            std::printf("pooled all: mean %.6f  std %.6g  |mean - price*| = %.3g  "
                        "3 std/sqrt(runs) = %.3g\n",
                        r.pooled_all_mean, r.pooled_all_std,
                        std::abs(r.pooled_all_mean - r.price_star),
                        3.0 * r.pooled_all_std / std::sqrt(double(r.runs_per_sigma)));
        } else if (ce->parsed()) {
            nesc::CounterexampleResult r = nesc::run_counterexample(cfg, out_dir);
            std::printf("projected rate %.6f > 0, unconstrained rate %.3g <= 0, "
                        "rate at NE %.3g\n",
                        r.rate_constrained, r.rate_unconstrained, r.rate_at_origin);
        } else if (va->parsed()) {
            if (va->count("--seed")) cfg.set("sim.seed", std::to_string(seed));
            nesc::ValidateResult r =
                nesc::run_validate(cfg, out_dir, nesc::inject_from_name(inject_name));
            for (const auto& c : r.checks)
                std::printf("%s  %s  (%s)\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                            c.detail.c_str());
            if (!r.all_pass) {
                std::fprintf(stderr, "error: invariant checks failed\n");
                return kExitInvariant;
            }
        }
    } catch (const nesc::DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDivergence;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInvariant;
    }
    return kExitOk;
}
