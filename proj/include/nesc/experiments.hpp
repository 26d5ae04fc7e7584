#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "nesc/analysis.hpp"
#include "nesc/controllers.hpp"
#include "nesc/game.hpp"
#include "nesc/sim.hpp"
#include "nesc/types.hpp"

namespace nesc {

// A requested run left the divergence guard; callers map this to their
// divergence exit path.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Line-oriented "key = value" configuration with dotted section keys
// (e.g. "esc.gamma = 0.1"). '#' starts a comment; values may be scalars,
// strings, or comma-separated lists. Every key must be consumed by the
// experiment that loads the file — leftovers are reported as config errors.
class Config {
public:
    static Config from_file(const std::string& path);
    static Config from_string(const std::string& text);

    void set(const std::string& key, const std::string& value);  // override/insert
    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    Vec get_vec(const std::string& key, const Vec& fallback) const;

    // Keys never read by any getter; non-empty means a config error.
    std::vector<std::string> unused_keys() const;

private:
    std::map<std::string, std::string> kv_;
    mutable std::set<std::string> used_;
};

// ---- bilinear experiment (three controllers, per-controller kappa draws) ----

struct ControllerRun {
    std::string controller;
    Vec kappa;
    double final_residual = 0.0;
    double peak_residual = 0.0;  // max over the whole recorded run
    double tail_min = 0.0;
    double tail_max = 0.0;
    double tail_mean = 0.0;
    bool diverged = false;
};

struct BilinearResult {
    std::uint64_t seed = 0;
    double initial_residual = 0.0;
    std::vector<ControllerRun> runs;
};

BilinearResult run_bilinear(const Config& cfg, const std::string& out_dir);

// ---- fixed-demand market experiment ----

struct FixedDemandResult {
    double sigma = 0.0;
    double price_star = 0.0;        // analytic lambda*
    double final_price = 0.0;
    double tail_price_mean = 0.0;
    double tail_price_max_err = 0.0;   // max |lambda - lambda*| over the tail window
    double tail_mismatch_max = 0.0;    // max |sum u - demand| over the tail window
    double final_residual = 0.0;
    bool diverged = false;
};

FixedDemandResult run_fixed_demand(const Config& cfg, const std::string& out_dir);

// ---- Monte Carlo noise study over the fixed-demand game ----

struct NoiseLevelStats {
    double sigma = 0.0;
    std::size_t runs = 0;
    std::size_t samples = 0;        // pooled tail samples (runs x per-run count)
    double pooled_mean = 0.0;
    double pooled_std = 0.0;
    Histogram histogram;
};

struct NoiseStudyResult {
    double price_star = 0.0;
    std::size_t runs_per_sigma = 0;
    std::vector<NoiseLevelStats> levels;
    double pooled_all_mean = 0.0;   // across every sigma
    double pooled_all_std = 0.0;
};

NoiseStudyResult run_noise_study(const Config& cfg, const std::string& out_dir);

// ---- projected-flow counterexample ----

struct CounterexampleResult {
    Vec normal;
    double offset = 0.0;
    Vec state;                  // u = z at the constructed point
    double rate_constrained = 0.0;
    double rate_unconstrained = 0.0;
    double rate_at_origin = 0.0;
};

// Throws std::runtime_error when the construction fails to certify a
// positive rate — it can never silently pass.
CounterexampleResult run_counterexample(const Config& cfg, const std::string& out_dir);

// ---- invariant suite with fault-injection hooks ----

enum class Inject { none, ftilde_sign_flip, non_monotone_game };
Inject inject_from_name(const std::string& name);

struct ValidateCheck {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct ValidateResult {
    std::vector<ValidateCheck> checks;
    bool all_pass = false;
};

ValidateResult run_validate(const Config& cfg, const std::string& out_dir,
                            Inject inject = Inject::none);

// Derived per-run / per-controller RNG stream seed (splitmix64 mix).
using nesc::derive_seed;

}  // namespace nesc
