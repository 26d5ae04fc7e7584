#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nesc/controllers.hpp"
#include "nesc/types.hpp"

namespace nesc {

struct SolverConfig {
    std::string method = "rk4";  // "rk4" or "euler"
    double step = 0.01;
    double horizon = 1.0;
    std::size_t record_every = 1;   // record t=0, every k-th step, and the final step
    std::uint64_t seed = 0;         // echoed to manifests; noise streams derive from it
    bool renorm = true;             // renormalize oscillator pairs during integration
    std::size_t renorm_every = 1000;
    double divergence_threshold = 1e9;

    void validate() const;  // throws std::invalid_argument
    std::size_t n_steps() const;
};

struct Observer {
    std::string name;
    std::function<double(double, const Vec&)> fn;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<Vec> states;                 // one state per recorded time
    std::vector<std::string> state_names;    // empty when the rhs is anonymous
    std::vector<std::string> channel_names;
    std::vector<Vec> channels;               // channels[c][k]: series per observer
    bool diverged = false;
    double divergence_time = -1.0;

    const Vec& final_state() const;
    // Series of state component `idx` over the recorded times.
    Vec component(std::size_t idx) const;
};

using Rhs = std::function<void(double, const Vec&, Vec&)>;

// Fixed-step explicit integration with trajectory recording. Aborts (with
// trajectory.diverged set and the partial trajectory kept) when the state
// inf-norm exceeds the divergence threshold or stops being finite.
Trajectory integrate(const Rhs& rhs, const Vec& x0, const SolverConfig& cfg,
                     const std::vector<Observer>& observers = {});

// Same, for a wired controller system: adds state names and, when the system
// carries oscillator pairs, renormalizes them onto the unit circle every
// cfg.renorm_every steps.
Trajectory integrate(const System& sys, const Vec& x0, const SolverConfig& cfg,
                     const std::vector<Observer>& observers = {});

// Rescale each oscillator pair back onto the unit circle. Pair norms are
// expected to stay within [0.5, 2]; anything outside signals integration
// failure and throws std::runtime_error.
void renormalize_dither(Vec& x, std::size_t mu_offset, std::size_t mu_pairs);

// CSV with header "t,<state names>,<channel names>" and 17 significant
// digits (round-trip exact for doubles).
void write_csv(const std::string& path, const Trajectory& traj);

}  // namespace nesc
