#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "nesc/controllers.hpp"
#include "nesc/game.hpp"
#include "nesc/sim.hpp"
#include "nesc/types.hpp"

namespace nesc {

// Lyapunov function for the golden-ratio flow, V = 1/2 ||z - u*||^2_W +
// 1/2 ||u - u*||^2_W with blockwise weights W = diag(1/(gamma~_i eps~_i)).
// x is the [z u] state.
double lyapunov_value(const GameSpec& g, const EscParams& p, const Vec& x, const Vec& u_star);

// Closed-form derivative of V along the unconstrained golden-ratio flow:
// -||u - z||^2 - <u - u*, F(u) - F(u*)>  (the weights cancel against the
// gains, so the expression is gain-free).
double lyapunov_rate(const GameSpec& g, const EscParams& p, const Vec& x, const Vec& u_star);

// Directional derivative <grad V, dx> for an arbitrary [z u] vector field
// evaluation dx — used to measure V along projected dynamics, where no
// closed form holds.
double lyapunov_flow_rate(const GameSpec& g, const EscParams& p, const Vec& x,
                          const Vec& u_star, const Vec& dx);

// Central finite differences of each agent's cost in its own block.
Vec finite_diff_pseudogradient(const GameSpec& g, const Vec& u, double h = 1e-5);

// Minimum of <F(u) - F(v), u - v> over `pairs` random pairs drawn uniformly
// from the box [lo, hi]^m. Non-negative (up to round-off) for monotone games.
double monotonicity_probe(const GameSpec& g, std::size_t pairs, double lo, double hi, Rng& rng);

// Per-channel |average of the dither estimate - F(u)|, averaging the
// closed-form oscillator flow mu(t) = (cos 2 pi kappa t, sin 2 pi kappa t)
// over one common period (trapezoid rule with `quadrature_steps` intervals).
// Frequencies are rationalized by continued fractions; non-commensurate
// frequencies fall back to a window of 10^3 periods of the slowest one.
Vec dither_average_error(const GameSpec& g, const EscParams& p, const Vec& u,
                         std::size_t quadrature_steps = 4096);

// Cost oracle with independent N(0, sigma^2) measurement noise per
// evaluation. sigma = 0 returns the exact oracle (bit-identical results, no
// RNG consumption).
CostEval noisy_cost_channel(const GameSpec& g, double sigma, std::uint64_t seed);

struct Histogram {
    double bin_width = 0.0;
    double anchor = 0.0;                // left edge of the first bin
    std::vector<double> bin_lo;         // left edge per bin
    std::vector<std::size_t> counts;
    std::size_t total = 0;
};

// Histogram with bins [anchor + k w, anchor + (k+1) w), anchored at
// floor(min/w) * w so bin edges are stable across samples.
Histogram price_histogram(const Vec& samples, double bin_width);

// Channel values at times T - tail_seconds, T - tail_seconds + sample_period,
// ..., T (inclusive ends); the requested times must sit on the recorded grid.
Vec tail_samples(const Trajectory& traj, std::size_t channel_idx, double tail_seconds,
                 double sample_period);

double mean(const Vec& v);
double stddev(const Vec& v);  // sample standard deviation (n - 1)

}  // namespace nesc
