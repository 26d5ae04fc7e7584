#include "nesc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace nesc {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void check_gr_state(const GameSpec& g, const Vec& x, const Vec& u_star) {
    if (x.size() != 2 * g.dim())
        throw std::invalid_argument("expected a [z u] state of dimension " +
                                    std::to_string(2 * g.dim()));
    if (u_star.size() != g.dim())
        throw std::invalid_argument("u_star dimension does not match the game");
}

}  // namespace

double lyapunov_value(const GameSpec& g, const EscParams& p, const Vec& x, const Vec& u_star) {
    p.validate_gains(g);
    check_gr_state(g, x, u_star);
    const std::size_t m = g.dim();
    double v = 0.0;
    for (std::size_t i = 0; i < g.n_agents(); ++i) {
        double w = 1.0 / (p.gamma_tilde(i) * p.epsilon_tilde(i));
        std::size_t off = g.offset(i);
        for (std::size_t c = 0; c < g.dims[i]; ++c) {
            std::size_t j = off + c;
            double dz = x[j] - u_star[j];
            double du = x[m + j] - u_star[j];
            v += 0.5 * w * (dz * dz + du * du);
        }
    }
    return v;
}

double lyapunov_rate(const GameSpec& g, const EscParams& p, const Vec& x, const Vec& u_star) {
    p.validate_gains(g);
    check_gr_state(g, x, u_star);
    const std::size_t m = g.dim();
    Vec u(x.begin() + m, x.end());
    Vec Fu = g.pseudogradient(u);
    Vec Fs = g.pseudogradient(u_star);
    double rate = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        double uz = u[j] - x[j];
        rate -= uz * uz;
        rate -= (u[j] - u_star[j]) * (Fu[j] - Fs[j]);
    }
    return rate;
}

double lyapunov_flow_rate(const GameSpec& g, const EscParams& p, const Vec& x,
                          const Vec& u_star, const Vec& dx) {
    p.validate_gains(g);
    check_gr_state(g, x, u_star);
    if (dx.size() != x.size())
        throw std::invalid_argument("lyapunov_flow_rate: dx dimension does not match the state");
    const std::size_t m = g.dim();
    double rate = 0.0;
    for (std::size_t i = 0; i < g.n_agents(); ++i) {
        double w = 1.0 / (p.gamma_tilde(i) * p.epsilon_tilde(i));
        std::size_t off = g.offset(i);
        for (std::size_t c = 0; c < g.dims[i]; ++c) {
            std::size_t j = off + c;
            rate += w * (x[j] - u_star[j]) * dx[j];
            rate += w * (x[m + j] - u_star[j]) * dx[m + j];
        }
    }
    return rate;
}

Vec finite_diff_pseudogradient(const GameSpec& g, const Vec& u, double h) {
    g.check_action(u);
    if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be positive");
    Vec f(g.dim());
    Vec up = u, um = u;
    for (std::size_t i = 0; i < g.n_agents(); ++i) {
        std::size_t off = g.offset(i);
        for (std::size_t c = 0; c < g.dims[i]; ++c) {
            std::size_t j = off + c;
            up[j] = u[j] + h;
            um[j] = u[j] - h;
            f[j] = (g.evaluate_cost(i, up) - g.evaluate_cost(i, um)) / (2.0 * h);
            up[j] = u[j];
            um[j] = u[j];
        }
    }
    return f;
}

double monotonicity_probe(const GameSpec& g, std::size_t pairs, double lo, double hi, Rng& rng) {
    if (pairs == 0) throw std::invalid_argument("monotonicity_probe: need at least one pair");
    if (!(lo < hi)) throw std::invalid_argument("monotonicity_probe: empty box");
    const std::size_t m = g.dim();
    double worst = std::numeric_limits<double>::infinity();
    Vec u(m), v(m);
    for (std::size_t k = 0; k < pairs; ++k) {
        for (std::size_t j = 0; j < m; ++j) u[j] = rng.uniform(lo, hi);
        for (std::size_t j = 0; j < m; ++j) v[j] = rng.uniform(lo, hi);
        Vec fu = g.pseudogradient(u);
        Vec fv = g.pseudogradient(v);
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += (fu[j] - fv[j]) * (u[j] - v[j]);
        worst = std::min(worst, s);
    }
    return worst;
}

namespace {

// Best rational p/q approximating x with q <= qmax and |x - p/q| <= tol;
// returns false when none exists (treated as irrational).
bool rationalize(double x, double tol, std::uint64_t qmax, std::uint64_t& p, std::uint64_t& q) {
    if (!(x > 0.0)) return false;
    double frac = x;
    std::uint64_t p0 = 1, q0 = 0;  // convergents p_{k-1}/q_{k-1}, p_k/q_k
    std::uint64_t p1 = 0, q1 = 1;
    for (int it = 0; it < 64; ++it) {
        double a = std::floor(frac);
        std::uint64_t ai = static_cast<std::uint64_t>(a);
        std::uint64_t p2 = ai * p0 + p1;
        std::uint64_t q2 = ai * q0 + q1;
        if (q2 > qmax) return false;
        if (std::abs(x - static_cast<double>(p2) / static_cast<double>(q2)) <= tol) {
            p = p2;
            q = q2;
            return true;
        }
        p1 = p0; q1 = q0;
        p0 = p2; q0 = q2;
        double rem = frac - a;
        if (rem < 1e-15) return false;
        frac = 1.0 / rem;
    }
    return false;
}

}  // namespace

Vec dither_average_error(const GameSpec& g, const EscParams& p, const Vec& u,
                         std::size_t quadrature_steps) {
    p.validate(g);
    g.check_action(u);
    if (quadrature_steps < 8)
        throw std::invalid_argument("dither_average_error: too few quadrature steps");
    const std::size_t k = p.dither_channels(g);
    if (k == 0) throw std::invalid_argument("dither_average_error: no dithered channels");

    // Common period: rationalize each frequency, then 1/gcd of the rates.
    double period = 0.0;
    bool commensurate = true;
    std::vector<std::uint64_t> nums(k), dens(k);
    for (std::size_t j = 0; j < k; ++j)
        if (!rationalize(p.kappa[j], 1e-9, 1000000, nums[j], dens[j])) commensurate = false;
    if (commensurate) {
        std::uint64_t L = 1;
        for (std::size_t j = 0; j < k; ++j) {
            std::uint64_t d = dens[j] / std::gcd(L, dens[j]);
            if (L > 1000000000ULL / d) { commensurate = false; break; }
            L *= d;
        }
        if (commensurate) {
            std::uint64_t G = 0;
            for (std::size_t j = 0; j < k; ++j) G = std::gcd(G, nums[j] * (L / dens[j]));
            period = static_cast<double>(L) / static_cast<double>(G);
        }
    }
    if (!commensurate) {
        double kmin = *std::min_element(p.kappa.begin(), p.kappa.end());
        period = 1000.0 / kmin;
    }

    const std::size_t m = g.dim();
    CostEval cost = exact_cost(g);
    Vec mu(2 * k);
    Vec acc(m, 0.0);
    // Trapezoid over one period of a periodic integrand: endpoints coincide,
    // so equal weights over quadrature_steps points are exact trapezoid.
    for (std::size_t q = 0; q < quadrature_steps; ++q) {
        double t = period * static_cast<double>(q) / static_cast<double>(quadrature_steps);
        for (std::size_t j = 0; j < k; ++j) {
            double ph = kTwoPi * p.kappa[j] * t;
            mu[2 * j] = std::cos(ph);
            mu[2 * j + 1] = std::sin(ph);
        }
        Vec est = dither_estimate(g, p, cost, u, mu);
        axpy(1.0, est, acc);
    }
    for (double& v : acc) v /= static_cast<double>(quadrature_steps);
    Vec F = g.pseudogradient(u);
    Vec err(m);
    for (std::size_t j = 0; j < m; ++j) err[j] = std::abs(acc[j] - F[j]);
    return err;
}

CostEval noisy_cost_channel(const GameSpec& g, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("noise level sigma must be non-negative");
    if (sigma == 0.0) return exact_cost(g);
    auto rng = std::make_shared<Rng>(seed);
    return [g, sigma, rng](std::size_t i, const Vec& u) {
        return g.evaluate_cost(i, u) + sigma * rng->gaussian();
    };
}

Histogram price_histogram(const Vec& samples, double bin_width) {
    if (samples.empty()) throw std::invalid_argument("price_histogram: no samples");
    if (!(bin_width > 0.0)) throw std::invalid_argument("price_histogram: bin width must be positive");
    for (double v : samples)
        if (!std::isfinite(v)) throw std::invalid_argument("price_histogram: non-finite sample");
    double mn = *std::min_element(samples.begin(), samples.end());
    double mx = *std::max_element(samples.begin(), samples.end());
    Histogram h;
    h.bin_width = bin_width;
    h.anchor = std::floor(mn / bin_width) * bin_width;
    std::size_t nbins = static_cast<std::size_t>(std::floor((mx - h.anchor) / bin_width)) + 1;
    h.bin_lo.resize(nbins);
    for (std::size_t b = 0; b < nbins; ++b)
        h.bin_lo[b] = h.anchor + static_cast<double>(b) * bin_width;
    h.counts.assign(nbins, 0);
    for (double v : samples) {
        auto b = static_cast<std::size_t>(std::floor((v - h.anchor) / bin_width));
        if (b >= nbins) b = nbins - 1;  // guard the exact upper edge
        ++h.counts[b];
    }
    h.total = samples.size();
    return h;
}

Vec tail_samples(const Trajectory& traj, std::size_t channel_idx, double tail_seconds,
                 double sample_period) {
    if (channel_idx >= traj.channels.size())
        throw std::out_of_range("tail_samples: channel index out of range");
    if (!(sample_period > 0.0) || !(tail_seconds >= 0.0))
        throw std::invalid_argument("tail_samples: bad window");
    if (traj.times.size() < 2) throw std::invalid_argument("tail_samples: trajectory too short");
    double T = traj.times.back();
    double t0 = T - tail_seconds;
    if (t0 < traj.times.front() - 1e-9)
        throw std::invalid_argument("tail_samples: window longer than the trajectory");
    std::size_t n = static_cast<std::size_t>(std::llround(tail_seconds / sample_period));
    const Vec& col = traj.channels[channel_idx];
    Vec out;
    out.reserve(n + 1);
    // recorded grid is uniform; map each target time to its index
    double rec_dt = traj.times[1] - traj.times[0];
    for (std::size_t s = 0; s <= n; ++s) {
        double target = t0 + static_cast<double>(s) * sample_period;
        auto idx = static_cast<std::size_t>(std::llround((target - traj.times.front()) / rec_dt));
        if (idx >= traj.times.size() || std::abs(traj.times[idx] - target) > 1e-6)
            throw std::invalid_argument("tail_samples: sample time off the recorded grid");
        out.push_back(col[idx]);
    }
    return out;
}

double mean(const Vec& v) {
    if (v.empty()) throw std::invalid_argument("mean of an empty sample");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(const Vec& v) {
    if (v.size() < 2) throw std::invalid_argument("stddev needs at least two samples");
    double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace nesc
