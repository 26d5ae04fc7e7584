#include "nesc/sim.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace nesc {

void SolverConfig::validate() const {
    if (method != "rk4" && method != "euler")
        throw std::invalid_argument("solver method must be 'rk4' or 'euler', got '" + method + "'");
    if (!(step > 0.0)) throw std::invalid_argument("solver step must be positive");
    if (!(horizon > 0.0)) throw std::invalid_argument("solver horizon must be positive");
    if (record_every == 0) throw std::invalid_argument("record_every must be at least 1");
    double n = horizon / step;
    if (std::abs(n - std::round(n)) > 1e-6 * std::max(1.0, n))
        throw std::invalid_argument("horizon must be an integer multiple of the step");
    if (std::llround(n) < 1) throw std::invalid_argument("horizon shorter than one step");
}

std::size_t SolverConfig::n_steps() const {
    return static_cast<std::size_t>(std::llround(horizon / step));
}

const Vec& Trajectory::final_state() const {
    if (states.empty()) throw std::runtime_error("trajectory is empty");
    return states.back();
}

Vec Trajectory::component(std::size_t idx) const {
    Vec v(states.size());
    for (std::size_t k = 0; k < states.size(); ++k) {
        if (idx >= states[k].size()) throw std::out_of_range("trajectory component out of range");
        v[k] = states[k][idx];
    }
    return v;
}

void renormalize_dither(Vec& x, std::size_t mu_offset, std::size_t mu_pairs) {
    if (mu_offset + 2 * mu_pairs > x.size())
        throw std::invalid_argument("renormalize_dither: oscillator block exceeds the state");
    for (std::size_t j = 0; j < mu_pairs; ++j) {
        double a = x[mu_offset + 2 * j];
        double b = x[mu_offset + 2 * j + 1];
        double n = std::sqrt(a * a + b * b);
        if (!(n >= 0.5 && n <= 2.0))
            throw std::runtime_error(
                "renormalize_dither: oscillator pair " + std::to_string(j) + " has norm " +
                std::to_string(n) + " (integration failure)");
        x[mu_offset + 2 * j] = a / n;
        x[mu_offset + 2 * j + 1] = b / n;
    }
}

namespace {

bool state_ok(const Vec& x, double threshold) {
    for (double v : x) {
        if (!std::isfinite(v) || std::abs(v) > threshold) return false;
    }
    return true;
}

Trajectory integrate_impl(const Rhs& rhs, const Vec& x0, const SolverConfig& cfg,
                          const std::vector<Observer>& observers,
                          std::size_t mu_offset, std::size_t mu_pairs,
                          std::vector<std::string> state_names) {
    cfg.validate();
    if (x0.empty()) throw std::invalid_argument("integrate: empty initial state");
    if (!state_names.empty() && state_names.size() != x0.size())
        throw std::invalid_argument("integrate: state name count does not match the state");

    const std::size_t n = cfg.n_steps();
    const double h = cfg.step;
    const bool rk4 = cfg.method == "rk4";

    Trajectory traj;
    traj.state_names = std::move(state_names);
    traj.times.reserve(n / cfg.record_every + 2);
    for (const auto& ob : observers) traj.channel_names.push_back(ob.name);
    traj.channels.resize(observers.size());

    Vec x = x0;
    Vec k1(x.size()), k2(x.size()), k3(x.size()), k4(x.size()), xt(x.size());

    auto record = [&](double t) {
        traj.times.push_back(t);
        traj.states.push_back(x);
        for (std::size_t c = 0; c < observers.size(); ++c)
            traj.channels[c].push_back(observers[c].fn(t, x));
    };
    record(0.0);

    for (std::size_t k = 1; k <= n; ++k) {
        double t = (static_cast<double>(k) - 1.0) * h;
        if (rk4) {
            rhs(t, x, k1);
            xt = x;
            axpy(0.5 * h, k1, xt);
            rhs(t + 0.5 * h, xt, k2);
            xt = x;
            axpy(0.5 * h, k2, xt);
            rhs(t + 0.5 * h, xt, k3);
            xt = x;
            axpy(h, k3, xt);
            rhs(t + h, xt, k4);
            for (std::size_t j = 0; j < x.size(); ++j)
                x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        } else {
            rhs(t, x, k1);
            axpy(h, k1, x);
        }
        double tk = static_cast<double>(k) * h;
        if (!state_ok(x, cfg.divergence_threshold)) {
            traj.diverged = true;
            traj.divergence_time = tk;
            record(tk);
            return traj;
        }
        if (cfg.renorm && mu_pairs > 0 && k % cfg.renorm_every == 0)
            renormalize_dither(x, mu_offset, mu_pairs);
        if (k % cfg.record_every == 0 || k == n) record(tk);
    }
    return traj;
}

}  // namespace

Trajectory integrate(const Rhs& rhs, const Vec& x0, const SolverConfig& cfg,
                     const std::vector<Observer>& observers) {
    return integrate_impl(rhs, x0, cfg, observers, 0, 0, {});
}

Trajectory integrate(const System& sys, const Vec& x0, const SolverConfig& cfg,
                     const std::vector<Observer>& observers) {
    if (x0.size() != sys.state_dim)
        throw std::invalid_argument("integrate: initial state has dimension " +
                                    std::to_string(x0.size()) + ", expected " +
                                    std::to_string(sys.state_dim));
    return integrate_impl(sys.rhs, x0, cfg, observers, sys.mu_offset, sys.mu_pairs,
                          sys.state_names);
}

void write_csv(const std::string& path, const Trajectory& traj) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    std::fputs("t", f);
    if (!traj.state_names.empty()) {
        for (const auto& s : traj.state_names) std::fprintf(f, ",%s", s.c_str());
    } else if (!traj.states.empty()) {
        for (std::size_t j = 0; j < traj.states[0].size(); ++j)
            std::fprintf(f, ",x%zu", j + 1);
    }
    for (const auto& s : traj.channel_names) std::fprintf(f, ",%s", s.c_str());
    std::fputc('\n', f);
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        std::fprintf(f, "%.17g", traj.times[k]);
        for (double v : traj.states[k]) std::fprintf(f, ",%.17g", v);
        for (const auto& col : traj.channels) std::fprintf(f, ",%.17g", col[k]);
        std::fputc('\n', f);
    }
    if (std::fclose(f) != 0) throw std::runtime_error("error closing '" + path + "'");
}

}  // namespace nesc
