#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "nesc/types.hpp"

namespace nesc {

// A game in normal form with continuous actions. Each agent i controls the
// block u_i of the joint action u and minimizes its own cost J_i(u). The
// pseudogradient stacks each agent's partial gradient in its own block.
struct GameSpec {
    std::string name;
    std::vector<std::size_t> dims;                         // per-agent action dimension
    std::vector<std::function<double(const Vec&)>> costs;  // J_i(u), one per agent
    // Analytic F written into a pre-sized output (in-place form keeps the
    // controller hot loops allocation-free); may be empty when no analytic
    // pseudogradient exists.
    std::function<void(const Vec&, Vec&)> pseudograd;
    Vec known_ne;                                          // empty when unknown

    std::size_t n_agents() const { return dims.size(); }
    std::size_t dim() const;                  // total action dimension
    std::size_t offset(std::size_t i) const;  // start of agent i's block

    // J_i(u) for agent index i (0-based).
    double evaluate_cost(std::size_t i, const Vec& u) const;

    // Analytic pseudogradient F(u); throws when no analytic form is attached.
    Vec pseudogradient(const Vec& u) const;
    void pseudogradient(const Vec& u, Vec& out) const;

    // ||F(u)||_2 — zero exactly at an (unconstrained) Nash equilibrium.
    double ne_residual(const Vec& u) const;

    void check_action(const Vec& u) const;
};

// Two-player bilinear saddle game: J_1 = (u_1 - p)(u_2 - q), J_2 = -J_1.
// Merely monotone (skew pseudogradient), unique NE at (p, q).
GameSpec builtin_bilinear(double u1_star = 2.0, double u2_star = -3.0);

struct FixedDemandParams {
    Vec capacity = {172.0, 47.0, 66.0};  // U_i, kW
    double demand = 350.0;               // U_d, kW
};

// N producers plus a price regulator. Producer i minimizes
// J_i = u_i (u_i - 2 U_i) - lambda u_i; the regulator's cost is
// J_{N+1} = lambda (sum_i u_i - U_d), with lambda the last coordinate.
// Merely monotone; NE: u_i = U_i + lambda*/2, lambda* = 2(U_d - sum U_i)/N.
GameSpec builtin_fixed_demand(const FixedDemandParams& p = {});

// Builtin lookup by name ("bilinear", "fixed-demand").
GameSpec builtin_game(const std::string& name);

}  // namespace nesc
