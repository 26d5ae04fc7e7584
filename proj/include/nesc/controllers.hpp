#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "nesc/game.hpp"
#include "nesc/types.hpp"

namespace nesc {

// Pluggable cost oracle: (agent index, joint action) -> measured cost.
// The default wraps GameSpec::evaluate_cost; the noise study substitutes a
// noisy wrapper.
using CostEval = std::function<double(std::size_t, const Vec&)>;

CostEval exact_cost(const GameSpec& g);

// Tuning for the extremum-seeking controllers. gamma/epsilon/amplitude are
// per-agent; kappa holds one dither frequency per dithered scalar channel
// (agents flagged as oracle agents carry no dither, so they contribute no
// kappa entries). oracle[i] != 0 means agent i applies its analytic partial
// gradient at the nominal action (model-based first-order update) instead of
// the payoff-correlation estimate.
struct EscParams {
    Vec gamma;
    Vec epsilon;
    Vec amplitude;
    Vec kappa;
    std::vector<int> oracle;  // empty = all zeroth-order

    static EscParams uniform(std::size_t n_agents, double gamma, double epsilon,
                             double amplitude);

    // Throws std::invalid_argument on size mismatches, non-positive entries,
    // or kappa entries closer than 1e-12.
    void validate(const GameSpec& g) const;
    // Subset used by the reduced flows, which carry no dither: gamma/epsilon
    // sizes and positivity only.
    void validate_gains(const GameSpec& g) const;

    bool is_oracle(std::size_t i) const { return !oracle.empty() && oracle[i] != 0; }
    std::size_t dither_channels(const GameSpec& g) const;

    double a_bar(const GameSpec& g) const;  // max amplitude over dithered agents
    double gamma_bar() const;               // max_i gamma_i
    double epsilon_bar() const;             // max_i epsilon_i
    double gamma_tilde(std::size_t i) const { return gamma[i] / gamma_bar(); }
    double epsilon_tilde(std::size_t i) const { return epsilon[i] / epsilon_bar(); }
};

// Draw `count` dither frequencies uniformly from [0,1], re-drawing any
// candidate that lands within `min_gap` of an already accepted one.
Vec draw_kappa(Rng& rng, std::size_t count, double min_gap = 0.01);

// First component of each oscillator pair: (mu_1c, mu_1s, mu_2c, ...) -> (mu_1c, mu_2c, ...).
Vec dither_signal(const Vec& mu);

// Rotation mu_j' = 2*pi*kappa_j * (-mu_js, mu_jc) per pair. Checks that each
// pair sits on the unit circle within 1e-3 — this is a state sanity check, so
// controller right-hand sides use the unchecked internal rotation instead
// (explicit integrator stages transiently leave the circle by O(h^2)).
void oscillator_rhs(const Vec& kappa, const Vec& mu, Vec& dmu);

// Pseudogradient estimate at nominal action u with oscillator state mu.
// Zeroth-order agents perturb their channels by amplitude * dither and
// correlate the measured cost with the dither: (2/a_i) J_i(u + A D mu) D mu_i.
// Oracle agents get their block of the analytic pseudogradient at u.
Vec dither_estimate(const GameSpec& g, const EscParams& p, const CostEval& cost,
                    const Vec& u, const Vec& mu);

// Full Nash equilibrium seeking controller (golden-ratio form), state [z u xi mu]:
//   z'  = gamma_i eps_i (-z_i + u_i)
//   u'  = gamma_i eps_i (-u_i + z_i - xi_i)
//   xi' = gamma_i (-xi_i + Ftilde_i)
//   mu' = 2 pi R_kappa mu
void esc_gr_rhs(const GameSpec& g, const EscParams& p, const CostEval& cost,
                const Vec& x, Vec& dx);

// Classic ESC pseudogradient descent. filtered: state [u xi],
//   u' = -gamma_i eps_i xi_i,  xi' = gamma_i (-xi_i + Ftilde_i);
// unfiltered: state [u], u' = -gamma_i eps_i Ftilde_i. Both carry mu last.
void esc_baseline_rhs(const GameSpec& g, const EscParams& p, const CostEval& cost,
                      bool filtered, const Vec& x, Vec& dx);

// Reduced golden-ratio flow, state [z u], normalized gains gamma~ eps~:
//   z' = ge_i (-z_i + u_i),  u' = ge_i (-u_i + z_i - F_i(u))
void gr_flow_rhs(const GameSpec& g, const EscParams& p, const Vec& x, Vec& dx);

// Nominal average system in the slow time scale, state [z u xi]:
//   z' = eps_bar ge_i (-z + u),  u' = eps_bar ge_i (-u + z - xi),
//   xi' = gamma~_i (-xi + F(u))
void nominal_average_rhs(const GameSpec& g, const EscParams& p, const Vec& x, Vec& dx);

// Boundary layer: fast filter with the slow state frozen at u_frozen,
//   xi' = gamma~_i (-xi + F(u_frozen))
void boundary_layer_rhs(const GameSpec& g, const EscParams& p, const Vec& u_frozen,
                        const Vec& xi, Vec& dxi);

// Euclidean projections onto simple convex sets.
using Projection = std::function<Vec(const Vec&)>;

struct BoxSet {
    Vec lo, hi;
    Vec project(const Vec& x) const;
};

struct HalfspaceSet {
    Vec normal;
    double offset = 0.0;  // {x : <normal, x> <= offset}
    Vec project(const Vec& x) const;
};

// Projected golden-ratio flow, state [z u]:
//   z' = ge_i (-z + u),  u' = ge_i (-u + proj(z - F(u)))
void projected_gr_rhs(const GameSpec& g, const EscParams& p, const Projection& proj,
                      const Vec& x, Vec& dx);

enum class Controller {
    nesc,
    baseline_unfiltered,
    baseline_filtered,
    gr_flow,
    nominal_average,
    projected_gr,
};

Controller controller_from_name(const std::string& name);
std::string controller_name(Controller c);

// A controller wired to a game, ready for the integrator.
struct System {
    Controller kind;
    std::size_t state_dim = 0;
    std::vector<std::string> state_names;
    std::function<void(double, const Vec&, Vec&)> rhs;
    std::size_t mu_offset = 0;  // oscillator block start; mu_pairs == 0 -> none
    std::size_t mu_pairs = 0;
    std::size_t u_offset = 0;  // action block start within the state
};

System make_system(Controller c, const GameSpec& g, const EscParams& p,
                   CostEval cost = {}, Projection proj = {});

// Stacked initial state for the controller: z = u0 (when present), u = u0,
// xi = 0, every oscillator pair at (1, 0).
Vec assemble_initial(Controller c, const GameSpec& g, const EscParams& p, const Vec& u0);

}  // namespace nesc
