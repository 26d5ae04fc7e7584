#include "nesc/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace nesc {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Oscillator rotation without the unit-circle precondition; used inside the
// controller right-hand sides where integrator stages may sit slightly off
// the circle.
void rotate_mu(const Vec& kappa, const double* mu, double* dmu) {
    for (std::size_t j = 0; j < kappa.size(); ++j) {
        double w = kTwoPi * kappa[j];
        dmu[2 * j] = -w * mu[2 * j + 1];
        dmu[2 * j + 1] = w * mu[2 * j];
    }
}

struct EstScratch {
    Vec uhat;
    Vec unom;
    Vec F;
};

// Pseudogradient estimate written into est (length m). u and mu point into
// the controller state.
void estimate_into(const GameSpec& g, const EscParams& p, const CostEval& cost,
                   const double* u, const double* mu, EstScratch& s, double* est) {
    const std::size_t m = g.dim();
    s.uhat.assign(u, u + m);
    std::size_t dch = 0;  // dithered channel cursor
    for (std::size_t i = 0; i < g.n_agents(); ++i) {
        if (p.is_oracle(i)) continue;
        std::size_t off = g.offset(i);
        for (std::size_t c = 0; c < g.dims[i]; ++c)
            s.uhat[off + c] += p.amplitude[i] * mu[2 * (dch + c)];
        dch += g.dims[i];
    }
    bool need_exact = false;
    dch = 0;
    for (std::size_t i = 0; i < g.n_agents(); ++i) {
        std::size_t off = g.offset(i);
        if (p.is_oracle(i)) {
            need_exact = true;
            continue;
        }
        double Ji = cost(i, s.uhat);
        double scale = 2.0 / p.amplitude[i];
        for (std::size_t c = 0; c < g.dims[i]; ++c)
            est[off + c] = scale * Ji * mu[2 * (dch + c)];
        dch += g.dims[i];
    }
    if (need_exact) {
        s.F.resize(m);
        s.unom.assign(u, u + m);
        g.pseudograd(s.unom, s.F);
        for (std::size_t i = 0; i < g.n_agents(); ++i) {
            if (!p.is_oracle(i)) continue;
            std::size_t off = g.offset(i);
            for (std::size_t c = 0; c < g.dims[i]; ++c) est[off + c] = s.F[off + c];
        }
    }
}

void check_state_dim(const char* who, const Vec& x, std::size_t expect) {
    if (x.size() != expect)
        throw std::invalid_argument(std::string(who) + ": state has dimension " +
                                    std::to_string(x.size()) + ", expected " +
                                    std::to_string(expect));
}

}  // namespace

CostEval exact_cost(const GameSpec& g) {
    return [g](std::size_t i, const Vec& u) { return g.evaluate_cost(i, u); };
}

EscParams EscParams::uniform(std::size_t n_agents, double gamma, double epsilon,
                             double amplitude) {
    EscParams p;
    p.gamma.assign(n_agents, gamma);
    p.epsilon.assign(n_agents, epsilon);
    p.amplitude.assign(n_agents, amplitude);
    return p;
}

void EscParams::validate_gains(const GameSpec& g) const {
    const std::size_t n = g.n_agents();
    if (gamma.size() != n || epsilon.size() != n)
        throw std::invalid_argument("EscParams: gamma/epsilon must each have one entry per agent (" +
                                    std::to_string(n) + ")");
    for (std::size_t i = 0; i < n; ++i)
        if (gamma[i] <= 0.0 || epsilon[i] <= 0.0)
            throw std::invalid_argument("EscParams: gamma and epsilon must be positive");
}

void EscParams::validate(const GameSpec& g) const {
    validate_gains(g);
    const std::size_t n = g.n_agents();
    if (amplitude.size() != n)
        throw std::invalid_argument("EscParams: amplitude must have one entry per agent (" +
                                    std::to_string(n) + ")");
    if (!oracle.empty() && oracle.size() != n)
        throw std::invalid_argument("EscParams: oracle flags must be empty or one per agent");
    for (std::size_t i = 0; i < n; ++i) {
        if (amplitude[i] <= 0.0)
            throw std::invalid_argument("EscParams: amplitudes must be positive");
        if (is_oracle(i) && !g.pseudograd)
            throw std::invalid_argument(
                "EscParams: oracle agents need a game with an analytic pseudogradient");
    }
    std::size_t need = dither_channels(g);
    if (kappa.size() != need)
        throw std::invalid_argument("EscParams: expected " + std::to_string(need) +
                                    " dither frequencies, got " + std::to_string(kappa.size()));
    for (std::size_t a = 0; a < kappa.size(); ++a) {
        if (kappa[a] <= 0.0)
            throw std::invalid_argument("EscParams: dither frequencies must be positive");
        for (std::size_t b = a + 1; b < kappa.size(); ++b)
            if (std::abs(kappa[a] - kappa[b]) < 1e-12)
                throw std::invalid_argument(
                    "EscParams: dither frequencies must be pairwise distinct");
    }
}

std::size_t EscParams::dither_channels(const GameSpec& g) const {
    std::size_t k = 0;
    for (std::size_t i = 0; i < g.n_agents(); ++i)
        if (!is_oracle(i)) k += g.dims[i];
    return k;
}

double EscParams::a_bar(const GameSpec& g) const {
    double m = 0.0;
    for (std::size_t i = 0; i < g.n_agents(); ++i)
        if (!is_oracle(i)) m = std::max(m, amplitude[i]);
    return m;
}

double EscParams::gamma_bar() const {
    return *std::max_element(gamma.begin(), gamma.end());
}

double EscParams::epsilon_bar() const {
    return *std::max_element(epsilon.begin(), epsilon.end());
}

Vec draw_kappa(Rng& rng, std::size_t count, double min_gap) {
    Vec k;
    k.reserve(count);
    int attempts = 0;
    while (k.size() < count) {
        if (++attempts > 100000)
            throw std::runtime_error("draw_kappa: cannot satisfy the pairwise gap");
        double c = rng.uniform();
        bool ok = true;
        for (double v : k)
            if (std::abs(v - c) < min_gap) { ok = false; break; }
        if (ok) k.push_back(c);
    }
    return k;
}

Vec dither_signal(const Vec& mu) {
    if (mu.size() % 2 != 0)
        throw std::invalid_argument("dither_signal: oscillator state length must be even");
    Vec d(mu.size() / 2);
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = mu[2 * j];
    return d;
}

void oscillator_rhs(const Vec& kappa, const Vec& mu, Vec& dmu) {
    if (mu.size() != 2 * kappa.size())
        throw std::invalid_argument("oscillator_rhs: need one (cos, sin) pair per frequency");
    for (std::size_t j = 0; j < kappa.size(); ++j) {
        double n2 = mu[2 * j] * mu[2 * j] + mu[2 * j + 1] * mu[2 * j + 1];
        // |norm - 1| <= 1e-3 checked on the squared norm
        if (n2 < 0.998001 || n2 > 1.002001)
            throw std::invalid_argument("oscillator_rhs: pair " + std::to_string(j) +
                                        " is off the unit circle");
    }
    dmu.resize(mu.size());
    rotate_mu(kappa, mu.data(), dmu.data());
}

Vec dither_estimate(const GameSpec& g, const EscParams& p, const CostEval& cost,
                    const Vec& u, const Vec& mu) {
    p.validate(g);
    g.check_action(u);
    if (mu.size() != 2 * p.dither_channels(g))
        throw std::invalid_argument("dither_estimate: oscillator state has wrong length");
    EstScratch s;
    Vec est(g.dim());
    estimate_into(g, p, cost ? cost : exact_cost(g), u.data(), mu.data(), s, est.data());
    return est;
}

void esc_gr_rhs(const GameSpec& g, const EscParams& p, const CostEval& cost,
                const Vec& x, Vec& dx) {
    const std::size_t m = g.dim();
    const std::size_t k = p.dither_channels(g);
    check_state_dim("esc_gr_rhs", x, 3 * m + 2 * k);
    dx.resize(x.size());
    EstScratch s;
    Vec est(m);
    const double* z = x.data();
    const double* u = x.data() + m;
    const double* xi = x.data() + 2 * m;
    const double* mu = x.data() + 3 * m;
    estimate_into(g, p, cost, u, mu, s, est.data());
    for (std::size_t i = 0; i < g.n_agents(); ++i) {
        double ge = p.gamma[i] * p.epsilon[i];
        std::size_t off = g.offset(i);
        for (std::size_t c = 0; c < g.dims[i]; ++c) {
            std::size_t j = off + c;
            dx[j] = ge * (-z[j] + u[j]);
            dx[m + j] = ge * (-u[j] + z[j] - xi[j]);
            dx[2 * m + j] = p.gamma[i] * (-xi[j] + est[j]);
        }
    }
    rotate_mu(p.kappa, mu, dx.data() + 3 * m);
}

void esc_baseline_rhs(const GameSpec& g, const EscParams& p, const CostEval& cost,
                      bool filtered, const Vec& x, Vec& dx) {
    const std::size_t m = g.dim();
    const std::size_t k = p.dither_channels(g);
    const std::size_t nu = filtered ? 2 * m : m;
    check_state_dim("esc_baseline_rhs", x, nu + 2 * k);
    dx.resize(x.size());
    EstScratch s;
    Vec est(m);
    const double* u = x.data();
    const double* mu = x.data() + nu;
    estimate_into(g, p, cost, u, mu, s, est.data());
    for (std::size_t i = 0; i < g.n_agents(); ++i) {
        double ge = p.gamma[i] * p.epsilon[i];
        std::size_t off = g.offset(i);
        for (std::size_t c = 0; c < g.dims[i]; ++c) {
            std::size_t j = off + c;
            if (filtered) {
                dx[j] = -ge * x[m + j];
                dx[m + j] = p.gamma[i] * (-x[m + j] + est[j]);
            } else {
                dx[j] = -ge * est[j];
            }
        }
    }
    rotate_mu(p.kappa, mu, dx.data() + nu);
}

void gr_flow_rhs(const GameSpec& g, const EscParams& p, const Vec& x, Vec& dx) {
    const std::size_t m = g.dim();
    check_state_dim("gr_flow_rhs", x, 2 * m);
    dx.resize(x.size());
    const double* z = x.data();
    Vec u(x.begin() + m, x.end());
    Vec F(m);
    g.pseudogradient(u, F);
    for (std::size_t i = 0; i < g.n_agents(); ++i) {
        double ge = p.gamma_tilde(i) * p.epsilon_tilde(i);
        std::size_t off = g.offset(i);
        for (std::size_t c = 0; c < g.dims[i]; ++c) {
            std::size_t j = off + c;
            dx[j] = ge * (-z[j] + u[j]);
            dx[m + j] = ge * (-u[j] + z[j] - F[j]);
        }
    }
}

void nominal_average_rhs(const GameSpec& g, const EscParams& p, const Vec& x, Vec& dx) {
    const std::size_t m = g.dim();
    check_state_dim("nominal_average_rhs", x, 3 * m);
    dx.resize(x.size());
    const double* z = x.data();
    Vec u(x.begin() + m, x.begin() + 2 * m);
    const double* xi = x.data() + 2 * m;
    Vec F(m);
    g.pseudogradient(u, F);
    double eb = p.epsilon_bar();
    for (std::size_t i = 0; i < g.n_agents(); ++i) {
        double ge = eb * p.gamma_tilde(i) * p.epsilon_tilde(i);
        std::size_t off = g.offset(i);
        for (std::size_t c = 0; c < g.dims[i]; ++c) {
            std::size_t j = off + c;
            dx[j] = ge * (-z[j] + u[j]);
            dx[m + j] = ge * (-u[j] + z[j] - xi[j]);
            dx[2 * m + j] = p.gamma_tilde(i) * (-xi[j] + F[j]);
        }
    }
}

void boundary_layer_rhs(const GameSpec& g, const EscParams& p, const Vec& u_frozen,
                        const Vec& xi, Vec& dxi) {
    const std::size_t m = g.dim();
    g.check_action(u_frozen);
    check_state_dim("boundary_layer_rhs", xi, m);
    dxi.resize(m);
    Vec F(m);
    g.pseudogradient(u_frozen, F);
    for (std::size_t i = 0; i < g.n_agents(); ++i) {
        std::size_t off = g.offset(i);
        for (std::size_t c = 0; c < g.dims[i]; ++c) {
            std::size_t j = off + c;
            dxi[j] = p.gamma_tilde(i) * (-xi[j] + F[j]);
        }
    }
}

Vec BoxSet::project(const Vec& x) const {
    if (lo.size() != x.size() || hi.size() != x.size())
        throw std::invalid_argument("BoxSet: bound dimensions do not match the point");
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (lo[i] > hi[i]) throw std::invalid_argument("BoxSet: lo > hi");
        y[i] = std::min(std::max(x[i], lo[i]), hi[i]);
    }
    return y;
}

Vec HalfspaceSet::project(const Vec& x) const {
    if (normal.size() != x.size())
        throw std::invalid_argument("HalfspaceSet: normal dimension does not match the point");
    double n2 = dot(normal, normal);
    if (n2 <= 0.0) throw std::invalid_argument("HalfspaceSet: zero normal");
    double viol = dot(normal, x) - offset;
    Vec y = x;
    if (viol > 0.0) axpy(-viol / n2, normal, y);
    return y;
}

void projected_gr_rhs(const GameSpec& g, const EscParams& p, const Projection& proj,
                      const Vec& x, Vec& dx) {
    const std::size_t m = g.dim();
    check_state_dim("projected_gr_rhs", x, 2 * m);
    if (!proj) throw std::invalid_argument("projected_gr_rhs: no projection supplied");
    dx.resize(x.size());
    const double* z = x.data();
    Vec u(x.begin() + m, x.end());
    Vec F(m);
    g.pseudogradient(u, F);
    Vec target(m);
    for (std::size_t j = 0; j < m; ++j) target[j] = z[j] - F[j];
    Vec pt = proj(target);
    if (pt.size() != m)
        throw std::invalid_argument("projected_gr_rhs: projection changed the dimension");
    for (std::size_t i = 0; i < g.n_agents(); ++i) {
        double ge = p.gamma_tilde(i) * p.epsilon_tilde(i);
        std::size_t off = g.offset(i);
        for (std::size_t c = 0; c < g.dims[i]; ++c) {
            std::size_t j = off + c;
            dx[j] = ge * (-z[j] + u[j]);
            dx[m + j] = ge * (-u[j] + pt[j]);
        }
    }
}

Controller controller_from_name(const std::string& name) {
    if (name == "nesc") return Controller::nesc;
    if (name == "baseline-unfiltered") return Controller::baseline_unfiltered;
    if (name == "baseline-filtered") return Controller::baseline_filtered;
    if (name == "gr-flow") return Controller::gr_flow;
    if (name == "nominal-average") return Controller::nominal_average;
    if (name == "projected-gr") return Controller::projected_gr;
    throw std::invalid_argument(
        "unknown controller '" + name +
        "' (available: nesc, baseline-unfiltered, baseline-filtered, gr-flow, "
        "nominal-average, projected-gr)");
}

std::string controller_name(Controller c) {
    switch (c) {
        case Controller::nesc: return "nesc";
        case Controller::baseline_unfiltered: return "baseline-unfiltered";
        case Controller::baseline_filtered: return "baseline-filtered";
        case Controller::gr_flow: return "gr-flow";
        case Controller::nominal_average: return "nominal-average";
        case Controller::projected_gr: return "projected-gr";
    }
    throw std::invalid_argument("controller_name: bad enum value");
}

namespace {

std::vector<std::string> block_names(const char* base, std::size_t m) {
    std::vector<std::string> v;
    for (std::size_t j = 1; j <= m; ++j) v.push_back(std::string(base) + std::to_string(j));
    return v;
}

// Fast paths for the integrator: same math as the public rhs functions but
// with scratch buffers owned by the closure, so a long run never allocates.
struct EscRhs {
    GameSpec g;
    EscParams p;
    CostEval cost;
    Controller kind;
    std::size_t m, k;
    std::shared_ptr<EstScratch> scratch = std::make_shared<EstScratch>();
    std::shared_ptr<Vec> est = std::make_shared<Vec>();

    void operator()(double, const Vec& x, Vec& dx) {
        est->resize(m);
        const double* u;
        const double* mu;
        std::size_t nu;
        switch (kind) {
            case Controller::nesc: nu = 3 * m; u = x.data() + m; break;
            case Controller::baseline_filtered: nu = 2 * m; u = x.data(); break;
            default: nu = m; u = x.data(); break;
        }
        mu = x.data() + nu;
        dx.resize(x.size());
        estimate_into(g, p, cost, u, mu, *scratch, est->data());
        const double* e = est->data();
        for (std::size_t i = 0; i < g.n_agents(); ++i) {
            double ge = p.gamma[i] * p.epsilon[i];
            std::size_t off = g.offset(i);
            for (std::size_t c = 0; c < g.dims[i]; ++c) {
                std::size_t j = off + c;
                if (kind == Controller::nesc) {
                    dx[j] = ge * (-x[j] + x[m + j]);
                    dx[m + j] = ge * (-x[m + j] + x[j] - x[2 * m + j]);
                    dx[2 * m + j] = p.gamma[i] * (-x[2 * m + j] + e[j]);
                } else if (kind == Controller::baseline_filtered) {
                    dx[j] = -ge * x[m + j];
                    dx[m + j] = p.gamma[i] * (-x[m + j] + e[j]);
                } else {
                    dx[j] = -ge * e[j];
                }
            }
        }
        rotate_mu(p.kappa, mu, dx.data() + nu);
    }
};

}  // namespace

System make_system(Controller c, const GameSpec& g, const EscParams& p,
                   CostEval cost, Projection proj) {
    bool needs_dither = c == Controller::nesc || c == Controller::baseline_unfiltered ||
                        c == Controller::baseline_filtered;
    if (needs_dither)
        p.validate(g);
    else
        p.validate_gains(g);
    const std::size_t m = g.dim();
    const std::size_t k = p.dither_channels(g);
    System sys;
    sys.kind = c;
    auto add = [&sys](std::vector<std::string> v) {
        for (auto& s : v) sys.state_names.push_back(std::move(s));
    };
    switch (c) {
        case Controller::nesc:
        case Controller::baseline_unfiltered:
        case Controller::baseline_filtered: {
            if (!cost) cost = [g](std::size_t i, const Vec& u) { return g.costs[i](u); };
            std::size_t nu = c == Controller::nesc ? 3 * m
                           : c == Controller::baseline_filtered ? 2 * m : m;
            sys.state_dim = nu + 2 * k;
            if (c == Controller::nesc) add(block_names("z", m));
            add(block_names("u", m));
            if (c != Controller::baseline_unfiltered) add(block_names("xi", m));
            for (std::size_t j = 1; j <= k; ++j) {
                sys.state_names.push_back("mu" + std::to_string(j) + "c");
                sys.state_names.push_back("mu" + std::to_string(j) + "s");
            }
            sys.mu_offset = nu;
            sys.mu_pairs = k;
            sys.u_offset = c == Controller::nesc ? m : 0;
            sys.rhs = EscRhs{g, p, std::move(cost), c, m, k};
            break;
        }
        case Controller::gr_flow: {
            sys.state_dim = 2 * m;
            add(block_names("z", m));
            add(block_names("u", m));
            sys.u_offset = m;
            sys.rhs = [g, p](double, const Vec& x, Vec& dx) { gr_flow_rhs(g, p, x, dx); };
            break;
        }
        case Controller::nominal_average: {
            sys.state_dim = 3 * m;
            add(block_names("z", m));
            add(block_names("u", m));
            add(block_names("xi", m));
            sys.u_offset = m;
            sys.rhs = [g, p](double, const Vec& x, Vec& dx) { nominal_average_rhs(g, p, x, dx); };
            break;
        }
        case Controller::projected_gr: {
            if (!proj) throw std::invalid_argument("make_system: projected-gr needs a projection");
            sys.state_dim = 2 * m;
            add(block_names("z", m));
            add(block_names("u", m));
            sys.u_offset = m;
            sys.rhs = [g, p, proj](double, const Vec& x, Vec& dx) {
                projected_gr_rhs(g, p, proj, x, dx);
            };
            break;
        }
    }
    return sys;
}

Vec assemble_initial(Controller c, const GameSpec& g, const EscParams& p, const Vec& u0) {
    g.check_action(u0);
    const std::size_t m = g.dim();
    const std::size_t k = p.dither_channels(g);
    Vec x;
    auto push_mu = [&x, k]() {
        for (std::size_t j = 0; j < k; ++j) {
            x.push_back(1.0);
            x.push_back(0.0);
        }
    };
    switch (c) {
        case Controller::nesc:
            x = u0;                                    // z
            x.insert(x.end(), u0.begin(), u0.end());   // u
            x.insert(x.end(), m, 0.0);                 // xi
            push_mu();
            break;
        case Controller::baseline_filtered:
            x = u0;
            x.insert(x.end(), m, 0.0);
            push_mu();
            break;
        case Controller::baseline_unfiltered:
            x = u0;
            push_mu();
            break;
        case Controller::gr_flow:
        case Controller::projected_gr:
            x = u0;
            x.insert(x.end(), u0.begin(), u0.end());
            break;
        case Controller::nominal_average:
            x = u0;
            x.insert(x.end(), u0.begin(), u0.end());
            x.insert(x.end(), m, 0.0);
            break;
    }
    return x;
}

}  // namespace nesc
