#include "nesc/game.hpp"

#include <numeric>
#include <stdexcept>

namespace nesc {

std::size_t GameSpec::dim() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{0});
}

std::size_t GameSpec::offset(std::size_t i) const {
    if (i >= dims.size())
        throw std::out_of_range("GameSpec::offset: agent index " + std::to_string(i) +
                                " out of range for " + std::to_string(dims.size()) + " agents");
    std::size_t off = 0;
    for (std::size_t k = 0; k < i; ++k) off += dims[k];
    return off;
}

void GameSpec::check_action(const Vec& u) const {
    if (u.size() != dim())
        throw std::invalid_argument("game '" + name + "': action has dimension " +
                                    std::to_string(u.size()) + ", expected " +
                                    std::to_string(dim()));
}

double GameSpec::evaluate_cost(std::size_t i, const Vec& u) const {
    if (i >= costs.size())
        throw std::out_of_range("evaluate_cost: agent index " + std::to_string(i) +
                                " out of range for " + std::to_string(costs.size()) + " agents");
    check_action(u);
    return costs[i](u);
}

Vec GameSpec::pseudogradient(const Vec& u) const {
    Vec f(dim());
    pseudogradient(u, f);
    return f;
}

void GameSpec::pseudogradient(const Vec& u, Vec& out) const {
    if (!pseudograd)
        throw std::runtime_error("game '" + name + "' has no analytic pseudogradient");
    check_action(u);
    out.resize(dim());
    pseudograd(u, out);
}

double GameSpec::ne_residual(const Vec& u) const {
    return norm2(pseudogradient(u));
}

GameSpec builtin_bilinear(double u1_star, double u2_star) {
    GameSpec g;
    g.name = "bilinear";
    g.dims = {1, 1};
    g.costs.push_back([=](const Vec& u) { return (u[0] - u1_star) * (u[1] - u2_star); });
    g.costs.push_back([=](const Vec& u) { return -(u[0] - u1_star) * (u[1] - u2_star); });
    g.pseudograd = [=](const Vec& u, Vec& f) {
        f[0] = u[1] - u2_star;
        f[1] = -(u[0] - u1_star);
    };
    g.known_ne = {u1_star, u2_star};
    return g;
}

GameSpec builtin_fixed_demand(const FixedDemandParams& p) {
    if (p.capacity.empty())
        throw std::invalid_argument("fixed-demand game needs at least one producer");
    const std::size_t n = p.capacity.size();
    GameSpec g;
    g.name = "fixed-demand";
    g.dims.assign(n + 1, 1);
    for (std::size_t i = 0; i < n; ++i) {
        double Ui = p.capacity[i];
        g.costs.push_back([i, Ui, n](const Vec& u) {
            double lam = u[n];
            return u[i] * (u[i] - 2.0 * Ui) - lam * u[i];
        });
    }
    double Ud = p.demand;
    g.costs.push_back([n, Ud](const Vec& u) {
        double supply = 0.0;
        for (std::size_t i = 0; i < n; ++i) supply += u[i];
        return u[n] * (supply - Ud);
    });
    Vec cap = p.capacity;
    g.pseudograd = [n, Ud, cap](const Vec& u, Vec& f) {
        double supply = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            f[i] = 2.0 * u[i] - 2.0 * cap[i] - u[n];
            supply += u[i];
        }
        f[n] = supply - Ud;
    };
    double cap_sum = std::accumulate(cap.begin(), cap.end(), 0.0);
    double lam_star = 2.0 * (Ud - cap_sum) / static_cast<double>(n);
    g.known_ne.assign(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) g.known_ne[i] = cap[i] + lam_star / 2.0;
    g.known_ne[n] = lam_star;
    return g;
}

GameSpec builtin_game(const std::string& name) {
    if (name == "bilinear") return builtin_bilinear();
    if (name == "fixed-demand") return builtin_fixed_demand();
    throw std::invalid_argument("unknown builtin game '" + name +
                                "' (available: bilinear, fixed-demand)");
}

}  // namespace nesc
