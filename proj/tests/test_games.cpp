#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "nesc/analysis.hpp"
#include "nesc/game.hpp"
#include "nesc/types.hpp"

using namespace nesc;

TEST_CASE("bilinear game: costs and pseudogradient at hand-checked points") {
    GameSpec g = builtin_bilinear();

    CHECK(g.n_agents() == 2);
    CHECK(g.dim() == 2);
    CHECK(g.offset(0) == 0);
    CHECK(g.offset(1) == 1);

    // J_1 = (u_1 - 2)(u_2 + 3), J_2 = -J_1.
    Vec u = {3.0, -2.0};
    CHECK(g.evaluate_cost(0, u) == doctest::Approx(1.0));
    CHECK(g.evaluate_cost(1, u) == doctest::Approx(-1.0));

    // F = (u_2 + 3, -(u_1 - 2)).
    Vec f = g.pseudogradient(u);
    REQUIRE(f.size() == 2);
    CHECK(f[0] == doctest::Approx(1.0));
    CHECK(f[1] == doctest::Approx(-1.0));
    CHECK(g.ne_residual(u) == doctest::Approx(std::sqrt(2.0)));

    // The in-place form agrees with the allocating one.
    Vec f2(2, 0.0);
    g.pseudogradient(u, f2);
    CHECK(f2[0] == f[0]);
    CHECK(f2[1] == f[1]);
}

TEST_CASE("bilinear game: the known equilibrium zeroes the pseudogradient") {
    GameSpec g = builtin_bilinear();
    REQUIRE(g.known_ne.size() == 2);
    CHECK(g.known_ne[0] == doctest::Approx(2.0));
    CHECK(g.known_ne[1] == doctest::Approx(-3.0));
    CHECK(g.ne_residual(g.known_ne) <= 1e-12);
    CHECK(g.evaluate_cost(0, g.known_ne) == doctest::Approx(0.0));

    GameSpec shifted = builtin_bilinear(-1.5, 4.0);
    CHECK(shifted.known_ne[0] == doctest::Approx(-1.5));
    CHECK(shifted.known_ne[1] == doctest::Approx(4.0));
    CHECK(shifted.ne_residual(shifted.known_ne) <= 1e-12);
}

TEST_CASE("bilinear game: pseudogradient is exactly skew") {
    GameSpec g = builtin_bilinear();
    Rng rng(42);
    for (int k = 0; k < 200; ++k) {
        Vec u = {rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0)};
        Vec v = {rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0)};
        Vec fu = g.pseudogradient(u);
        Vec fv = g.pseudogradient(v);
        Vec du = sub(u, v);
        Vec df = sub(fu, fv);
        // <F(u) - F(v), u - v> = 0 for a skew-linear operator.
        CHECK(std::abs(dot(df, du)) <= 1e-9);
    }
}

TEST_CASE("fixed-demand game: costs and pseudogradient at hand-checked points") {
    GameSpec g = builtin_fixed_demand();

    CHECK(g.n_agents() == 4);
    CHECK(g.dim() == 4);
    CHECK(g.offset(3) == 3);

    // Regulator cost at u = (0,0,0), lambda = 5: 5 * (0 - 350) = -1750.
    Vec u = {0.0, 0.0, 0.0, 5.0};
    CHECK(g.evaluate_cost(3, u) == doctest::Approx(-1750.0));

    // Producer 1 at u = (1,0,0), lambda = 2: 1*(1 - 344) - 2*1 = -345.
    Vec v = {1.0, 0.0, 0.0, 2.0};
    CHECK(g.evaluate_cost(0, v) == doctest::Approx(-345.0));

    // F at the origin: producers 2u_i - 2U_i - lambda, regulator sum u - U_d.
    Vec f = g.pseudogradient(Vec(4, 0.0));
    REQUIRE(f.size() == 4);
    CHECK(f[0] == doctest::Approx(-344.0));
    CHECK(f[1] == doctest::Approx(-94.0));
    CHECK(f[2] == doctest::Approx(-132.0));
    CHECK(f[3] == doctest::Approx(-350.0));
}

TEST_CASE("fixed-demand game: equilibrium price and allocations") {
    GameSpec g = builtin_fixed_demand();
    REQUIRE(g.known_ne.size() == 4);

    // lambda* = 2 (U_d - sum U_i) / N = 2 (350 - 285) / 3 = 130/3.
    CHECK(g.known_ne[3] == doctest::Approx(130.0 / 3.0).epsilon(1e-12));
    CHECK(g.known_ne[0] == doctest::Approx(172.0 + 65.0 / 3.0));
    CHECK(g.known_ne[1] == doctest::Approx(47.0 + 65.0 / 3.0));
    CHECK(g.known_ne[2] == doctest::Approx(66.0 + 65.0 / 3.0));
    CHECK(g.ne_residual(g.known_ne) <= 1e-9);

    // Market clears at the equilibrium.
    double total = g.known_ne[0] + g.known_ne[1] + g.known_ne[2];
    CHECK(total == doctest::Approx(350.0));

    // Custom parameters follow the same closed form.
    FixedDemandParams p;
    p.capacity = {10.0, 20.0};
    p.demand = 40.0;
    GameSpec h = builtin_fixed_demand(p);
    CHECK(h.known_ne.back() == doctest::Approx(10.0));
    CHECK(h.known_ne[0] == doctest::Approx(15.0));
    CHECK(h.known_ne[1] == doctest::Approx(25.0));
    CHECK(h.ne_residual(h.known_ne) <= 1e-9);
}

TEST_CASE("analytic pseudogradients match central differences of the costs") {
    for (const char* name : {"bilinear", "fixed-demand"}) {
        CAPTURE(name);
        GameSpec g = builtin_game(name);
        Rng rng(7);
        for (int k = 0; k < 100; ++k) {
            Vec u(g.dim());
            for (double& x : u) x = rng.uniform(-10.0, 10.0);
            Vec fa = g.pseudogradient(u);
            Vec fd = finite_diff_pseudogradient(g, u);
            double scale = std::max(1.0, norm_inf(fa));
            for (std::size_t i = 0; i < fa.size(); ++i)
                CHECK(std::abs(fa[i] - fd[i]) / scale <= 1e-6);
        }
    }
}

TEST_CASE("builtin games are monotone on a sampled box") {
    for (const char* name : {"bilinear", "fixed-demand"}) {
        CAPTURE(name);
        GameSpec g = builtin_game(name);
        Rng rng(123);
        double worst = monotonicity_probe(g, 1000, -50.0, 50.0, rng);
        CHECK(worst >= -1e-9);
    }
}

TEST_CASE("builtin lookup and error handling") {
    CHECK(builtin_game("bilinear").name == "bilinear");
    CHECK(builtin_game("fixed-demand").name == "fixed-demand");
    CHECK_THROWS_AS((void)builtin_game("tragedy-of-the-commons"), std::invalid_argument);

    GameSpec g = builtin_bilinear();
    CHECK_THROWS_AS((void)g.evaluate_cost(2, {0.0, 0.0}), std::out_of_range);
    CHECK_THROWS_AS((void)g.evaluate_cost(0, {0.0}), std::invalid_argument);
    CHECK_THROWS_AS((void)g.pseudogradient({1.0, 2.0, 3.0}), std::invalid_argument);

    // A game without an analytic pseudogradient reports that clearly.
    GameSpec bare;
    bare.name = "costs-only";
    bare.dims = {1};
    bare.costs = {[](const Vec& u) { return u[0] * u[0]; }};
    CHECK_THROWS_AS((void)bare.pseudogradient({1.0}), std::runtime_error);
    CHECK(bare.evaluate_cost(0, {3.0}) == doctest::Approx(9.0));
}
