#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "nesc/controllers.hpp"
#include "nesc/game.hpp"
#include "nesc/types.hpp"

using namespace nesc;

namespace {

// Single-agent scalar game J(u) = u^2 with its analytic gradient.
GameSpec quadratic_game() {
    GameSpec g;
    g.name = "quadratic";
    g.dims = {1};
    g.costs = {[](const Vec& u) { return u[0] * u[0]; }};
    g.pseudograd = [](const Vec& u, Vec& out) { out[0] = 2.0 * u[0]; };
    g.known_ne = {0.0};
    return g;
}

}  // namespace

TEST_CASE("dither_signal picks the cosine component of each pair") {
    Vec d = dither_signal({1.0, 0.0, 0.5, 0.2});
    REQUIRE(d.size() == 2);
    CHECK(d[0] == 1.0);
    CHECK(d[1] == 0.5);
    CHECK_THROWS_AS((void)dither_signal({1.0, 0.0, 0.5}), std::invalid_argument);
}

TEST_CASE("oscillator_rhs rotates each pair at its own rate") {
    Vec dmu;
    oscillator_rhs({0.5}, {1.0, 0.0}, dmu);
    REQUIRE(dmu.size() == 2);
    CHECK(dmu[0] == doctest::Approx(0.0));
    CHECK(dmu[1] == doctest::Approx(M_PI));

    oscillator_rhs({1.0, 0.25}, {0.0, 1.0, 1.0, 0.0}, dmu);
    REQUIRE(dmu.size() == 4);
    CHECK(dmu[0] == doctest::Approx(-2.0 * M_PI));
    CHECK(dmu[1] == doctest::Approx(0.0));
    CHECK(dmu[2] == doctest::Approx(0.0));
    CHECK(dmu[3] == doctest::Approx(0.5 * M_PI));

    // State sanity check: pairs must sit on the unit circle.
    CHECK_THROWS_AS(oscillator_rhs({0.5}, {2.0, 0.0}, dmu), std::invalid_argument);
    CHECK_THROWS_AS(oscillator_rhs({0.5}, {1.0, 0.0, 1.0, 0.0}, dmu), std::invalid_argument);
}

TEST_CASE("dither_estimate correlates the perturbed cost with the dither") {
    GameSpec g = quadratic_game();
    EscParams p = EscParams::uniform(1, 1.0, 1.0, 0.1);
    p.kappa = {0.3};

    // u = 1, mu = (1, 0): perturbed action 1.1, cost 1.21, estimate
    // (2 / 0.1) * 1.21 * 1 = 24.2.
    Vec est = dither_estimate(g, p, exact_cost(g), {1.0}, {1.0, 0.0});
    REQUIRE(est.size() == 1);
    CHECK(est[0] == doctest::Approx(24.2));

    // mu = (0, 1): no perturbation and a zero correlation weight.
    est = dither_estimate(g, p, exact_cost(g), {1.0}, {0.0, 1.0});
    CHECK(est[0] == doctest::Approx(0.0));
}

TEST_CASE("dither_estimate gives oracle agents their analytic block at the nominal action") {
    GameSpec g = builtin_fixed_demand();
    EscParams p = EscParams::uniform(4, 0.02, 1.0 / 3.0, 20.0);
    p.kappa = {0.1778, 0.1238, 0.1824};
    p.oracle = {0, 0, 0, 1};
    CHECK(p.dither_channels(g) == 3);

    Vec u = {10.0, 20.0, 30.0, 5.0};
    Vec mu = {1.0, 0.0, 0.0, 1.0, -1.0, 0.0};
    Vec est = dither_estimate(g, p, exact_cost(g), u, mu);
    REQUIRE(est.size() == 4);

    // Regulator block: sum u - demand at the *nominal* action, independent of mu.
    CHECK(est[3] == doctest::Approx(60.0 - 350.0));

    // Producer 2 has mu = (0, 1): unperturbed, correlation weight zero.
    CHECK(est[1] == doctest::Approx(0.0));

    // Producer 1 is perturbed by +20, producer 3 by -20.
    Vec uhat = {30.0, 20.0, 10.0, 5.0};
    CHECK(est[0] == doctest::Approx(2.0 / 20.0 * g.evaluate_cost(0, uhat)));
    CHECK(est[2] == doctest::Approx(-2.0 / 20.0 * g.evaluate_cost(2, uhat)));
}

TEST_CASE("esc_gr_rhs implements the lead-compensated update row by row") {
    GameSpec g = quadratic_game();
    EscParams p = EscParams::uniform(1, 1.0, 1.0, 0.1);
    p.kappa = {0.3};

    // State [z, u, xi, mu_c, mu_s] = (0, 1, 0.5, 1, 0).
    Vec dx;
    esc_gr_rhs(g, p, exact_cost(g), {0.0, 1.0, 0.5, 1.0, 0.0}, dx);
    REQUIRE(dx.size() == 5);
    CHECK(dx[0] == doctest::Approx(1.0));    // z' = -z + u
    CHECK(dx[1] == doctest::Approx(-1.5));   // u' = -u + z - xi
    CHECK(dx[2] == doctest::Approx(23.7));   // xi' = -xi + 24.2
    CHECK(dx[3] == doctest::Approx(0.0));
    CHECK(dx[4] == doctest::Approx(2.0 * M_PI * 0.3));

    // With xi = 0 the filter row is exactly the estimate.
    esc_gr_rhs(g, p, exact_cost(g), {0.0, 1.0, 0.0, 1.0, 0.0}, dx);
    CHECK(dx[2] == doctest::Approx(24.2));

    CHECK_THROWS_AS(esc_gr_rhs(g, p, exact_cost(g), {0.0, 1.0, 0.0}, dx),
                    std::invalid_argument);
}

TEST_CASE("esc_baseline_rhs: unfiltered descends the estimate, filtered descends the filter") {
    GameSpec g = builtin_bilinear();
    EscParams p = EscParams::uniform(2, 1.0, 1.0, 0.1);
    p.kappa = {0.3, 0.7};

    // At the equilibrium with mu = (1,0,1,0): uhat = (2.1, -2.9),
    // J_1 = 0.01, J_2 = -0.01, estimate = (0.2, -0.2).
    Vec x = {2.0, -3.0, 1.0, 0.0, 1.0, 0.0};
    Vec dx;
    esc_baseline_rhs(g, p, exact_cost(g), false, x, dx);
    REQUIRE(dx.size() == 6);
    CHECK(dx[0] == doctest::Approx(-0.2));
    CHECK(dx[1] == doctest::Approx(0.2));

    // Filtered: u' = -xi, xi' = -xi + estimate.
    Vec xf = {2.0, -3.0, 0.5, -0.25, 1.0, 0.0, 1.0, 0.0};
    esc_baseline_rhs(g, p, exact_cost(g), true, xf, dx);
    REQUIRE(dx.size() == 8);
    CHECK(dx[0] == doctest::Approx(-0.5));
    CHECK(dx[1] == doctest::Approx(0.25));
    CHECK(dx[2] == doctest::Approx(-0.5 + 0.2));
    CHECK(dx[3] == doctest::Approx(0.25 - 0.2));
}

TEST_CASE("gr_flow_rhs: equilibrium is stationary and gains are normalized") {
    GameSpec g = builtin_bilinear();
    EscParams p = EscParams::uniform(2, 0.1, 1.0, 0.1);

    Vec dx;
    gr_flow_rhs(g, p, {2.0, -3.0, 2.0, -3.0}, dx);
    CHECK(norm_inf(dx) <= 1e-12);

    // Nonuniform gamma = (0.1, 0.2): gamma~ = (0.5, 1).
    p.gamma = {0.1, 0.2};
    gr_flow_rhs(g, p, {0.0, 0.0, 1.0, 1.0}, dx);
    // F(1, 1) = (4, 1); unscaled rows z' = (1, 1), u' = (-5, -2).
    CHECK(dx[0] == doctest::Approx(0.5));
    CHECK(dx[1] == doctest::Approx(1.0));
    CHECK(dx[2] == doctest::Approx(-2.5));
    CHECK(dx[3] == doctest::Approx(-2.0));
}

TEST_CASE("nominal_average_rhs tracks the slow averaged dynamics") {
    GameSpec g = builtin_bilinear();
    EscParams p = EscParams::uniform(2, 1.0, 1.0, 0.1);

    // x = [z u xi] = [0 0 | 1 0 | 0 0]; F(1, 0) = (3, 1).
    Vec dx;
    nominal_average_rhs(g, p, {0.0, 0.0, 1.0, 0.0, 0.0, 0.0}, dx);
    REQUIRE(dx.size() == 6);
    CHECK(dx[0] == doctest::Approx(1.0));
    CHECK(dx[1] == doctest::Approx(0.0));
    CHECK(dx[2] == doctest::Approx(-1.0));
    CHECK(dx[3] == doctest::Approx(0.0));
    CHECK(dx[4] == doctest::Approx(3.0));
    CHECK(dx[5] == doctest::Approx(1.0));

    // epsilon_bar multiplies only the slow rows.
    p.epsilon = {0.5, 0.5};
    nominal_average_rhs(g, p, {0.0, 0.0, 1.0, 0.0, 0.0, 0.0}, dx);
    CHECK(dx[0] == doctest::Approx(0.5));
    CHECK(dx[2] == doctest::Approx(-0.5));
    CHECK(dx[4] == doctest::Approx(3.0));  // filter row has no epsilon
}

TEST_CASE("boundary_layer_rhs relaxes the filter toward the frozen pseudogradient") {
    GameSpec g = builtin_bilinear();
    EscParams p = EscParams::uniform(2, 0.2, 1.0, 0.1);
    p.gamma = {0.1, 0.2};

    Vec u_frozen = {1.0, 0.0};  // F = (3, 1)
    Vec dxi;
    boundary_layer_rhs(g, p, u_frozen, {1.0, 1.0}, dxi);
    REQUIRE(dxi.size() == 2);
    CHECK(dxi[0] == doctest::Approx(0.5 * (-1.0 + 3.0)));
    CHECK(dxi[1] == doctest::Approx(1.0 * (-1.0 + 1.0)));
}

TEST_CASE("projections onto boxes and halfspaces") {
    BoxSet box{{-1.0, -1.0}, {1.0, 1.0}};
    Vec y = box.project({2.0, 0.5});
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(0.5));
    y = box.project({-3.0, -0.2});
    CHECK(y[0] == doctest::Approx(-1.0));
    CHECK(y[1] == doctest::Approx(-0.2));
    CHECK_THROWS_AS((void)box.project({0.0}), std::invalid_argument);

    HalfspaceSet hs{{-1.0, -0.2}, 0.0};
    // Interior points are untouched.
    y = hs.project({1.0, 0.0});
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(0.0));
    // (-1, 1) violates by 0.8; subtract 0.8/1.04 * normal.
    y = hs.project({-1.0, 1.0});
    CHECK(y[0] == doctest::Approx(-1.0 + 0.8 / 1.04));
    CHECK(y[1] == doctest::Approx(1.0 + 0.2 * 0.8 / 1.04));
    CHECK(dot(hs.normal, y) <= 1e-12);
}

TEST_CASE("projected_gr_rhs with a non-binding set equals the unconstrained flow") {
    GameSpec g = builtin_bilinear();
    EscParams p = EscParams::uniform(2, 0.1, 1.0, 0.1);
    p.gamma = {0.1, 0.05};
    BoxSet huge{{-1e12, -1e12}, {1e12, 1e12}};
    Projection proj = [huge](const Vec& v) { return huge.project(v); };

    Rng rng(99);
    for (int k = 0; k < 20; ++k) {
        Vec x(4);
        for (double& v : x) v = rng.uniform(-5.0, 5.0);
        Vec da, db;
        gr_flow_rhs(g, p, x, da);
        projected_gr_rhs(g, p, proj, x, db);
        for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(da[j] - db[j]) <= 1e-12);
    }
}

TEST_CASE("EscParams validation catches bad tuning") {
    GameSpec g = builtin_bilinear();
    EscParams p = EscParams::uniform(2, 0.1, 1.0, 0.1);
    p.kappa = {0.3, 0.7};
    CHECK_NOTHROW(p.validate(g));

    SUBCASE("kappa count must match the dithered channels") {
        p.kappa = {0.3};
        CHECK_THROWS_AS(p.validate(g), std::invalid_argument);
    }
    SUBCASE("kappa entries must be pairwise distinct") {
        p.kappa = {0.3, 0.3};
        CHECK_THROWS_AS(p.validate(g), std::invalid_argument);
    }
    SUBCASE("gains must be positive") {
        p.gamma[0] = 0.0;
        CHECK_THROWS_AS(p.validate(g), std::invalid_argument);
        p.gamma[0] = 0.1;
        p.amplitude[1] = -0.1;
        CHECK_THROWS_AS(p.validate(g), std::invalid_argument);
    }
    SUBCASE("size mismatches are rejected") {
        p.epsilon.push_back(1.0);
        CHECK_THROWS_AS(p.validate(g), std::invalid_argument);
    }
    SUBCASE("oracle flags need an analytic pseudogradient") {
        GameSpec bare;
        bare.dims = {1, 1};
        bare.costs = {[](const Vec& u) { return u[0]; }, [](const Vec& u) { return u[1]; }};
        EscParams q = EscParams::uniform(2, 0.1, 1.0, 0.1);
        q.kappa = {0.3};
        q.oracle = {0, 1};
        CHECK_THROWS_AS(q.validate(bare), std::invalid_argument);
    }
    SUBCASE("oracle flags must be empty or one per agent") {
        p.oracle = {1};
        CHECK_THROWS_AS(p.validate(g), std::invalid_argument);
    }
}

TEST_CASE("draw_kappa respects the pairwise gap and the seed") {
    Rng rng(2024);
    Vec k = draw_kappa(rng, 5, 0.01);
    REQUIRE(k.size() == 5);
    for (std::size_t a = 0; a < k.size(); ++a) {
        CHECK(k[a] >= 0.0);
        CHECK(k[a] <= 1.0);
        for (std::size_t b = a + 1; b < k.size(); ++b)
            CHECK(std::abs(k[a] - k[b]) >= 0.01);
    }

    Rng rng2(2024);
    Vec k2 = draw_kappa(rng2, 5, 0.01);
    for (std::size_t a = 0; a < k.size(); ++a) CHECK(k[a] == k2[a]);

    // An impossible gap gives up with an error instead of spinning forever.
    Rng rng3(1);
    CHECK_THROWS_AS((void)draw_kappa(rng3, 5, 0.9), std::runtime_error);
}

TEST_CASE("controller names round-trip") {
    for (Controller c : {Controller::nesc, Controller::baseline_unfiltered,
                         Controller::baseline_filtered, Controller::gr_flow,
                         Controller::nominal_average, Controller::projected_gr})
        CHECK(controller_from_name(controller_name(c)) == c);
    CHECK_THROWS_AS((void)controller_from_name("gradient-play"), std::invalid_argument);
}

TEST_CASE("make_system wires state layout and dimensions") {
    GameSpec g = builtin_bilinear();
    EscParams p = EscParams::uniform(2, 0.1, 1.0, 0.1);
    p.kappa = {0.3, 0.7};

    System nesc_sys = make_system(Controller::nesc, g, p);
    CHECK(nesc_sys.state_dim == 10);
    REQUIRE(nesc_sys.state_names.size() == 10);
    CHECK(nesc_sys.state_names[0] == "z1");
    CHECK(nesc_sys.state_names[2] == "u1");
    CHECK(nesc_sys.state_names[4] == "xi1");
    CHECK(nesc_sys.state_names[6] == "mu1c");
    CHECK(nesc_sys.state_names[9] == "mu2s");
    CHECK(nesc_sys.mu_offset == 6);
    CHECK(nesc_sys.mu_pairs == 2);
    CHECK(nesc_sys.u_offset == 2);

    System unf = make_system(Controller::baseline_unfiltered, g, p);
    CHECK(unf.state_dim == 6);
    CHECK(unf.mu_offset == 2);
    CHECK(unf.u_offset == 0);

    System fil = make_system(Controller::baseline_filtered, g, p);
    CHECK(fil.state_dim == 8);
    CHECK(fil.mu_offset == 4);

    // Reduced flows carry no dither and need no kappa.
    EscParams bare = EscParams::uniform(2, 0.1, 1.0, 0.1);
    System red = make_system(Controller::gr_flow, g, bare);
    CHECK(red.state_dim == 4);
    CHECK(red.mu_pairs == 0);
    CHECK(red.u_offset == 2);

    System avg = make_system(Controller::nominal_average, g, bare);
    CHECK(avg.state_dim == 6);

    CHECK_THROWS_AS((void)make_system(Controller::projected_gr, g, bare),
                    std::invalid_argument);

    // Oracle agents drop their oscillator pairs.
    GameSpec fd = builtin_fixed_demand();
    EscParams q = EscParams::uniform(4, 0.02, 1.0 / 3.0, 20.0);
    q.kappa = {0.1778, 0.1238, 0.1824};
    q.oracle = {0, 0, 0, 1};
    System fds = make_system(Controller::nesc, fd, q);
    CHECK(fds.state_dim == 3 * 4 + 2 * 3);
    CHECK(fds.mu_offset == 12);
    CHECK(fds.mu_pairs == 3);
    CHECK(fds.u_offset == 4);
}

TEST_CASE("assemble_initial stacks z = u0, u = u0, xi = 0 and unit oscillators") {
    GameSpec g = builtin_bilinear();
    EscParams p = EscParams::uniform(2, 0.1, 1.0, 0.1);
    p.kappa = {0.3, 0.7};

    Vec u0 = {2.8, -2.4};
    Vec x = assemble_initial(Controller::nesc, g, p, u0);
    REQUIRE(x.size() == 10);
    CHECK(x[0] == 2.8);
    CHECK(x[1] == -2.4);
    CHECK(x[2] == 2.8);
    CHECK(x[3] == -2.4);
    CHECK(x[4] == 0.0);
    CHECK(x[5] == 0.0);
    CHECK(x[6] == 1.0);
    CHECK(x[7] == 0.0);
    CHECK(x[8] == 1.0);
    CHECK(x[9] == 0.0);

    x = assemble_initial(Controller::baseline_unfiltered, g, p, u0);
    REQUIRE(x.size() == 6);
    CHECK(x[2] == 1.0);
    CHECK(x[3] == 0.0);

    x = assemble_initial(Controller::gr_flow, g, p, u0);
    REQUIRE(x.size() == 4);
    CHECK(x[2] == 2.8);

    CHECK_THROWS_AS((void)assemble_initial(Controller::nesc, g, p, {1.0}),
                    std::invalid_argument);
}
