#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "dtn/errors.hpp"
#include "dtn/geometry.hpp"
#include "dtn/model_config.hpp"
#include "dtn/quadrature.hpp"
#include "oracles.hpp"

using namespace dtn;

TEST_CASE("grid layout on the default region") {
    ForwardingRegion fr = ForwardingRegion::from_rule(RoutingRule::ellipse(1.0, 0.7));
    Grid grid = build_grid(fr, 36, 21);
    CHECK(grid.n_theta == 36);
    CHECK(grid.l == 21);
    CHECK(grid.m == 86);  // retained-cell golden for the default conic
    CHECK(grid.b_half == doctest::Approx(1.7).epsilon(1e-12));
    CHECK(grid.delta_theta == doctest::Approx(2 * kPi / 36));
    CHECK(grid.delta_a == doctest::Approx(std::pow(2 * 1.7 / 21, 2)).epsilon(1e-12));
    CHECK(grid.area_disc == doctest::Approx(86 * grid.delta_a).epsilon(1e-12));
    CHECK(grid.area_disc == doctest::Approx(2.25433106576).epsilon(1e-9));
    CHECK(grid.v_d == doctest::Approx(grid.delta_theta * grid.delta_a).epsilon(1e-12));

    // theta_i = -pi + (pi/N)(2i - 1).
    for (int i = 0; i < 36; ++i)
        CHECK(grid.theta[i] == doctest::Approx(-kPi + (kPi / 36) * (2 * (i + 1) - 1)));

    // Every retained center really is inside F; its immediate outside ring is not dense.
    for (int k = 0; k < grid.m; ++k) CHECK(fr_membership(fr, grid.points.col(k)));

    Grid four = build_grid(fr, 4, 5);
    CHECK(four.theta[0] == doctest::Approx(-3 * kPi / 4));
    CHECK(four.theta[1] == doctest::Approx(-kPi / 4));
    CHECK(four.theta[2] == doctest::Approx(kPi / 4));
    CHECK(four.theta[3] == doctest::Approx(3 * kPi / 4));

    CHECK_THROWS_AS(build_grid(fr, 3, 21), ValidationError);
    CHECK_THROWS_AS(build_grid(fr, 36, 2), ValidationError);
}

TEST_CASE("grid area converges to the region area") {
    ForwardingRegion circle = ForwardingRegion::from_rule(RoutingRule::ellipse(1.0, 0.0));
    Grid fine = build_grid(circle, 4, 151);
    CHECK(fine.area_disc == doctest::Approx(kPi).epsilon(0.01));
    // Refinement: the fine grid deviates less than the coarse one.
    Grid coarse = build_grid(circle, 4, 21);
    CHECK(std::abs(fine.area_disc - kPi) < std::abs(coarse.area_disc - kPi));
}

TEST_CASE("cell integration") {
    ForwardingRegion circle = ForwardingRegion::from_rule(RoutingRule::ellipse(1.0, 0.0));
    Grid grid = build_grid(circle, 36, 41);
    double full = integrate_cells(grid, [](double, const Eigen::Vector2d&) { return 1.0; });
    CHECK(full == doctest::Approx(2 * kPi * kPi).epsilon(0.05));
    CHECK(integrate_cells(grid, [](double, const Eigen::Vector2d&) { return 0.0; }) == 0.0);
    double half = integrate_cells(
        grid, [](double, const Eigen::Vector2d& r) { return r.y() > 0 ? 1.0 : 0.0; });
    CHECK(half == doctest::Approx(kPi * kPi).epsilon(0.05));
    // Pointwise dominance implies integral dominance.
    CHECK(half <= full);
    CHECK_THROWS_AS(integrate_cells(grid,
                                    [](double, const Eigen::Vector2d&) {
                                        return std::numeric_limits<double>::quiet_NaN();
                                    }),
                    NumericGateError);
}

TEST_CASE("exponential strips match Simpson integration") {
    for (double c : {0.0, 1e-12, 1e-5, 0.3, 2.7, 50.0}) {
        for (auto [lo, hi] : std::initializer_list<std::pair<double, double>>{
                 {0.0, 1.0}, {0.2, 0.35}, {0.0, 0.01}, {0.9, 1.0}}) {
            double expect = oracle::simpson([&](double u) { return std::exp(-c * u); }, lo, hi,
                                            2000);
            CHECK(exp_strip(c, lo, hi) == doctest::Approx(expect).epsilon(1e-10));
            double w = 1.0;
            double expect2 = oracle::simpson(
                [&](double u) { return (w - u) * std::exp(-c * u); }, lo, hi, 2000);
            CHECK(lin_exp_strip(c, w, lo, hi) == doctest::Approx(expect2).epsilon(1e-9));
        }
    }
    // Degenerate and reversed intervals vanish.
    CHECK(exp_strip(1.0, 0.5, 0.5) == 0.0);
    CHECK(exp_strip(1.0, 0.7, 0.5) == 0.0);
    CHECK(lin_exp_strip(1.0, 1.0, 0.7, 0.5) == 0.0);
    // Both branches of the small-argument series switch (x = c d near 1e-4)
    // agree with direct quadrature.
    for (double c : {0.99e-4 / 0.1, 1.01e-4 / 0.1}) {
        double expect = oracle::simpson(
            [&](double u) { return (1.0 - u) * std::exp(-c * u); }, 0.3, 0.4, 2000);
        CHECK(lin_exp_strip(c, 1.0, 0.3, 0.4) == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("level structure orders potentials downward") {
    ModelParams p = default_params();
    ForwardingRegion fr = ForwardingRegion::from_rule(p.rule);
    Grid grid = build_grid(fr, 36, 21);
    LevelStructure lev = build_levels(p.rule, p.direction_density, grid);

    // U = -|theta| pairs mirror cells: 18 levels of two cells each at N = 36.
    CHECK(lev.n_levels == 18);
    CHECK(int(lev.level_of.size()) == 36);
    CHECK(lev.level_mass.sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int l = 1; l < lev.n_levels; ++l) {
        CHECK(lev.potential[l] < lev.potential[l - 1]);
        CHECK(lev.cum_better[l] == doctest::Approx(lev.cum_better[l - 1] +
                                                   lev.level_mass[l - 1]).epsilon(1e-12));
    }
    CHECK(lev.cum_better[0] == 0.0);
    for (int i = 0; i < 36; ++i) {
        int l = lev.level_of[i];
        CHECK(lev.potential[l] == doctest::Approx(-std::abs(grid.theta[i])).epsilon(1e-12));
        // Effective spans bracket the strict mass and stay inside [0, 1].
        CHECK(lev.i1_eff(l) == doctest::Approx(lev.cum_better[l] + lev.level_mass[l] / 2));
        CHECK(lev.i1_eff(l) + lev.i3_eff(l) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("speedup tables for the default rule") {
    ModelParams p = default_params();
    ForwardingRegion fr = ForwardingRegion::from_rule(p.rule);
    Grid grid = build_grid(fr, 36, 21);
    SpeedupTables t = build_speedup_tables(p.rule, p.direction_density, grid);

    for (int i = 0; i < 36; ++i) {
        // Closed form: strictly-better mass is |theta| / pi for the uniform density.
        CHECK(t.i1[i] == doctest::Approx(std::abs(grid.theta[i]) / kPi).epsilon(1e-12));
        CHECK(t.i1[i] + t.i3[i] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(t.i4(i, i) == 0.0);
        for (int j = 0; j < 36; ++j) {
            CHECK(t.i4(i, j) >= 0.0);
            CHECK(t.i4(i, j) <= 1.0);
            // Pairwise better-ness partitions each unordered pair (ties split).
            CHECK(t.better(i, j) + t.better(j, i) == doctest::Approx(1.0));
        }
    }
    // I2 is an area within [0, |F|-discrete]; the origin cell sees an empty G.
    CHECK(t.i2.minCoeff() >= 0.0);
    CHECK(t.i2.maxCoeff() <= grid.area_disc * (1 + 1e-12));
    int origin = -1;
    for (int k = 0; k < grid.m; ++k)
        if (grid.points.col(k).norm() < 1e-12) origin = k;
    REQUIRE(origin >= 0);
    CHECK(t.i2[origin] == 0.0);

    RoutingRule dependent = p.rule;
    dependent.location_independent = false;
    CHECK_THROWS_AS(build_speedup_tables(dependent, p.direction_density, grid), ValidationError);
}
