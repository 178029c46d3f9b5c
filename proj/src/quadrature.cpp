#include "dtn/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dtn/errors.hpp"

namespace dtn {

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

Grid build_grid(const ForwardingRegion& fr, int n_theta, int l) {
    if (n_theta < 4) throw ValidationError("n_theta must be >= 4");
    if (l < 4) throw ValidationError("l must be >= 4");
    if (!(fr.bounding_half_width_B > 0) || !(fr.area > 0))
        throw ValidationError("degenerate forwarding region (zero extent)");

    Grid g;
    g.n_theta = n_theta;
    g.l = l;
    g.b_half = fr.bounding_half_width_B;
    g.delta_theta = 2 * kPi / n_theta;
    g.delta_a = (2 * g.b_half / l) * (2 * g.b_half / l);
    g.v_d = g.delta_theta * g.delta_a;

    g.theta.resize(n_theta);
    for (int i = 0; i < n_theta; ++i) g.theta[i] = -kPi + (kPi / n_theta) * (2 * (i + 1) - 1);

    std::vector<Eigen::Vector2d> kept;
    std::vector<int> flat;
    for (int k2 = 1; k2 <= l; ++k2)
        for (int k1 = 1; k1 <= l; ++k1) {
            Eigen::Vector2d x(g.b_half * (-1 + (2.0 * k1 - 1) / l),
                              g.b_half * (-1 + (2.0 * k2 - 1) / l));
            if (fr_membership(fr, x)) {
                kept.push_back(x);
                flat.push_back((k2 - 1) * l + (k1 - 1));
            }
        }
    if (kept.empty()) throw ValidationError("degenerate forwarding region (no grid cells inside)");

    g.m = static_cast<int>(kept.size());
    g.points.resize(2, g.m);
    for (int k = 0; k < g.m; ++k) g.points.col(k) = kept[k];
    g.lattice_k = std::move(flat);
    g.area_disc = g.m * g.delta_a;
    return g;
}

double integrate_cells(const Grid& grid,
                       const std::function<double(double, const Eigen::Vector2d&)>& f) {
    double sum = 0;
    for (int i = 0; i < grid.n_theta; ++i)
        for (int k = 0; k < grid.m; ++k) {
            double v = f(grid.theta[i], grid.points.col(k));
            if (!std::isfinite(v))
                throw NumericGateError("non-finite integrand at cell (theta_" +
                                       std::to_string(i + 1) + ", r_" + std::to_string(k + 1) +
                                       ")");
            sum += v;
        }
    return grid.v_d * sum;
}

// ---------------------------------------------------------------------------
// Level structure
// ---------------------------------------------------------------------------

LevelStructure build_levels(const RoutingRule& rule, const DirectionDensity& density,
                            const Grid& grid) {
    if (!rule.location_independent)
        throw ValidationError("level structure requires a location-independent rule");
    const int n = grid.n_theta;
    Eigen::VectorXd mass = density.cell_masses(n);
    Eigen::VectorXd u(n);
    const Eigen::Vector2d origin = Eigen::Vector2d::Zero();
    for (int i = 0; i < n; ++i) u[i] = rule.potential(grid.theta[i], origin);

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&u](int a, int b) { return u[a] > u[b]; });

    LevelStructure lev;
    lev.level_of.assign(n, -1);
    std::vector<double> lmass, lpot;
    for (int idx : order) {
        if (!lpot.empty() && std::abs(lpot.back() - u[idx]) <= 1e-12) {
            lev.level_of[idx] = static_cast<int>(lpot.size()) - 1;
            lmass.back() += mass[idx];
        } else {
            lev.level_of[idx] = static_cast<int>(lpot.size());
            lpot.push_back(u[idx]);
            lmass.push_back(mass[idx]);
        }
    }
    lev.n_levels = static_cast<int>(lpot.size());
    lev.level_mass = Eigen::Map<Eigen::VectorXd>(lmass.data(), lev.n_levels);
    lev.potential = Eigen::Map<Eigen::VectorXd>(lpot.data(), lev.n_levels);
    lev.cum_better.resize(lev.n_levels);
    double acc = 0;
    for (int l = 0; l < lev.n_levels; ++l) {
        lev.cum_better[l] = acc;
        acc += lev.level_mass[l];
    }
    return lev;
}

// ---------------------------------------------------------------------------
// Exact exponential strips
// ---------------------------------------------------------------------------

double exp_strip(double c, double lo, double hi) {
    if (hi <= lo) return 0;
    if (c == 0) return hi - lo;
    // (exp(-c*lo) - exp(-c*hi)) / c, written with expm1 for small c*(hi-lo).
    return std::exp(-c * lo) * (-std::expm1(-c * (hi - lo))) / c;
}

double lin_exp_strip(double c, double w, double lo, double hi) {
    if (hi <= lo) return 0;
    const double d = hi - lo;
    if (c == 0) return (w - lo) * d - 0.5 * d * d;
    // Split as (w-lo) * integral e^{-cu} - e^{-c lo} * integral_0^d t e^{-ct} dt;
    // both pieces are positive and the second stays accurate as c -> 0.
    const double x = c * d;
    double g;  // integral_0^d t e^{-ct} dt = (1 - (1+x)e^{-x}) / c^2
    if (x < 1e-4)
        g = d * d * (0.5 - x / 3 + x * x / 8);
    else
        g = (1.0 - (1.0 + x) * std::exp(-x)) / (c * c);
    return (w - lo) * exp_strip(c, lo, hi) - std::exp(-c * lo) * g;
}

// ---------------------------------------------------------------------------
// Speedup tables
// ---------------------------------------------------------------------------

SpeedupTables build_speedup_tables(const RoutingRule& rule, const DirectionDensity& density,
                                   const Grid& grid) {
    if (!rule.location_independent)
        throw ValidationError("speedup tables require a location-independent rule");
    const int n = grid.n_theta, m = grid.m;
    LevelStructure lev = build_levels(rule, density, grid);

    SpeedupTables t;
    t.i1.resize(n);
    t.i3.resize(n);
    t.i4.resize(n, n);
    t.better.resize(n, n);

    // Direction masses.  The built-in U = -|theta| admits exact masses through
    // mass_below_abs (the closed form |theta|/pi in the uniform case); other
    // location-independent potentials fall back to cell-center indicator sums
    // over the level structure.
    if (rule.neg_abs_potential) {
        for (int i = 0; i < n; ++i) {
            double below = mass_below_abs(density, std::abs(grid.theta[i]));
            t.i1[i] = below;
            t.i3[i] = 1.0 - below;
        }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double band = mass_below_abs(density, std::abs(grid.theta[j])) -
                              mass_below_abs(density, std::abs(grid.theta[i]));
                t.i4(i, j) = std::max(0.0, band);
            }
    } else {
        for (int i = 0; i < n; ++i) {
            int li = lev.level_of[i];
            t.i1[i] = lev.cum_better[li];
            t.i3[i] = 1.0 - lev.cum_better[li] - lev.level_mass[li];
        }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                int li = lev.level_of[i], lj = lev.level_of[j];
                // j strictly worse: the band between them, i's level included.
                t.i4(i, j) = li < lj ? lev.cum_better[lj] - lev.cum_better[li] : 0.0;
            }
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            int li = lev.level_of[i], lj = lev.level_of[j];
            t.better(i, j) = li > lj ? 1.0 : (li == lj ? 0.5 : 0.0);
        }

    // I2: area of G(x_k) counted over the grid's own cells.
    ForwardingRegion fr = ForwardingRegion::from_rule(rule);
    t.i2.resize(m);
    for (int k = 0; k < m; ++k) {
        int count = 0;
        for (int j = 0; j < m; ++j)
            if (!fr_membership(fr, Eigen::Vector2d(grid.points.col(j) + grid.points.col(k))))
                ++count;
        t.i2[k] = count * grid.delta_a;
    }
    return t;
}

}  // namespace dtn
