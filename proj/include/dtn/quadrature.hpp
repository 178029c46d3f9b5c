#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "dtn/geometry.hpp"
#include "dtn/model_config.hpp"

namespace dtn {

// ---------------------------------------------------------------------------
// Product grid used by every table in the analytical engine: N direction
// cells covering [-pi, pi) and M spatial cells (centers of an L x L lattice
// over [-B, B]^2 that fall inside the forwarding region).
// ---------------------------------------------------------------------------

struct Grid {
    int n_theta = 0;  // direction cells (N)
    int l = 0;        // lattice cells per spatial axis (L)
    int m = 0;        // spatial cells kept inside F (M)

    double b_half = 0;        // bounding half-width B
    double delta_theta = 0;   // 2*pi / N
    double delta_a = 0;       // (2B/L)^2, area of one lattice cell
    double v_d = 0;           // delta_theta * delta_a, product cell measure
    double area_disc = 0;     // M * delta_a, discrete area of F

    Eigen::VectorXd theta;       // N cell centers, theta_i = -pi + (pi/N)(2i-1)
    Eigen::Matrix2Xd points;     // M spatial cell centers, column k = x_k
    std::vector<int> lattice_k;  // flat lattice index of each kept cell
};

// Builds the grid for a forwarding region.  Pure geometry: direction weights
// live in DirectionDensity::cell_masses.  Throws ValidationError for
// n_theta < 4, l < 4, or a degenerate region that keeps no cells.
Grid build_grid(const ForwardingRegion& fr, int n_theta, int l);

// v_d * sum_{i,k} f(theta_i, x_k).  Throws NumericGateError naming the first
// cell whose integrand is non-finite.
double integrate_cells(const Grid& grid,
                       const std::function<double(double, const Eigen::Vector2d&)>& f);

// ---------------------------------------------------------------------------
// Potential level structure over the direction cells.  Cells are grouped by
// the value of U(theta_i, 0) (ties within 1e-12), ordered from the highest
// potential (level 0) downward, and each level carries its direction mass.
// ---------------------------------------------------------------------------

struct LevelStructure {
    std::vector<int> level_of;  // per direction cell i
    Eigen::VectorXd level_mass;     // per level, sum of cell masses
    Eigen::VectorXd cum_better;     // mass at strictly higher potential
    Eigen::VectorXd potential;      // representative U value per level
    int n_levels = 0;

    // Mass span [lo, hi) of the strictly-better region seen from level l,
    // with the carrier's own level split half better / half worse.
    double i1_eff(int l) const { return cum_better[l] + 0.5 * level_mass[l]; }
    double i3_eff(int l) const { return 1.0 - cum_better[l] - 0.5 * level_mass[l]; }
};

LevelStructure build_levels(const RoutingRule& rule, const DirectionDensity& density,
                            const Grid& grid);

// ---------------------------------------------------------------------------
// Exactly integrated exponential strips.  Both primitives are closed forms
// and keep full precision as c -> 0.
// ---------------------------------------------------------------------------

// integral_{lo}^{hi} exp(-c u) du
double exp_strip(double c, double lo, double hi);

// integral_{lo}^{hi} (w - u) exp(-c u) du
double lin_exp_strip(double c, double w, double lo, double hi);

// ---------------------------------------------------------------------------
// Speedup tables: geometric factors entering every buffering rate.
// I1, I3, I4 are direction-density masses in [0, 1]; I2 is an area in
// [0, |F|].
// ---------------------------------------------------------------------------

struct SpeedupTables {
    Eigen::VectorXd i1;   // per direction cell: mass strictly better
    Eigen::VectorXd i3;   // per direction cell: mass strictly worse
    Eigen::MatrixXd i4;   // (i, j): mass strictly between U(theta_j) and U(theta_i)
    Eigen::VectorXd i2;   // per spatial cell: area of G(x_k)
    Eigen::MatrixXd better;  // (i, j): 1 if U(theta_j) > U(theta_i), 1/2 at ties
};

// Requires a location-independent rule (ValidationError otherwise): the
// general location-dependent path runs through the direct-quadrature point
// operations instead.
SpeedupTables build_speedup_tables(const RoutingRule& rule, const DirectionDensity& density,
                                   const Grid& grid);

}  // namespace dtn
