#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dtn/geometry.hpp"
#include "dtn/model_config.hpp"
#include "dtn/quadrature.hpp"

namespace dtn {

// ---------------------------------------------------------------------------
// Transmission-stage tables.  en/pe hold the expected eligible-node count and
// the escape probability per (direction cell, spatial cell).  The forward
// density itself is never materialized (it is N*M x N*M); kernel rows generate
// it from the exponential strips below, which integrate the eligible-mass
// exponent exactly over each potential level.
// ---------------------------------------------------------------------------

struct TransmissionTables {
    Eigen::MatrixXd en;  // N x M
    Eigen::MatrixXd pe;  // N x M, exp(-en)

    // Exact strip integrals of exp(-lambda * I2(x_k) * u) over the cumulative
    // better-mass span of each level (full span / first half of the span).
    Eigen::MatrixXd full_strip;  // n_levels x M
    Eigen::MatrixXd half_strip;  // n_levels x M

    // Assembly aids so kernel construction is self-contained.
    double lambda = 0;            // node density the strips were built at
    Eigen::VectorXi level_of;     // per direction cell
    Eigen::VectorXd level_share;  // cell mass / its level's mass (0 on empty levels)
    Eigen::VectorXd cell_mass;    // exact direction-density mass per cell
    std::vector<std::vector<int>> g_cells;  // per spatial cell k: cells of G(x_k)
};

// ---------------------------------------------------------------------------
// Buffering-stage rate tables.  r_a/r_b/r_c are densities over the target
// direction cell (r_b, r_c are additionally uniform per unit area over F, so
// one N x N matrix represents the full 3-index family; entry_* expose the
// 3-index view).  r_dhat concentrates on boundary cells and is stored per
// source direction as an N x M slice.
// ---------------------------------------------------------------------------

struct RateTables {
    Eigen::MatrixXd r_a;  // N x N: source i -> target j, density in theta'
    Eigen::MatrixXd r_b;  // N x N: density in (theta', area)
    Eigen::MatrixXd r_c;  // N x N: density in (theta', area)
    std::vector<Eigen::MatrixXd> r_dhat;  // per source i: N x M in (theta', area)

    Eigen::VectorXd r_a_agg, r_b_agg, r_c_agg, r_d_agg;  // per source cell
    Eigen::VectorXd r_total;      // r0 + r_c_agg + r_d_agg
    double identity_defect = 0;   // max_i |r_a_agg + r_b_agg - r0| / r0
    double two_form_defect = 0;   // see aggregate_rates

    double entry_b(int i, int j, int) const { return r_b(i, j); }
    double entry_c(int i, int j, int) const { return r_c(i, j); }
    double entry_dhat(int i, int j, int k) const { return r_dhat[i](j, k); }
};

// Everything the chain solver consumes, built once per parameter point.
struct StageTables {
    ModelParams params;
    ForwardingRegion fr;
    Grid grid;
    LevelStructure levels;
    SpeedupTables speed;
    TransmissionTables tx;
    RateTables rates;
};

// Builds grid, levels, speedups, transmission tables, rate tables (threshold
// curves cached per direction pair at `curve_resolution` samples).  Requires a
// location-independent rule.
StageTables build_stage_tables(const ModelParams& params, int n_theta, int l,
                               int curve_resolution = 256);

// ---------------------------------------------------------------------------
// Point operations: the rate and transmission formulas evaluated at arbitrary
// (non-grid) arguments, by direct center-sample quadrature plus the analytic
// direction-mass shortcuts for location-independent rules.
// ---------------------------------------------------------------------------

// lambda * (mass of directions strictly better than theta) * area(G(r)),
// the area counted over the grid's spatial cells.  Domain error if r outside F.
double expected_better_count(const ModelParams& p, const ForwardingRegion& fr, const Grid& grid,
                             double theta, const Eigen::Vector2d& r);

// exp(-expected_better_count)
double escape_probability(const ModelParams& p, const ForwardingRegion& fr, const Grid& grid,
                          double theta, const Eigen::Vector2d& r);

// Density (per direction x area) that the first forward hop from state
// (theta, r) lands on a node with direction theta_p at displacement r_p.
double forward_density(const ModelParams& p, const ForwardingRegion& fr, const Grid& grid,
                       double theta_p, const Eigen::Vector2d& r_p, double theta,
                       const Eigen::Vector2d& r);

// Carrier turn that keeps the packet: the turn lands on theta_p and no node
// in the potential band between theta_p and theta preempts it.
double rate_a(const ModelParams& p, const ForwardingRegion& fr, double theta, double theta_p);

// Carrier turn that hands the packet to the best band node (direction
// theta_p, displacement r_p).  Domain error if r_p outside F.
double rate_b(const ModelParams& p, const ForwardingRegion& fr, double theta, double theta_p,
              const Eigen::Vector2d& r_p);

// A node at r_p turns to an eligible direction theta_p.  Domain error if r_p
// outside F.
double rate_c(const ModelParams& p, const ForwardingRegion& fr, double theta, double theta_p,
              const Eigen::Vector2d& r_p);

// Eligible nodes swept across the threshold curve at parameter s by relative
// motion.  Empty curve -> 0.
double rate_d(const ModelParams& p, double theta, double theta_p, double s,
              const ThresholdCurve& curve);

// Mass-conserving relocation of the curve flux onto the spatial grid: each
// curve sample's rate * delta_s lands on the nearest grid cell, divided by
// delta_A.  Returns the M-vector slice.
Eigen::VectorXd relocate_rate_d(const ModelParams& p, double theta, double theta_p,
                                const ThresholdCurve& curve, const Grid& grid);

// ---------------------------------------------------------------------------
// Aggregates
// ---------------------------------------------------------------------------

struct RateAggregates {
    Eigen::VectorXd r_a, r_b, r_c, r_d;  // per source cell
    Eigen::VectorXd r_total;             // r0 + r_c + r_d
    double identity_defect = 0;          // max |r_a + r_b - r0| / r0
    // Relative gap between r_total and the direct sum of all four aggregates;
    // > 5% throws NumericGateError (grid too coarse).
    double two_form_defect = 0;
};

RateAggregates aggregate_rates(const RateTables& tables, const Grid& grid, double r0);

// Split of the buffering-exit event into the four families plus the mean
// sojourn 1/r(theta_i).
struct EventSplit {
    double p_a = 0, p_b = 0, p_c = 0, p_d = 0;
    double mean_sojourn = 0;
};

EventSplit conditional_event_probabilities(const RateTables& tables, int i);

}  // namespace dtn
