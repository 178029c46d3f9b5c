#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "dtn/model_config.hpp"
#include "dtn/quadrature.hpp"
#include "dtn/stage_analysis.hpp"

namespace dtn {

// ---------------------------------------------------------------------------
// The packet-state chain on N buffering states + N*M transmission states.
// Row/column layout: buffering (theta_i) -> i; transmission (theta_i, x_k) ->
// N + k*N + i.  Entries are masses (cell measures absorbed), each row summing
// to exactly 1 after renormalization.
// ---------------------------------------------------------------------------

struct KernelMatrix {
    Eigen::MatrixXd k;
    int n_theta = 0;
    int m = 0;

    Eigen::VectorXd row_defect;   // per-row pre-renormalization |sum - 1|
    double max_row_defect = 0;
    std::vector<int> support;     // states whose direction cell has mass > 0

    int dim() const { return n_theta * (m + 1); }
    int row_b(int i) const { return i; }
    int row_w(int i, int k) const { return n_theta + k * n_theta + i; }
};

// Builds the dense row-stochastic kernel from the stage tables.  Any row with
// pre-renormalization defect above 5% throws NumericGateError (grid too
// coarse).  Zero-mass direction cells yield identity rows.
KernelMatrix assemble_kernel(const RateTables& rates, const TransmissionTables& tx,
                             const Grid& grid);

struct StationaryDistribution {
    Eigen::VectorXd psi;    // full state vector, mass form, sums to 1
    Eigen::VectorXd psi_b;  // N buffering masses
    Eigen::MatrixXd psi_w;  // N x M transmission masses
    double residual = 0;    // ||psi - psi K||_inf
    int iterations = 0;
};

// Left fixed point psi = psi K by power iteration to residual 1e-12
// (NumericGateError after 1e5 iterations — impossible for a healthy kernel,
// so it signals an assembly bug).
StationaryDistribution stationary_distribution(const KernelMatrix& kernel);

// Independent cross-check: direct LU solve of (K^T - I) psi = 0 with a
// normalization row, restricted to the support states.  Returns the full-size
// vector (zero off support).
Eigen::VectorXd stationary_direct(const KernelMatrix& kernel);

// Minimum over support rows of the two-step mass returned to the buffering
// block: min_s sum_{b in buffering support} K^2[s, b].  Positive for every
// healthy kernel; computed with two mat-vec products (K^2 never formed).
double doeblin_mass(const KernelMatrix& kernel);

// ---------------------------------------------------------------------------
// Long-run expectations and metrics
// ---------------------------------------------------------------------------

struct Expectations {
    double x_w = 0;    // mean transmission progress per stage pair
    double cost = 0;   // mean transmission cost
    double delta = 0;  // mean buffering sojourn
    double x_b = 0;    // mean buffering progress
};

Expectations expectations(const StationaryDistribution& psi, const ModelParams& params,
                          const RateTables& rates, const Grid& grid);

struct Metrics {
    double v_p = 0;
    double c_p = 0;
    bool c_p_defined = true;
    Expectations parts;
};

// v_p = (E(X_W) + E(X_B)) / E(Delta); c_p = E(C) / (E(X_W) + E(X_B)).
// c_p is reported undefined when net progress vanishes (|progress| below
// 1e-3 * v0 * E(Delta), i.e. |v_p| < 1e-3 * v0), as at lambda -> 0 with a
// symmetric direction density.
Metrics performance_metrics(const Expectations& e, const ModelParams& params);

// Full pipeline at one parameter point: tables -> kernel -> psi -> metrics.
Metrics analyze(const StageTables& tables);

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

// One row per state: kind, theta index, spatial index, theta, x, y, mass.
void write_stationary_csv(std::ostream& out, const StationaryDistribution& psi,
                          const Grid& grid);

// Coordinate text format: "row col value" per nonzero entry.
void write_kernel_coordinate(std::ostream& out, const KernelMatrix& kernel);

}  // namespace dtn
