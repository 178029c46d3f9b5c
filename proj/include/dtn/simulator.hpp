#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dtn/model_config.hpp"

namespace dtn {

// ---------------------------------------------------------------------------
// Monte Carlo simulation of the unapproximated model: a Poisson node field on
// a torus, straight-line motion with exponentially timed direction resampling,
// and instantaneous best-eligible handoffs inside the forwarding region.
// ---------------------------------------------------------------------------

struct SimConfig {
    ModelParams params;
    double world_half_width = 0;  // 0 -> 10 * max FR extent
    double time_step = 0;         // 0 -> min(0.01/r0, 0.01*a/v0)
    double horizon = 0;           // 0 -> 1e4 / r0
    long long min_stages = 100;   // run until horizon AND this stage count
    std::uint64_t seed = 2024;
    int replicas = 8;

    bool collect_diagnostics = false;  // per-event assertions + samples
    std::ostream* trace = nullptr;     // optional event dump

    // Fills the zero fields with their parameter-derived defaults.
    void finalize();
    // Throws ValidationError when the torus is too small for the FR or the
    // step too coarse for the motion scales.
    void validate() const;
};

struct ReplicaTotals {
    double sum_x = 0;      // unwrapped progress along +x (buffering + hops)
    double sum_delta = 0;  // total buffering time (= elapsed time)
    double sum_cost = 0;   // accumulated transmission cost
    long long stages = 0;
    long long transmissions = 0;

    // Diagnostics (populated when cfg.collect_diagnostics):
    long long potential_violations = 0;     // handoffs that failed to improve
    long long displacement_violations = 0;  // handoff displacement outside F
    double cost_recompute_gap = 0;          // |sum_cost - independent recompute|
    std::vector<double> direction_samples;  // node directions at sampled times
};

// One replica, bit-reproducible for a given seed.
ReplicaTotals run_replica(const SimConfig& cfg, std::uint64_t seed);

struct SimEstimate {
    double v_p_hat = 0;
    double c_p_hat = 0;
    double v_p_half_width = 0;  // 95% normal half-widths across replicas
    double c_p_half_width = 0;
    long long stages = 0;
    long long transmissions = 0;
    int cost_replicas = 0;           // replicas contributing to c_p_hat
    int zero_progress_replicas = 0;  // flagged and excluded from c_p_hat
};

// Runs cfg.replicas replicas (seeds derived from cfg.seed), aggregates the
// per-replica ratio estimators.  Requires replicas >= 2.
SimEstimate estimate(const SimConfig& cfg);

// Initial node count for one seeded draw — exposes the Poisson field sampling
// for distribution checks without running a replica.
int sample_node_count(const SimConfig& cfg, std::uint64_t seed);

}  // namespace dtn
