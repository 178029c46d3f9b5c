#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dtn/chain_solver.hpp"
#include "dtn/model_config.hpp"
#include "dtn/simulator.hpp"

namespace dtn {

// ---------------------------------------------------------------------------
// Parameter sweeps over one or two axes, emitting one deterministic CSV row
// per Cartesian-product point.
// ---------------------------------------------------------------------------

struct SweepAxis {
    std::string name;  // one of: lambda, v0, r0, theta_w, a, eccentricity
    std::vector<double> values;
};

struct SweepSpec {
    SweepAxis axis1;
    std::optional<SweepAxis> axis2;
    bool force_circle = false;  // pin eccentricity to 0 (fig6 setup)
};

// Built-in presets: fig4 (a x eccentricity), fig5 (lambda x r0),
// fig6 (theta_w x a, eccentricity = 0).  Unknown name -> ValidationError.
SweepSpec preset_sweep(const std::string& name);

// JSON sweep file: {"axis1": {"name": ..., "values": [...]},
// "axis2": {...} (optional), "force_circle": bool (optional)}.
SweepSpec sweep_from_json_file(const std::string& path);

// Shared knobs for point runs and sweeps.
struct RunContext {
    std::string mode = "analytic";  // analytic | simulate | both
    ModelParams base = default_params();  // sweep axes are applied on top
    int n_theta = 36;
    int l = 21;
    std::uint64_t seed = 2024;
    int replicas = 8;
    int threads = 0;  // 0 -> DTN_THREADS env or hardware count
};

struct PointResult {
    ModelParams params;
    bool ok = true;
    std::string error;
    int error_kind = 0;  // 1 validation, 2 numeric gate

    bool have_analytic = false;
    Metrics analytic;
    double row_defect = 0;
    double doeblin = 0;
    double identity_defect = 0;

    bool have_sim = false;
    SimEstimate sim;

    double v_gap = 0;  // |sim - analytic| / |sim|, both mode only
    double c_gap = 0;
};

// Runs one parameter point in the requested mode.  Model errors are captured
// in the result (ok = false), not thrown.
PointResult run_point(const ModelParams& params, const RunContext& ctx);

// Applies one axis value to a parameter set by name; ValidationError for an
// unknown name.
void apply_axis_value(ModelParams& params, const std::string& name, double value);

// Cartesian sweep; rows in ascending axis order, one per point, partial
// failures recorded in the error column.  Points run on a small work pool
// (ctx.threads, capped by the DTN_THREADS environment variable).
void run_sweep(const SweepSpec& spec, const RunContext& ctx, std::ostream& out);

// Header + one formatted row of the sweep CSV (also used for single points).
std::string csv_header(const RunContext& ctx);
std::string csv_row(const PointResult& r, const RunContext& ctx);

// Worker count for a job list: ctx.threads, else DTN_THREADS, else hardware.
int worker_count(int threads_requested, int jobs);

}  // namespace dtn
