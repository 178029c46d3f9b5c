#include "dtn/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "dtn/errors.hpp"
#include "dtn/stage_analysis.hpp"

namespace dtn {

namespace {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

std::string sanitize(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '"') c = ';';
    return s;
}

SweepAxis sorted_axis(SweepAxis axis) {
    std::sort(axis.values.begin(), axis.values.end());
    return axis;
}

SweepAxis axis_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("sweep axis must be an object");
    SweepAxis axis;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "name") {
            if (!it.value().is_string()) throw ValidationError("axis name must be a string");
            axis.name = it.value().get<std::string>();
        } else if (it.key() == "values") {
            if (!it.value().is_array()) throw ValidationError("axis values must be an array");
            for (const auto& v : it.value()) {
                if (!v.is_number()) throw ValidationError("axis values must be numbers");
                axis.values.push_back(v.get<double>());
            }
        } else {
            throw ValidationError("unknown sweep axis key: " + it.key());
        }
    }
    if (axis.name.empty()) throw ValidationError("sweep axis needs a name");
    if (axis.values.empty()) throw ValidationError("sweep axis needs a nonempty value list");
    return axis;
}

}  // namespace

SweepSpec preset_sweep(const std::string& name) {
    SweepSpec spec;
    if (name == "fig4") {
        spec.axis1 = {"a", {0.5, 1.0, 1.5, 2.0}};
        spec.axis2 = SweepAxis{"eccentricity", {0.0, 0.2, 0.4, 0.6, 0.8}};
    } else if (name == "fig5") {
        spec.axis1 = {"lambda", {0.25, 0.5, 1.0, 2.0, 4.0}};
        spec.axis2 = SweepAxis{"r0", {0.25, 0.5, 1.0, 2.0, 4.0}};
    } else if (name == "fig6") {
        spec.axis1 = {"theta_w", {kPi / 8, kPi / 4, 3 * kPi / 8, kPi / 2}};
        spec.axis2 = SweepAxis{"a", {0.5, 1.0, 2.0, 4.0}};
        spec.force_circle = true;
    } else {
        throw ValidationError("unknown sweep preset: " + name);
    }
    return spec;
}

SweepSpec sweep_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open sweep file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError(std::string("sweep file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("sweep file must hold a JSON object");
    SweepSpec spec;
    bool have1 = false;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "axis1") {
            spec.axis1 = axis_from_json(it.value());
            have1 = true;
        } else if (it.key() == "axis2") {
            spec.axis2 = axis_from_json(it.value());
        } else if (it.key() == "force_circle") {
            if (!it.value().is_boolean()) throw ValidationError("force_circle must be a bool");
            spec.force_circle = it.value().get<bool>();
        } else {
            throw ValidationError("unknown sweep key: " + it.key());
        }
    }
    if (!have1) throw ValidationError("sweep file needs axis1");
    return spec;
}

void apply_axis_value(ModelParams& params, const std::string& name, double value) {
    if (name == "lambda") {
        params.lambda = value;
    } else if (name == "v0") {
        params.v0 = value;
    } else if (name == "r0") {
        params.r0 = value;
    } else if (name == "theta_w") {
        params.direction_density = value >= kPi / 2 ? DirectionDensity::uniform()
                                                    : DirectionDensity::four_window(value);
    } else if (name == "a") {
        if (!params.rule.is_ellipse)
            throw ValidationError("axis 'a' requires the built-in ellipse rule");
        params.rule = RoutingRule::ellipse(value, params.rule.eccentricity);
    } else if (name == "eccentricity") {
        if (!params.rule.is_ellipse)
            throw ValidationError("axis 'eccentricity' requires the built-in ellipse rule");
        params.rule = RoutingRule::ellipse(params.rule.a, value);
    } else {
        throw ValidationError("unknown sweep axis: " + name);
    }
}

PointResult run_point(const ModelParams& params, const RunContext& ctx) {
    PointResult res;
    res.params = params;
    const bool analytic = ctx.mode == "analytic" || ctx.mode == "both";
    const bool simulate = ctx.mode == "simulate" || ctx.mode == "both";
    try {
        if (!analytic && !simulate) throw ValidationError("unknown mode: " + ctx.mode);
        params.validate();
        if (analytic) {
            StageTables tables = build_stage_tables(params, ctx.n_theta, ctx.l);
            KernelMatrix kernel = assemble_kernel(tables.rates, tables.tx, tables.grid);
            StationaryDistribution psi = stationary_distribution(kernel);
            Expectations e = expectations(psi, params, tables.rates, tables.grid);
            res.analytic = performance_metrics(e, params);
            res.row_defect = kernel.max_row_defect;
            res.doeblin = doeblin_mass(kernel);
            res.identity_defect = tables.rates.identity_defect;
            res.have_analytic = true;
        }
        if (simulate) {
            SimConfig sc;
            sc.params = params;
            sc.seed = ctx.seed;
            sc.replicas = ctx.replicas;
            sc.finalize();
            res.sim = estimate(sc);
            res.have_sim = true;
        }
        if (res.have_analytic && res.have_sim) {
            res.v_gap = std::abs(res.sim.v_p_hat - res.analytic.v_p) /
                        std::max(std::abs(res.sim.v_p_hat), 1e-300);
            res.c_gap = (res.analytic.c_p_defined && std::isfinite(res.sim.c_p_hat))
                            ? std::abs(res.sim.c_p_hat - res.analytic.c_p) /
                                  std::max(std::abs(res.sim.c_p_hat), 1e-300)
                            : std::numeric_limits<double>::quiet_NaN();
        }
    } catch (const ValidationError& e) {
        res.ok = false;
        res.error = e.what();
        res.error_kind = 1;
    } catch (const std::domain_error& e) {
        res.ok = false;
        res.error = e.what();
        res.error_kind = 1;
    } catch (const std::exception& e) {
        res.ok = false;
        res.error = e.what();
        res.error_kind = 2;
    }
    return res;
}

std::string csv_header(const RunContext& ctx) {
    std::string h = "lambda,v0,r0,theta_w,a,eccentricity";
    if (ctx.mode == "analytic" || ctx.mode == "both")
        h += ",v_p,c_p,c_p_defined,row_defect,doeblin,identity_defect";
    if (ctx.mode == "simulate" || ctx.mode == "both")
        h += ",v_p_hat,c_p_hat,v_p_ci,c_p_ci,stages,transmissions,zero_progress_replicas";
    if (ctx.mode == "both") h += ",v_gap,c_gap";
    return h + ",error";
}

std::string csv_row(const PointResult& r, const RunContext& ctx) {
    const ModelParams& p = r.params;
    std::string row = fmt(p.lambda);
    row += "," + fmt(p.v0);
    row += "," + fmt(p.r0);
    row += "," + fmt(p.direction_density.theta_w);
    row += "," + fmt(p.rule.a);
    row += "," + fmt(p.rule.eccentricity);
    if (ctx.mode == "analytic" || ctx.mode == "both") {
        row += "," + fmt(r.have_analytic ? r.analytic.v_p : std::nan(""));
        row += "," + fmt(r.have_analytic ? r.analytic.c_p : std::nan(""));
        row += ",";
        row += r.have_analytic ? (r.analytic.c_p_defined ? "1" : "0") : "0";
        row += "," + fmt(r.row_defect);
        row += "," + fmt(r.doeblin);
        row += "," + fmt(r.identity_defect);
    }
    if (ctx.mode == "simulate" || ctx.mode == "both") {
        row += "," + fmt(r.have_sim ? r.sim.v_p_hat : std::nan(""));
        row += "," + fmt(r.have_sim ? r.sim.c_p_hat : std::nan(""));
        row += "," + fmt(r.have_sim ? r.sim.v_p_half_width : std::nan(""));
        row += "," + fmt(r.have_sim ? r.sim.c_p_half_width : std::nan(""));
        row += "," + std::to_string(r.have_sim ? r.sim.stages : 0);
        row += "," + std::to_string(r.have_sim ? r.sim.transmissions : 0);
        row += "," + std::to_string(r.have_sim ? r.sim.zero_progress_replicas : 0);
    }
    if (ctx.mode == "both") {
        row += "," + fmt(r.v_gap);
        row += "," + fmt(r.c_gap);
    }
    row += "," + sanitize(r.error);
    return row;
}

int worker_count(int threads_requested, int jobs) {
    int w = threads_requested;
    int cap = 0;
    if (const char* env = std::getenv("DTN_THREADS")) cap = std::atoi(env);
    if (w <= 0) w = cap > 0 ? cap : static_cast<int>(std::thread::hardware_concurrency());
    else if (cap > 0) w = std::min(w, cap);
    return std::clamp(w, 1, std::max(1, jobs));
}

void run_sweep(const SweepSpec& spec, const RunContext& ctx, std::ostream& out) {
    if (spec.axis1.values.empty()) throw ValidationError("sweep axis1 needs values");

    ModelParams base = ctx.base;
    if (spec.force_circle) {
        if (!base.rule.is_ellipse)
            throw ValidationError("force_circle requires the built-in ellipse rule");
        base.rule = RoutingRule::ellipse(base.rule.a, 0.0);
    }

    const SweepAxis axis1 = sorted_axis(spec.axis1);
    std::optional<SweepAxis> axis2;
    if (spec.axis2) axis2 = sorted_axis(*spec.axis2);

    struct Job {
        ModelParams params;
        bool bad = false;
        std::string error;
    };
    std::vector<Job> jobs;
    for (double v1 : axis1.values) {
        const std::vector<double> inner = axis2 ? axis2->values : std::vector<double>{0.0};
        for (double v2 : inner) {
            Job job;
            job.params = base;
            try {
                apply_axis_value(job.params, axis1.name, v1);
                if (axis2) apply_axis_value(job.params, axis2->name, v2);
                if (spec.force_circle)
                    job.params.rule = RoutingRule::ellipse(job.params.rule.a, 0.0);
            } catch (const std::exception& e) {
                job.bad = true;
                job.error = e.what();
            }
            jobs.push_back(std::move(job));
        }
    }

    std::vector<PointResult> results(jobs.size());
    std::atomic<std::size_t> next{0};
    const int workers = worker_count(ctx.threads, static_cast<int>(jobs.size()));
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
            if (jobs[i].bad) {
                results[i].params = jobs[i].params;
                results[i].ok = false;
                results[i].error = jobs[i].error;
                results[i].error_kind = 1;
            } else {
                results[i] = run_point(jobs[i].params, ctx);
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < workers; ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }

    out << csv_header(ctx) << "\n";
    for (const PointResult& r : results) out << csv_row(r, ctx) << "\n";
}

}  // namespace dtn
