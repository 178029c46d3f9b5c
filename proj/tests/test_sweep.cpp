#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dtn/errors.hpp"
#include "dtn/sweep.hpp"

using namespace dtn;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

long comma_count(const std::string& s) { return std::count(s.begin(), s.end(), ','); }

double field(const std::string& line, int index) {
    std::istringstream in(line);
    std::string cell;
    for (int i = 0; i <= index; ++i) std::getline(in, cell, ',');
    return std::stod(cell);
}

}  // namespace

TEST_CASE("built-in sweep presets") {
    SweepSpec fig4 = preset_sweep("fig4");
    CHECK(fig4.axis1.name == "a");
    CHECK(fig4.axis1.values == std::vector<double>{0.5, 1.0, 1.5, 2.0});
    REQUIRE(fig4.axis2.has_value());
    CHECK(fig4.axis2->name == "eccentricity");
    CHECK(fig4.axis2->values == std::vector<double>{0.0, 0.2, 0.4, 0.6, 0.8});
    CHECK_FALSE(fig4.force_circle);

    SweepSpec fig5 = preset_sweep("fig5");
    CHECK(fig5.axis1.name == "lambda");
    CHECK(fig5.axis1.values == std::vector<double>{0.25, 0.5, 1.0, 2.0, 4.0});
    REQUIRE(fig5.axis2.has_value());
    CHECK(fig5.axis2->name == "r0");

    SweepSpec fig6 = preset_sweep("fig6");
    CHECK(fig6.axis1.name == "theta_w");
    CHECK(fig6.axis1.values.size() == 4);
    CHECK(fig6.axis1.values.front() == doctest::Approx(kPi / 8).epsilon(1e-15));
    REQUIRE(fig6.axis2.has_value());
    CHECK(fig6.axis2->values == std::vector<double>{0.5, 1.0, 2.0, 4.0});
    CHECK(fig6.force_circle);

    CHECK_THROWS_AS(preset_sweep("fig7"), ValidationError);
}

TEST_CASE("axis application by name") {
    ModelParams p = default_params();

    apply_axis_value(p, "lambda", 2.5);
    CHECK(p.lambda == 2.5);
    apply_axis_value(p, "v0", 3.0);
    CHECK(p.v0 == 3.0);
    apply_axis_value(p, "r0", 0.5);
    CHECK(p.r0 == 0.5);
    apply_axis_value(p, "a", 1.5);
    CHECK(p.rule.a == 1.5);
    apply_axis_value(p, "eccentricity", 0.3);
    CHECK(p.rule.eccentricity == 0.3);

    // theta_w below pi/2 selects the windowed family, at pi/2 the uniform one.
    apply_axis_value(p, "theta_w", kPi / 4);
    CHECK(direction_density_eval(p.direction_density, kPi / 4) == 0.0);
    apply_axis_value(p, "theta_w", kPi / 2);
    CHECK(direction_density_eval(p.direction_density, kPi / 4) ==
          doctest::Approx(1 / (2 * kPi)).epsilon(1e-15));

    CHECK_THROWS_AS(apply_axis_value(p, "radius", 1.0), ValidationError);
}

TEST_CASE("sweep specification from a json file") {
    const std::string path = "sweep_spec_test.json";
    {
        std::ofstream out(path);
        out << R"({"axis1": {"name": "lambda", "values": [0.5, 1.0]},
                   "axis2": {"name": "r0", "values": [1.0, 2.0]},
                   "force_circle": true})";
    }
    SweepSpec spec = sweep_from_json_file(path);
    CHECK(spec.axis1.name == "lambda");
    CHECK(spec.axis1.values == std::vector<double>{0.5, 1.0});
    REQUIRE(spec.axis2.has_value());
    CHECK(spec.axis2->values == std::vector<double>{1.0, 2.0});
    CHECK(spec.force_circle);

    {
        std::ofstream out(path);
        out << R"({"axis1": {"name": "lambda", "values": [1.0]}, "extra": 3})";
    }
    CHECK_THROWS_AS(sweep_from_json_file(path), ValidationError);

    {
        std::ofstream out(path);
        out << R"({"axis2": {"name": "lambda", "values": [1.0]}})";
    }
    CHECK_THROWS_AS(sweep_from_json_file(path), ValidationError);

    {
        std::ofstream out(path);
        out << "not json";
    }
    CHECK_THROWS_AS(sweep_from_json_file(path), ValidationError);

    std::remove(path.c_str());
    CHECK_THROWS_AS(sweep_from_json_file(path), ValidationError);
}

TEST_CASE("csv headers per mode") {
    RunContext ctx;
    ctx.mode = "analytic";
    CHECK(csv_header(ctx) ==
          "lambda,v0,r0,theta_w,a,eccentricity,"
          "v_p,c_p,c_p_defined,row_defect,doeblin,identity_defect,error");
    ctx.mode = "simulate";
    CHECK(csv_header(ctx) ==
          "lambda,v0,r0,theta_w,a,eccentricity,"
          "v_p_hat,c_p_hat,v_p_ci,c_p_ci,stages,transmissions,zero_progress_replicas,error");
    ctx.mode = "both";
    CHECK(csv_header(ctx) ==
          "lambda,v0,r0,theta_w,a,eccentricity,"
          "v_p,c_p,c_p_defined,row_defect,doeblin,identity_defect,"
          "v_p_hat,c_p_hat,v_p_ci,c_p_ci,stages,transmissions,zero_progress_replicas,"
          "v_gap,c_gap,error");
}

TEST_CASE("single analytic point") {
    RunContext ctx;
    PointResult r = run_point(default_params(), ctx);

    CHECK(r.ok);
    CHECK(r.error.empty());
    CHECK(r.have_analytic);
    CHECK_FALSE(r.have_sim);
    CHECK(r.analytic.v_p == doctest::Approx(1.60961457761).epsilon(1e-9));
    CHECK(r.analytic.c_p == doctest::Approx(0.708336200157).epsilon(1e-9));
    CHECK(r.row_defect < 1e-10);
    CHECK(r.doeblin == doctest::Approx(0.2861760).epsilon(1e-6));
    CHECK(r.identity_defect < 1e-12);

    // The CSV row always matches the header's field count, error or not.
    std::string row = csv_row(r, ctx);
    CHECK(comma_count(row) == comma_count(csv_header(ctx)));
}

TEST_CASE("model errors are captured in the result row") {
    RunContext ctx;
    ModelParams bad = default_params();
    bad.rule.a = -1;
    PointResult r = run_point(bad, ctx);

    CHECK_FALSE(r.ok);
    CHECK(r.error_kind == 1);
    CHECK_FALSE(r.error.empty());
    CHECK_FALSE(r.have_analytic);

    std::string row = csv_row(r, ctx);
    CHECK(comma_count(row) == comma_count(csv_header(ctx)));
    CHECK(row.find('"') == std::string::npos);
    CHECK(row.find('\n') == std::string::npos);
}

TEST_CASE("two-axis sweep emits ordered deterministic rows") {
    SweepSpec spec;
    spec.axis1 = {"lambda", {0.5, 1.0}};
    spec.axis2 = SweepAxis{"r0", {1.0, 2.0}};

    RunContext ctx;
    ctx.threads = 1;
    std::ostringstream out1;
    run_sweep(spec, ctx, out1);

    std::vector<std::string> rows = lines_of(out1.str());
    REQUIRE(rows.size() == 5);
    CHECK(rows[0] == csv_header(ctx));

    // Axis order: lambda ascending, r0 ascending within it.
    CHECK(field(rows[1], 0) == 0.5);
    CHECK(field(rows[1], 2) == 1.0);
    CHECK(field(rows[2], 0) == 0.5);
    CHECK(field(rows[2], 2) == 2.0);
    CHECK(field(rows[3], 0) == 1.0);
    CHECK(field(rows[4], 0) == 1.0);
    CHECK(field(rows[4], 2) == 2.0);

    // The default point appears with its known speed.
    CHECK(field(rows[3], 6) == doctest::Approx(1.60961457761).epsilon(1e-9));

    // Worker count must not change the output.
    ctx.threads = 2;
    std::ostringstream out2;
    run_sweep(spec, ctx, out2);
    CHECK(out2.str() == out1.str());
}

TEST_CASE("worker count resolution") {
    const char* saved = std::getenv("DTN_THREADS");
    std::string saved_value = saved ? saved : "";
    ::unsetenv("DTN_THREADS");

    CHECK(worker_count(4, 8) == 4);
    CHECK(worker_count(16, 2) == 2);  // capped by the job count
    CHECK(worker_count(0, 1) == 1);
    CHECK(worker_count(-3, 5) >= 1);
    int hw = worker_count(0, 64);
    CHECK(hw >= 1);
    CHECK(hw <= 64);

    ::setenv("DTN_THREADS", "2", 1);
    CHECK(worker_count(0, 8) == 2);
    ::setenv("DTN_THREADS", "0", 1);
    CHECK(worker_count(0, 8) >= 1);

    if (saved)
        ::setenv("DTN_THREADS", saved_value.c_str(), 1);
    else
        ::unsetenv("DTN_THREADS");
}
