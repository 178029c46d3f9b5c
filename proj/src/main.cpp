#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dtn/chain_solver.hpp"
#include "dtn/errors.hpp"
#include "dtn/stage_analysis.hpp"
#include "dtn/sweep.hpp"

namespace {

std::string fmtd(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

// One file per table, rows of flattened indices + value.
void dump_tables(const dtn::StageTables& t, const std::string& prefix) {
    auto open = [&](const std::string& name) {
        std::ofstream f(prefix + "_" + name + ".csv");
        if (!f) throw dtn::ValidationError("cannot write table dump: " + prefix + "_" + name);
        return f;
    };
    {
        auto f = open("i1");
        f << "i,value\n";
        for (int i = 0; i < t.grid.n_theta; ++i) f << i << "," << fmtd(t.speed.i1[i]) << "\n";
    }
    {
        auto f = open("i2");
        f << "k,value\n";
        for (int k = 0; k < t.grid.m; ++k) f << k << "," << fmtd(t.speed.i2[k]) << "\n";
    }
    {
        auto f = open("i3");
        f << "i,value\n";
        for (int i = 0; i < t.grid.n_theta; ++i) f << i << "," << fmtd(t.speed.i3[i]) << "\n";
    }
    {
        auto f = open("i4");
        f << "i,j,value\n";
        for (int i = 0; i < t.grid.n_theta; ++i)
            for (int j = 0; j < t.grid.n_theta; ++j)
                f << i << "," << j << "," << fmtd(t.speed.i4(i, j)) << "\n";
    }
    {
        auto f = open("en");
        f << "i,k,value\n";
        for (int i = 0; i < t.grid.n_theta; ++i)
            for (int k = 0; k < t.grid.m; ++k)
                f << i << "," << k << "," << fmtd(t.tx.en(i, k)) << "\n";
    }
    {
        auto f = open("pe");
        f << "i,k,value\n";
        for (int i = 0; i < t.grid.n_theta; ++i)
            for (int k = 0; k < t.grid.m; ++k)
                f << i << "," << k << "," << fmtd(t.tx.pe(i, k)) << "\n";
    }
    {
        auto f = open("rate_a");
        f << "i,j,value\n";
        for (int i = 0; i < t.grid.n_theta; ++i)
            for (int j = 0; j < t.grid.n_theta; ++j)
                f << i << "," << j << "," << fmtd(t.rates.r_a(i, j)) << "\n";
    }
    {
        auto f = open("rate_b");
        f << "i,j,value\n";
        for (int i = 0; i < t.grid.n_theta; ++i)
            for (int j = 0; j < t.grid.n_theta; ++j)
                f << i << "," << j << "," << fmtd(t.rates.r_b(i, j)) << "\n";
    }
    {
        auto f = open("rate_c");
        f << "i,j,value\n";
        for (int i = 0; i < t.grid.n_theta; ++i)
            for (int j = 0; j < t.grid.n_theta; ++j)
                f << i << "," << j << "," << fmtd(t.rates.r_c(i, j)) << "\n";
    }
    {
        auto f = open("rate_dhat");
        f << "i,j,k,value\n";
        for (int i = 0; i < t.grid.n_theta; ++i)
            for (int j = 0; j < t.grid.n_theta; ++j)
                for (int k = 0; k < t.grid.m; ++k)
                    if (t.rates.r_dhat[i](j, k) != 0)
                        f << i << "," << j << "," << k << ","
                          << fmtd(t.rates.r_dhat[i](j, k)) << "\n";
    }
    {
        auto f = open("r_total");
        f << "i,value\n";
        for (int i = 0; i < t.grid.n_theta; ++i) f << i << "," << fmtd(t.rates.r_total[i]) << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mobile wireless DTN packet-speed/cost model: analytic engine and simulator"};

    std::string config_path, sweep_arg, out_path;
    dtn::RunContext ctx;
    bool dump = false, trace = false;

    app.add_option("--config", config_path, "JSON parameter file (defaults used if omitted)");
    app.add_option("--mode", ctx.mode, "analytic | simulate | both")
        ->check(CLI::IsMember({"analytic", "simulate", "both"}));
    app.add_option("--sweep", sweep_arg, "preset name (fig4|fig5|fig6) or sweep JSON file");
    app.add_option("--out", out_path, "output CSV path (stdout if omitted)");
    app.add_option("--seed", ctx.seed, "simulation seed");
    app.add_option("--grid-n", ctx.n_theta, "direction cells N")->check(CLI::PositiveNumber);
    app.add_option("--grid-l", ctx.l, "spatial lattice cells per axis L")
        ->check(CLI::PositiveNumber);
    app.add_option("--replicas", ctx.replicas, "simulation replicas")
        ->check(CLI::PositiveNumber);
    app.add_option("--threads", ctx.threads, "worker threads (DTN_THREADS caps)");
    app.add_flag("--dump-tables", dump, "write per-table CSV dumps next to --out");
    app.add_flag("--trace", trace, "stream simulator events to stderr");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 1 : 0;
    }

    try {
        if (!config_path.empty()) ctx.base = dtn::params_from_json_file(config_path);

        std::ofstream file_out;
        if (!out_path.empty()) {
            file_out.open(out_path);
            if (!file_out) throw dtn::ValidationError("cannot open output path: " + out_path);
        }
        std::ostream& out = out_path.empty() ? std::cout : file_out;

        const std::string dump_prefix =
            out_path.empty() ? "dtn_tables" : out_path.substr(0, out_path.find_last_of('.'));

        if (!sweep_arg.empty()) {
            dtn::SweepSpec spec;
            if (sweep_arg == "fig4" || sweep_arg == "fig5" || sweep_arg == "fig6")
                spec = dtn::preset_sweep(sweep_arg);
            else
                spec = dtn::sweep_from_json_file(sweep_arg);
            dtn::run_sweep(spec, ctx, out);
            return 0;
        }

        if (dump && (ctx.mode == "analytic" || ctx.mode == "both")) {
            dtn::StageTables tables = dtn::build_stage_tables(ctx.base, ctx.n_theta, ctx.l);
            dump_tables(tables, dump_prefix);
        }

        dtn::PointResult res;
        if (trace && ctx.mode == "simulate") {
            dtn::SimConfig sc;
            sc.params = ctx.base;
            sc.seed = ctx.seed;
            sc.replicas = ctx.replicas;
            sc.trace = &std::cerr;  // estimate() runs traced replicas sequentially
            sc.finalize();
            res.params = ctx.base;
            res.sim = dtn::estimate(sc);
            res.have_sim = true;
        } else {
            res = dtn::run_point(ctx.base, ctx);
        }

        out << dtn::csv_header(ctx) << "\n" << dtn::csv_row(res, ctx) << "\n";
        if (!res.ok) {
            std::cerr << "error: " << res.error << "\n";
            return res.error_kind == 1 ? 1 : 2;
        }
        return 0;
    } catch (const dtn::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const dtn::NumericGateError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
