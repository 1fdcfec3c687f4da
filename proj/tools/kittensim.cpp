// kittensim command-line tool: layout audits, kernel runs with oracle
// checks, pipeline simulations, grid/L2 studies and cost estimates, all as
// reproducible JSON/CSV reports.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "kittensim/report.hpp"

using namespace kittensim;

namespace {

struct OutputOptions {
    std::string format = "json";
    std::string out_path;
};

void add_output_options(CLI::App* cmd, OutputOptions& out) {
    cmd->add_option("--format", out.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
    cmd->add_option("--out", out.out_path, "Write the report to a file instead of stdout");
}

int emit(const ReportEnvelope& env, const OutputOptions& out, const std::string& csv = "") {
    std::string payload;
    if (out.format == "csv" && !csv.empty())
        payload = csv;
    else
        payload = env.to_json().dump(2) + "\n";
    if (out.out_path.empty()) {
        std::cout << payload;
    } else {
        std::ofstream f(out.out_path);
        if (!f) {
            std::cerr << "cannot open " << out.out_path << "\n";
            return 2;
        }
        f << payload;
    }
    return env.pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"kittensim: tile-layout, pipeline and grid modeling toolkit"};
    app.require_subcommand(1);

    // audit-layout
    AuditLayoutRequest audit;
    OutputOptions audit_out;
    auto* audit_cmd = app.add_subcommand("audit-layout", "Bank-conflict analysis of a shared tile");
    audit_cmd->add_option("--rows", audit.rows, "Tile rows")->required();
    audit_cmd->add_option("--cols", audit.cols, "Tile cols")->required();
    std::string audit_dtype = "bf16";
    audit_cmd->add_option("--dtype", audit_dtype, "fp32 or bf16");
    audit_cmd->add_option("--mode", audit.mode,
                          "naive|padded|rowxor|sw32|sw64|sw128 (default: auto-select)");
    audit_cmd->add_option("--pattern", audit.pattern, "tensorcore|row|column");
    audit_cmd->add_option("--pad-bytes", audit.pad_bytes, "Pad per row for --mode padded");
    add_output_options(audit_cmd, audit_out);

    // run-kernel
    RunKernelRequest run;
    OutputOptions run_out;
    auto* run_cmd = app.add_subcommand("run-kernel", "Execute a kernel and compare to its oracle");
    run_cmd->add_option("kernel", run.kernel, "gemm|attention|rotary")->required();
    run_cmd->add_option("--seed", run.seed, "RNG seed");
    run_cmd->add_option("--stages", run.stages, "Input pipe stages (0 = default)");
    run_cmd->add_option("--m", run.m, "GEMM M");
    run_cmd->add_option("--n", run.n, "GEMM N (also attention sequence length)");
    run_cmd->add_option("--k", run.k, "GEMM K");
    run_cmd->add_option("--m-block", run.m_block, "GEMM row-tile multiplier");
    run_cmd->add_option("--n-block", run.n_block, "GEMM col-tile multiplier");
    run_cmd->add_option("--super-m", run.super_m, "GEMM supergroup height");
    run_cmd->add_option("--dtype", run.dtype, "fp32|bf16 (gemm)");
    run_cmd->add_option("--batches", run.batches, "Batch count");
    run_cmd->add_option("--heads", run.heads, "Head count");
    run_cmd->add_option("--d", run.head_dim, "Attention head dim (64|128)");
    run_cmd->add_option("--kv-rows", run.kv_rows, "Attention KV tile rows (0 = stock tiling)");
    run_cmd->add_option("--workers", run.workers, "Attention consumer workers");
    run_cmd->add_option("--rotary-seq", run.rotary_seq, "Rotary sequence length");
    run_cmd->add_option("--headdim", run.rotary_head_dim, "Rotary head dim");
    run_cmd->add_flag("--identity-tables", run.identity_tables, "Rotary: sin=0, cos=1");
    add_output_options(run_cmd, run_out);

    // simulate
    SimulateRequest sim;
    OutputOptions sim_out;
    auto* sim_cmd = app.add_subcommand("simulate", "Timed pipeline / occupancy simulation");
    sim_cmd->add_option("profile", sim.profile_path, "Scenario JSON (pipeline or occupancy)")
        ->required();
    sim_cmd->add_option("--stages", sim.stages, "Override the stage list");
    sim_cmd->add_option("--trace-out", sim.trace_out_prefix,
                        "Prefix for Chrome trace files, one per point");
    sim_cmd->add_option("--parallel", sim.parallel,
                        "Shard independent points across N threads (order-stable output)");
    add_output_options(sim_cmd, sim_out);

    // grid
    std::string grid_scenario;
    OutputOptions grid_out;
    auto* grid_cmd = app.add_subcommand("grid", "Block-order L2 replay / persistence study");
    grid_cmd->add_option("scenario", grid_scenario, "Scenario JSON")->required();
    add_output_options(grid_cmd, grid_out);

    // cost
    std::string cost_profile, cost_calibration;
    OutputOptions cost_out;
    auto* cost_cmd = app.add_subcommand("cost", "Evaluate the max-form cost model");
    cost_cmd->add_option("profile", cost_profile, "Work-profile JSON")->required();
    cost_cmd->add_option("--calibration", cost_calibration,
                         "Calibration file (overrides KITTENSIM_CALIBRATION)");
    add_output_options(cost_cmd, cost_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (audit_cmd->parsed()) {
            audit.dtype = dtype_from_string(audit_dtype);
            return emit(cmd_audit_layout(audit), audit_out);
        }
        if (run_cmd->parsed()) {
            // --n doubles as the attention sequence length
            if (run.kernel == "attention" && run_cmd->count("--n")) run.seq = run.n;
            return emit(cmd_run_kernel(run), run_out);
        }
        if (sim_cmd->parsed()) {
            const ReportEnvelope env = cmd_simulate(sim);
            return emit(env, sim_out, simulate_to_csv(env));
        }
        if (grid_cmd->parsed()) return emit(cmd_grid(grid_scenario), grid_out);
        if (cost_cmd->parsed()) return emit(cmd_cost(cost_profile, cost_calibration), cost_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
