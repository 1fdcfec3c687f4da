#pragma once

// Scenario files: JSON descriptions of grid/L2 replays, persistent-launch
// sweeps, pipeline latency profiles and occupancy studies. These drive the
// `grid` and `simulate` commands and the shipped study corpus in
// data/scenarios/.

#include <array>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kittensim/errors.hpp"
#include "kittensim/grid.hpp"
#include "kittensim/lcsf.hpp"

namespace kittensim {

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scenario file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

inline L2Config l2_config_from_json(const nlohmann::json& j) {
    L2Config cfg;
    cfg.capacity_bytes = j.at("capacity_bytes").get<std::uint64_t>();
    cfg.line_bytes = j.value("line_bytes", 128ull);
    cfg.validate();
    return cfg;
}

inline LatencyProfile latency_profile_from_json(const nlohmann::json& j) {
    LatencyProfile lat;
    lat.load_latency = j.value("load_latency", lat.load_latency);
    lat.load_issue_cost = j.value("load_issue_cost", lat.load_issue_cost);
    lat.async_load = j.value("async_load", lat.async_load);
    lat.compute_latency = j.value("compute_latency", lat.compute_latency);
    lat.store_latency = j.value("store_latency", lat.store_latency);
    lat.store_issue_cost = j.value("store_issue_cost", lat.store_issue_cost);
    lat.async_store = j.value("async_store", lat.async_store);
    lat.finish_latency = j.value("finish_latency", lat.finish_latency);
    lat.work_per_compute = j.value("work_per_compute", lat.work_per_compute);
    lat.validate();
    return lat;
}

inline OccupancyScenario occupancy_scenario_from_json(const nlohmann::json& j) {
    OccupancyScenario sc;
    sc.total_tiles = j.value("total_tiles", sc.total_tiles);
    sc.input_pipe_stages = j.value("input_pipe_stages", sc.input_pipe_stages);
    sc.producers = j.value("producers", sc.producers);
    sc.load_base = j.value("load_base", sc.load_base);
    sc.load_per_tile = j.value("load_per_tile", sc.load_per_tile);
    sc.load_issue_cost = j.value("load_issue_cost", sc.load_issue_cost);
    sc.compute_latency = j.value("compute_latency", sc.compute_latency);
    sc.finish_latency = j.value("finish_latency", sc.finish_latency);
    sc.input_block_bytes_per_tile =
        j.value("input_block_bytes_per_tile", sc.input_block_bytes_per_tile);
    if (j.contains("worker_counts"))
        sc.worker_counts = j.at("worker_counts").get<std::vector<int>>();
    if (j.contains("resources")) {
        const auto& r = j.at("resources");
        sc.resources.regs_per_worker = r.value("regs_per_worker", 0.0);
        sc.resources.regs_capacity = r.value("regs_capacity", 0.0);
        sc.resources.smem_per_worker = r.value("smem_per_worker", 0.0);
        sc.resources.smem_capacity = r.value("smem_capacity", 0.0);
        sc.resources.penalty_coeff = r.value("penalty_coeff", 0.0);
    }
    if (sc.worker_counts.empty())
        throw ConfigError("occupancy scenario: worker_counts must be nonempty");
    return sc;
}

// --- grid scenario runners ---------------------------------------------------

struct GemmL2Result {
    TrafficReport supergrouped;
    TrafficReport row_major;
    int super_m = 0;
};

inline GemmL2Result run_gemm_l2_scenario(const nlohmann::json& j) {
    GemmFootprintParams p;
    p.tiles_r = j.at("tiles_r").get<int>();
    p.tiles_c = j.at("tiles_c").get<int>();
    p.tiles_k = j.at("tiles_k").get<int>();
    p.tile_bytes = j.value("tile_bytes", 8192ull);
    const int super_m = j.value("super_m", 8);
    const int wave = j.value("wave_width", 1);
    const L2Config cfg = l2_config_from_json(j.at("l2"));
    GemmL2Result out;
    out.super_m = super_m;
    out.supergrouped =
        simulate_l2(gemm_footprints(p, supergroup_order(p.tiles_r, p.tiles_c, super_m)), cfg, wave);
    out.row_major = simulate_l2(gemm_footprints(p, row_major_order(p.tiles_r, p.tiles_c)), cfg, wave);
    return out;
}

struct AttentionL2Result {
    std::vector<std::array<std::string, 3>> orders;
    std::vector<TrafficReport> reports;
};

inline AttentionL2Result run_attention_l2_scenario(const nlohmann::json& j) {
    AttentionFootprintParams p;
    p.batches = j.at("batches").get<int>();
    p.heads = j.at("heads").get<int>();
    p.seq_blocks = j.at("seq_blocks").get<int>();
    p.q_tile_bytes = j.value("q_tile_bytes", 16384ull);
    p.kv_bytes_per_head = j.at("kv_bytes_per_head").get<std::uint64_t>();
    p.kv_tile_bytes = j.value("kv_tile_bytes", 49152ull);
    const int wave = j.value("wave_width", 1);
    const L2Config cfg = l2_config_from_json(j.at("l2"));

    AttentionL2Result out;
    for (const auto& axes_json : j.at("orders")) {
        std::array<std::string, 3> names;
        std::array<AttnAxis, 3> axes{};
        for (int i = 0; i < 3; ++i) {
            names[static_cast<std::size_t>(i)] = axes_json.at(i).get<std::string>();
            axes[static_cast<std::size_t>(i)] =
                attn_axis_from_string(names[static_cast<std::size_t>(i)]);
        }
        const auto order = attention_order(p.batches, p.heads, p.seq_blocks, axes);
        out.orders.push_back(names);
        out.reports.push_back(simulate_l2(attention_footprints(p, order), cfg, wave));
    }
    return out;
}

struct KSweepPoint {
    int k = 0;
    double per_task_time = 0.0;
    double makespan_persistent = 0.0;
    double makespan_relaunch = 0.0;
};

inline std::vector<KSweepPoint> run_persistent_ksweep(const nlohmann::json& j) {
    const int num_sms = j.value("num_sms", 132);
    const int num_tasks = j.at("num_tasks").get<int>();
    const double setup = j.at("setup_cost").get<double>();
    const double per_k = j.at("per_task_time_per_k").get<double>();
    std::vector<KSweepPoint> out;
    for (const int k : j.at("k_values").get<std::vector<int>>()) {
        KSweepPoint pt;
        pt.k = k;
        pt.per_task_time = per_k * k;
        const PersistentAssignment pa = persistent_assign(num_tasks, num_sms, pt.per_task_time, setup);
        pt.makespan_persistent = pa.makespan_persistent;
        pt.makespan_relaunch = pa.makespan_relaunch;
        out.push_back(pt);
    }
    return out;
}

} // namespace kittensim
