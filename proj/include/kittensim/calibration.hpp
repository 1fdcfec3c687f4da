#pragma once

// Calibration file: a JSON map of the guessed machine constants (pipeline
// throughputs and overhead costs). The file is non-authoritative; it exists
// so the cost-model equation stays exact while the guesses stay in one
// clearly-labeled place. Schema:
//
//   {
//     "pipeline_throughputs": {"tensor": 9.89e14, "alu": ..., "fma": ..., "xu": ...},
//     "block_setup_cost": 1e-6,
//     "sync_cost_per_barrier": 5e-8
//   }
//
// Missing keys keep the preset's defaults.

#include <cstdlib>
#include <fstream>
#include <string>

#include <json.hpp>

#include "kittensim/errors.hpp"
#include "kittensim/machine.hpp"

namespace kittensim {

inline void apply_calibration_json(MachineParams& params, const nlohmann::json& j) {
    if (j.contains("pipeline_throughputs")) {
        const auto& p = j.at("pipeline_throughputs");
        if (p.contains("tensor")) params.pipes.tensor = p.at("tensor").get<double>();
        if (p.contains("alu")) params.pipes.alu = p.at("alu").get<double>();
        if (p.contains("fma")) params.pipes.fma = p.at("fma").get<double>();
        if (p.contains("xu")) params.pipes.xu = p.at("xu").get<double>();
    }
    if (j.contains("block_setup_cost"))
        params.block_setup_cost = j.at("block_setup_cost").get<double>();
    if (j.contains("sync_cost_per_barrier"))
        params.sync_cost_per_barrier = j.at("sync_cost_per_barrier").get<double>();
    params.validate();
}

inline void load_calibration_file(MachineParams& params, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open calibration file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad calibration file " + path + ": " + e.what());
    }
    apply_calibration_json(params, j);
}

// Preset plus optional overrides from KITTENSIM_CALIBRATION (or an explicit
// path, which wins over the environment).
inline MachineParams calibrated_h100(const std::string& explicit_path = "") {
    MachineParams p = preset_h100();
    std::string path = explicit_path;
    if (path.empty()) {
        if (const char* env = std::getenv("KITTENSIM_CALIBRATION")) path = env;
    }
    if (!path.empty()) load_calibration_file(p, path);
    return p;
}

} // namespace kittensim
