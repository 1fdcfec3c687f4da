#pragma once

// Machine-parameter presets and the max-form cost model.
//
// The model splits kernel time into four memory terms (HBM, L2, L1, shared),
// four compute terms (tensor, ALU, FMA, XU) and two overhead terms (block
// setup, barrier sync):
//
//   overall = max(memory terms, compute terms) + setup + sync
//
// Memory terms are bytes / bandwidth, compute terms are ops / throughput.
// This is the ideal-overlap case; the sum of all terms is reported alongside
// as the no-overlap ceiling, and real kernels fall somewhere in between.

#include <array>
#include <cstdint>
#include <string>

#include "kittensim/errors.hpp"

namespace kittensim {

enum class CostTerm {
    Tensor,
    Alu,
    Fma,
    Xu,
    Hbm,
    L2,
    L1,
    Shared,
};

inline const char* to_string(CostTerm t) {
    switch (t) {
        case CostTerm::Tensor: return "Tensor";
        case CostTerm::Alu:    return "ALU";
        case CostTerm::Fma:    return "FMA";
        case CostTerm::Xu:     return "XU";
        case CostTerm::Hbm:    return "HBM";
        case CostTerm::L2:     return "L2";
        case CostTerm::L1:     return "L1";
        case CostTerm::Shared: return "Shared";
    }
    return "?";
}

// ops/s per execution pipeline. The hardware vendor publishes no single
// authoritative set of these for the modeled chip; defaults come from the
// shipped calibration file and are non-authoritative.
struct PipelineThroughputs {
    double tensor = 0.0;
    double alu = 0.0;
    double fma = 0.0;
    double xu = 0.0;
};

struct MachineParams {
    int num_sms = 0;
    std::uint64_t smem_bytes_per_sm = 0;
    double smem_bw = 0.0; // bytes/s, chip-aggregate
    std::uint64_t l2_bytes = 0;
    double l2_bw = 0.0;
    std::uint64_t hbm_bytes = 0;
    double hbm_bw = 0.0;
    double l1_bw = 0.0; // L1 reuses the shared-memory fabric when unset
    int num_banks = 0;
    int bank_word_bytes = 0;
    int max_regs_per_thread = 0;
    int max_warps_per_sm = 0;
    PipelineThroughputs pipes;
    double block_setup_cost = 0.0;      // seconds per block launch
    double sync_cost_per_barrier = 0.0; // seconds per barrier

    void validate() const {
        if (num_sms <= 0 || num_banks <= 0 || bank_word_bytes <= 0 ||
            max_regs_per_thread <= 0 || max_warps_per_sm <= 0)
            throw ConfigError("MachineParams: counts must be strictly positive");
        if (smem_bw <= 0 || l2_bw <= 0 || hbm_bw <= 0 || l1_bw <= 0)
            throw ConfigError("MachineParams: bandwidths must be strictly positive");
        if (pipes.tensor <= 0 || pipes.alu <= 0 || pipes.fma <= 0 || pipes.xu <= 0)
            throw ConfigError("MachineParams: pipeline throughputs must be strictly positive");
        if (block_setup_cost < 0 || sync_cost_per_barrier < 0)
            throw ConfigError("MachineParams: overhead costs must be nonnegative");
    }
};

// Work quantities feeding the cost terms. All fields are totals for the
// whole kernel, not per block.
struct WorkProfile {
    double bytes_hbm = 0.0;
    double bytes_l2 = 0.0;
    double bytes_l1 = 0.0;
    double bytes_shared = 0.0;
    double ops_tensor = 0.0;
    double ops_alu = 0.0;
    double ops_fma = 0.0;
    double ops_xu = 0.0;
    double num_setups = 0.0;
    double num_syncs = 0.0;
};

struct CostBreakdown {
    double c_hbm = 0.0;
    double c_l2 = 0.0;
    double c_l1 = 0.0;
    double c_shared = 0.0;
    double c_tensor = 0.0;
    double c_alu = 0.0;
    double c_fma = 0.0;
    double c_xu = 0.0;
    double c_setup = 0.0;
    double c_sync = 0.0;
    double overall = 0.0;   // max(mem, compute) + setup + sync
    double sum_form = 0.0;  // sum of all eight terms + overheads (no-overlap ceiling)
    CostTerm bound_by = CostTerm::Tensor;

    double term(CostTerm t) const {
        switch (t) {
            case CostTerm::Tensor: return c_tensor;
            case CostTerm::Alu:    return c_alu;
            case CostTerm::Fma:    return c_fma;
            case CostTerm::Xu:     return c_xu;
            case CostTerm::Hbm:    return c_hbm;
            case CostTerm::L2:     return c_l2;
            case CostTerm::L1:     return c_l1;
            case CostTerm::Shared: return c_shared;
        }
        return 0.0;
    }
};

// H100 SXM preset. Capacity/bandwidth/count constants are the published
// chip figures; pipeline throughputs and overhead costs are calibration
// defaults (see data/calibration/h100-default.json).
inline MachineParams preset_h100() {
    MachineParams p;
    p.num_sms = 132;
    p.smem_bytes_per_sm = 227ull * 1024;     // 227 KiB
    p.smem_bw = 33e12;
    p.l2_bytes = 50ull * 1024 * 1024;        // 50 MiB
    p.l2_bw = 12e12;
    p.hbm_bytes = 80ull * 1024 * 1024 * 1024; // 80 GiB
    p.hbm_bw = 3e12;
    p.l1_bw = 33e12;
    p.num_banks = 32;
    p.bank_word_bytes = 4;
    p.max_regs_per_thread = 255;
    p.max_warps_per_sm = 64;
    // Calibration defaults (non-authoritative): dense bf16 tensor peak,
    // fp32 FMA pipe, half-rate ALU, SFU-class XU, ~1us per block launch,
    // tens of ns per block-wide barrier.
    p.pipes.tensor = 989e12;
    p.pipes.alu = 33e12;
    p.pipes.fma = 67e12;
    p.pipes.xu = 4e12;
    p.block_setup_cost = 1e-6;
    p.sync_cost_per_barrier = 5e-8;
    return p;
}

inline CostBreakdown estimate_cost(const WorkProfile& w, const MachineParams& m) {
    m.validate();
    const double fields[] = {w.bytes_hbm, w.bytes_l2,  w.bytes_l1, w.bytes_shared,
                             w.ops_tensor, w.ops_alu,  w.ops_fma,  w.ops_xu,
                             w.num_setups, w.num_syncs};
    for (double f : fields)
        if (f < 0.0) throw ConfigError("WorkProfile: fields must be nonnegative");

    CostBreakdown c;
    c.c_hbm = w.bytes_hbm / m.hbm_bw;
    c.c_l2 = w.bytes_l2 / m.l2_bw;
    c.c_l1 = w.bytes_l1 / m.l1_bw;
    c.c_shared = w.bytes_shared / m.smem_bw;
    c.c_tensor = w.ops_tensor / m.pipes.tensor;
    c.c_alu = w.ops_alu / m.pipes.alu;
    c.c_fma = w.ops_fma / m.pipes.fma;
    c.c_xu = w.ops_xu / m.pipes.xu;
    c.c_setup = w.num_setups * m.block_setup_cost;
    c.c_sync = w.num_syncs * m.sync_cost_per_barrier;

    // Fixed enumeration order; first term attaining the max wins ties.
    constexpr CostTerm order[] = {CostTerm::Tensor, CostTerm::Alu, CostTerm::Fma,
                                  CostTerm::Xu,     CostTerm::Hbm, CostTerm::L2,
                                  CostTerm::L1,     CostTerm::Shared};
    double best = -1.0;
    double sum = 0.0;
    for (CostTerm t : order) {
        const double v = c.term(t);
        sum += v;
        if (v > best) {
            best = v;
            c.bound_by = t;
        }
    }
    c.overall = best + c.c_setup + c.c_sync;
    c.sum_form = sum + c.c_setup + c.c_sync;
    return c;
}

} // namespace kittensim
