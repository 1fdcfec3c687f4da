#pragma once

// The worked kernels, expressed as LCSF kernel specs over the tile
// operations: a supergrouped block-tiled GEMM, non-causal attention forward
// with streaming (online) softmax, and rotary position embedding.
//
// All three bind their global tensors at construction; running them through
// execute_functional materializes outputs in those tensors. Numerics are
// independent of pipeline depth, worker interleaving and task order.

#include <algorithm>
#include <memory>
#include <vector>

#include "kittensim/grid.hpp"
#include "kittensim/lcsf.hpp"
#include "kittensim/tiles.hpp"

namespace kittensim {

// --- GEMM -------------------------------------------------------------------

struct GemmConfig {
    int m = 0;
    int n = 0;
    int k = 0;
    int m_block = 2;  // consumer row-tile multiplier (and consumer count)
    int n_block = 4;  // output column-tile multiplier
    int super_m = 12; // launch-order supergroup height
    Dtype dtype = Dtype::Fp32;

    static constexpr int kBaseTile = 64;

    int r_blocks() const { return m / (kBaseTile * m_block); }
    int c_blocks() const { return n / (kBaseTile * n_block); }
    int k_tiles() const { return k / kBaseTile; }

    void validate() const {
        if (m <= 0 || n <= 0 || k <= 0 || m % 64 || n % 64 || k % 64)
            throw ConfigError("GemmConfig: extents must be positive multiples of 64");
        if (m_block < 1 || n_block < 1 || super_m < 1)
            throw ConfigError("GemmConfig: block multipliers must be >= 1");
        if (m % (kBaseTile * m_block) || n % (kBaseTile * n_block))
            throw ConfigError("GemmConfig: extents must divide into consumer blocks");
    }
};

struct GemmGlobals {
    GlobalTensor a; // {1, 1, M, K}
    GlobalTensor b; // {1, 1, K, N}
    GlobalTensor c; // {1, 1, M, N}

    GemmGlobals(const GemmConfig& cfg)
        : a(1, 1, cfg.m, cfg.k, cfg.dtype),
          b(1, 1, cfg.k, cfg.n, cfg.dtype),
          c(1, 1, cfg.m, cfg.n, cfg.dtype) {}
};

namespace detail {

struct GemmCommon {
    int row_block = 0;
    int col_block = 0;
};

struct GemmInput {
    std::vector<SharedTileHandle> a; // m_block tiles, 64 x 64
    std::vector<SharedTileHandle> b; // n_block tiles, 64 x 64
};

} // namespace detail

// Each task computes one (64*m_block) x (64*n_block) block of C, walking K in
// 64-wide panels; consumer w owns output row chunk w. Task order follows the
// supergrouped launch sequence.
inline KernelSpec gemm_kernel(const GemmConfig& cfg, std::shared_ptr<GemmGlobals> g) {
    cfg.validate();
    if (!g) throw ConfigError("gemm_kernel: missing globals");
    const auto order = supergroup_order(cfg.r_blocks(), cfg.c_blocks(), cfg.super_m);
    constexpr int base = GemmConfig::kBaseTile;
    const int elem = dtype_bytes(cfg.dtype);

    KernelSpec spec;
    spec.name = "gemm";
    spec.required_consumers = cfg.m_block;
    spec.input_block_bytes =
        static_cast<std::size_t>(cfg.m_block + cfg.n_block) * base * base * elem;
    spec.make_common = [order](int task_id) {
        detail::GemmCommon common;
        if (task_id >= 0 && task_id < static_cast<int>(order.size())) {
            common.row_block = order[static_cast<std::size_t>(task_id)].row;
            common.col_block = order[static_cast<std::size_t>(task_id)].col;
        }
        return std::any{common};
    };
    spec.common_setup = [order, cfg](int task_id, std::any&) {
        return task_id < static_cast<int>(order.size()) ? cfg.k_tiles() : -1;
    };
    spec.make_input_block = [cfg] {
        constexpr int b = GemmConfig::kBaseTile;
        detail::GemmInput in;
        in.a.reserve(static_cast<std::size_t>(cfg.m_block));
        in.b.reserve(static_cast<std::size_t>(cfg.n_block));
        for (int i = 0; i < cfg.m_block; ++i) in.a.emplace_back(cfg.dtype, b, b);
        for (int j = 0; j < cfg.n_block; ++j) in.b.emplace_back(cfg.dtype, b, b);
        return std::any{std::move(in)};
    };
    spec.make_consumer_state = [cfg](int, std::any&) {
        constexpr int b = GemmConfig::kBaseTile;
        return std::any{Tile(Dtype::Fp32, b, b * cfg.n_block)};
    };
    spec.load = [cfg, g](LoadArgs& a) {
        auto& in = *std::any_cast<detail::GemmInput>(a.input);
        const auto& common = *std::any_cast<detail::GemmCommon>(a.common);
        for (int i = 0; i < cfg.m_block; ++i)
            load(in.a[static_cast<std::size_t>(i)], g->a,
                 {0, 0, common.row_block * cfg.m_block + i, a.iter});
        for (int j = 0; j < cfg.n_block; ++j)
            load(in.b[static_cast<std::size_t>(j)], g->b,
                 {0, 0, a.iter, common.col_block * cfg.n_block + j});
    };
    spec.compute = [cfg](ComputeArgs& a) {
        constexpr int b = GemmConfig::kBaseTile;
        const auto& in = *std::any_cast<const detail::GemmInput>(a.input);
        auto& accum = *std::any_cast<Tile>(a.state);
        Tile a_reg(cfg.dtype, b, b);
        load(a_reg, in.a[static_cast<std::size_t>(a.consumer_id)]);
        std::vector<Tile> b_regs;
        b_regs.reserve(static_cast<std::size_t>(cfg.n_block));
        std::vector<const Tile*> parts;
        for (int j = 0; j < cfg.n_block; ++j) {
            Tile bj(cfg.dtype, b, b, Major::ColMajor);
            load(bj, in.b[static_cast<std::size_t>(j)]);
            b_regs.push_back(std::move(bj));
        }
        for (const Tile& t : b_regs) parts.push_back(&t);
        const Tile wide_b = hconcat(parts);
        accum = mma_AB(a_reg, wide_b, accum);
        a.arrive_inputs();
    };
    spec.finish = [cfg, g](FinishArgs& a) {
        const auto& common = *std::any_cast<detail::GemmCommon>(a.common);
        const auto& accum = *std::any_cast<Tile>(a.state);
        Tile out(cfg.dtype, GemmConfig::kBaseTile, GemmConfig::kBaseTile * cfg.n_block);
        copy(out, accum);
        store(g->c, out, {0, 0, common.row_block * cfg.m_block + a.consumer_id, common.col_block});
    };
    return spec;
}

// Four stages by default, clamped to what the shared-memory budget admits
// for the configured dtype.
inline PipelineConfig gemm_pipeline_config(const GemmConfig& cfg, int input_stages = 4,
                                           const MachineParams& machine = preset_h100()) {
    const std::size_t block = static_cast<std::size_t>(cfg.m_block + cfg.n_block) *
                              GemmConfig::kBaseTile * GemmConfig::kBaseTile *
                              dtype_bytes(cfg.dtype);
    const int fit = static_cast<int>(std::max<std::size_t>(1, machine.smem_bytes_per_sm / block));
    PipelineConfig pc;
    pc.num_consumer_workers = cfg.m_block;
    pc.num_producer_workers = 1;
    pc.input_pipe_stages = std::min(input_stages, fit);
    return pc;
}

// --- attention forward --------------------------------------------------------

struct AttentionConfig {
    int batches = 1;
    int heads = 1;
    int seq = 0;     // query and key/value length
    int head_dim = 0; // 64 or 128
    int kv_rows = 0;  // 0 = stock tiling (192 rows for d=64, 128 for d=128)
    int qo_rows = 64;
    int num_workers = 3;
    Dtype dtype = Dtype::Fp32;

    int kv_tile_rows() const {
        if (kv_rows > 0) return kv_rows;
        return head_dim == 64 ? 192 : 128;
    }
    // tau = log2(e) / sqrt(d), folded into exp2 so the streaming softmax
    // matches the e-base definition.
    double temperature_scale() const {
        return (head_dim == 128 ? 0.08838834764 : 0.125) * 1.44269504089;
    }

    void validate() const {
        if (head_dim != 64 && head_dim != 128)
            throw ConfigError("AttentionConfig: head_dim must be 64 or 128");
        if (batches < 1 || heads < 1 || seq < 1)
            throw ConfigError("AttentionConfig: positive extents required");
        const int kv = kv_tile_rows();
        if (kv < 16 || kv % 16)
            throw ConfigError("AttentionConfig: kv tile rows must be a multiple of 16");
        if (seq % kv)
            throw ConfigError("AttentionConfig: seq must be a multiple of the KV tile rows");
        if (qo_rows < 16 || qo_rows % 16)
            throw ConfigError("AttentionConfig: qo rows must be a multiple of 16");
        if (num_workers < 1 || seq % (qo_rows * num_workers))
            throw ConfigError("AttentionConfig: seq must divide into qo_rows * num_workers");
    }
};

struct AttentionGlobals {
    GlobalTensor q, k, v, o; // {B, H, N, D}

    AttentionGlobals(const AttentionConfig& cfg)
        : q(cfg.batches, cfg.heads, cfg.seq, cfg.head_dim, cfg.dtype),
          k(cfg.batches, cfg.heads, cfg.seq, cfg.head_dim, cfg.dtype),
          v(cfg.batches, cfg.heads, cfg.seq, cfg.head_dim, cfg.dtype),
          o(cfg.batches, cfg.heads, cfg.seq, cfg.head_dim, Dtype::Fp32) {}
};

namespace detail {

struct AttnCommon {
    int batch = 0;
    int head = 0;
    int seq_chunk = 0;
};

struct AttnInput {
    std::vector<SharedTileHandle> kv; // [0] = K tile, [1] = V tile
};

struct AttnState {
    Tile q;     // qo_rows x d
    Tile o;     // qo_rows x d accumulator, fp32
    TileVector max_vec, norm_vec, max_last_scaled, max_scaled;

    AttnState(int qo_rows, int d, Dtype dt)
        : q(dt, qo_rows, d),
          o(Dtype::Fp32, qo_rows, d),
          max_vec(qo_rows, Orientation::ColVec),
          norm_vec(qo_rows, Orientation::ColVec),
          max_last_scaled(qo_rows, Orientation::ColVec),
          max_scaled(qo_rows, Orientation::ColVec) {
        neg_infty(max_vec);
    }
};

} // namespace detail

// Streams KV tiles through the input ring. Per chunk: S = Q K^T, running
// row-max accumulation, rescale of the normalizer and output accumulator by
// exp2(tau * (old_max - new_max)), P = exp2(tau*S - tau*max), O += P V.
// Finish divides by the normalizer, so any KV chunking yields the one-shot
// softmax result.
inline KernelSpec attention_fwd_kernel(const AttentionConfig& cfg,
                                       std::shared_ptr<AttentionGlobals> g) {
    cfg.validate();
    if (!g) throw ConfigError("attention_fwd_kernel: missing globals");

    const int kv = cfg.kv_tile_rows();
    const int chunks_per_task = cfg.seq / kv;
    const int tasks_per_head = cfg.seq / (cfg.qo_rows * cfg.num_workers);
    const int num_tasks = cfg.batches * cfg.heads * tasks_per_head;
    const float tau = static_cast<float>(cfg.temperature_scale());

    KernelSpec spec;
    spec.name = "attention-fwd";
    spec.required_consumers = cfg.num_workers;
    // K and V tiles per stage; Q and the accumulators live in worker state.
    spec.input_block_bytes =
        2u * static_cast<std::size_t>(kv) * cfg.head_dim * dtype_bytes(cfg.dtype);
    spec.make_common = [cfg, tasks_per_head, num_tasks](int task_id) {
        detail::AttnCommon common;
        if (task_id >= 0 && task_id < num_tasks) {
            common.batch = task_id / (cfg.heads * tasks_per_head);
            common.head = (task_id / tasks_per_head) % cfg.heads;
            common.seq_chunk = task_id % tasks_per_head;
        }
        return std::any{common};
    };
    spec.common_setup = [num_tasks, chunks_per_task, g](int task_id, std::any&) {
        if (task_id == 0) {
            // The streaming normalizer is provably positive only for finite
            // scores, so non-finite inputs are rejected up front.
            for (const GlobalTensor* t : {&g->q, &g->k, &g->v})
                for (float x : t->data)
                    if (!std::isfinite(x))
                        throw ConfigError("attention inputs must be finite");
        }
        return task_id < num_tasks ? chunks_per_task : -1;
    };
    spec.make_input_block = [cfg, kv] {
        detail::AttnInput in;
        in.kv.reserve(2);
        in.kv.emplace_back(cfg.dtype, kv, cfg.head_dim);
        in.kv.emplace_back(cfg.dtype, kv, cfg.head_dim);
        return std::any{std::move(in)};
    };
    spec.make_consumer_state = [cfg, g](int consumer_id, std::any& common_any) {
        const auto& common = *std::any_cast<detail::AttnCommon>(&common_any);
        detail::AttnState st(cfg.qo_rows, cfg.head_dim, cfg.dtype);
        load(st.q, g->q,
             {common.batch, common.head, common.seq_chunk * cfg.num_workers + consumer_id, 0});
        return std::any{std::move(st)};
    };
    spec.load = [g](LoadArgs& a) {
        auto& in = *std::any_cast<detail::AttnInput>(a.input);
        const auto& common = *std::any_cast<detail::AttnCommon>(a.common);
        load(in.kv[0], g->k, {common.batch, common.head, a.iter, 0});
        load(in.kv[1], g->v, {common.batch, common.head, a.iter, 0});
    };
    spec.compute = [cfg, kv, tau](ComputeArgs& a) {
        const auto& in = *std::any_cast<const detail::AttnInput>(a.input);
        auto& st = *std::any_cast<detail::AttnState>(a.state);

        Tile k_reg(cfg.dtype, kv, cfg.head_dim);
        load(k_reg, in.kv[0]);
        Tile att = mm_ABt(st.q, k_reg); // qo_rows x kv, fp32

        mul(st.max_last_scaled, st.max_vec, tau);
        row_max(st.max_vec, att, st.max_vec); // accumulate onto the running max
        mul(st.max_scaled, st.max_vec, tau);
        mul(att, att, tau);
        sub_row(att, att, st.max_scaled);
        exp2(att, att);
        sub(st.max_last_scaled, st.max_last_scaled, st.max_scaled);
        exp2(st.max_last_scaled, st.max_last_scaled);
        mul(st.norm_vec, st.norm_vec, st.max_last_scaled);
        row_sum(st.norm_vec, att, st.norm_vec);
        mul_row(st.o, st.o, st.max_last_scaled); // rescale previous chunks

        Tile att_mma(cfg.dtype, cfg.qo_rows, kv);
        copy(att_mma, att);
        Tile v_reg(cfg.dtype, kv, cfg.head_dim);
        load(v_reg, in.kv[1]);
        const Tile v_col = swap_layout(v_reg);
        st.o = mma_AB(att_mma, v_col, st.o);
        a.arrive_inputs();
    };
    spec.finish = [cfg, g](FinishArgs& a) {
        const auto& common = *std::any_cast<detail::AttnCommon>(a.common);
        auto& st = *std::any_cast<detail::AttnState>(a.state);
        div_row(st.o, st.o, st.norm_vec);
        store(g->o, st.o,
              {common.batch, common.head, common.seq_chunk * cfg.num_workers + a.consumer_id, 0});
    };
    return spec;
}

inline PipelineConfig attention_pipeline_config(const AttentionConfig& cfg, int input_stages = 2,
                                                const MachineParams& machine = preset_h100()) {
    const std::size_t block = 2u * static_cast<std::size_t>(cfg.kv_tile_rows()) * cfg.head_dim *
                              dtype_bytes(cfg.dtype);
    const int fit = static_cast<int>(std::max<std::size_t>(1, machine.smem_bytes_per_sm / block));
    PipelineConfig pc;
    pc.num_consumer_workers = cfg.num_workers;
    pc.num_producer_workers = 1;
    pc.input_pipe_stages = std::min(input_stages, fit);
    return pc;
}

// --- rotary ---------------------------------------------------------------------

struct RotaryConfig {
    int batches = 1;
    int heads = 1;
    int seq = 0;
    int head_dim = 0; // even; halves must still be 16-wide tiles
    int num_workers = 4;
    Dtype dtype = Dtype::Fp32;

    void validate() const {
        if (batches < 1 || heads < 1 || seq < 1) throw ConfigError("RotaryConfig: positive extents");
        if (head_dim < 32 || head_dim % 32)
            throw ConfigError("RotaryConfig: head_dim must be a multiple of 32");
        if (seq % 16) throw ConfigError("RotaryConfig: seq must be a multiple of 16");
        if (num_workers < 1 || (seq / 16) % num_workers)
            throw ConfigError("RotaryConfig: seq tiles must divide across workers");
    }
};

struct RotaryGlobals {
    GlobalTensor x, o;            // {B, H, N, headdim}
    GlobalTensor sin_tab, cos_tab; // {1, 1, N, headdim/2}

    RotaryGlobals(const RotaryConfig& cfg)
        : x(cfg.batches, cfg.heads, cfg.seq, cfg.head_dim, cfg.dtype),
          o(cfg.batches, cfg.heads, cfg.seq, cfg.head_dim, cfg.dtype),
          sin_tab(1, 1, cfg.seq, cfg.head_dim / 2, Dtype::Fp32),
          cos_tab(1, 1, cfg.seq, cfg.head_dim / 2, Dtype::Fp32) {}
};

namespace detail {

struct RotaryCommon {
    int row_chunk = 0;
};

struct RotaryInput {
    std::vector<SharedTileHandle> x; // one 16 x headdim tile per worker
};

struct RotaryOutput {
    std::vector<Tile> o;
};

struct RotaryState {
    Tile sin_reg, cos_reg; // 16 x headdim/2, fixed rows for this worker

    RotaryState(int half, Dtype dt) : sin_reg(dt, 16, half), cos_reg(dt, 16, half) {}
};

} // namespace detail

// One task owns a band of 16*num_workers sequence rows; iterations sweep
// (batch, head) pairs so the sin/cos tiles load once per worker. The first
// half of each head vector rotates against the second with the table angles.
inline KernelSpec rotary_kernel(const RotaryConfig& cfg, std::shared_ptr<RotaryGlobals> g) {
    cfg.validate();
    if (!g) throw ConfigError("rotary_kernel: missing globals");
    const int half = cfg.head_dim / 2;
    const int tasks = cfg.seq / (16 * cfg.num_workers);
    const int iters = cfg.batches * cfg.heads;

    KernelSpec spec;
    spec.name = "rotary";
    spec.required_consumers = cfg.num_workers;
    spec.per_iteration_output = true;
    spec.input_block_bytes = static_cast<std::size_t>(cfg.num_workers) * 16 * cfg.head_dim *
                             dtype_bytes(cfg.dtype);
    spec.output_block_bytes = spec.input_block_bytes;
    spec.make_common = [](int task_id) { return std::any{detail::RotaryCommon{task_id}}; };
    spec.common_setup = [tasks, iters](int task_id, std::any&) {
        return task_id < tasks ? iters : -1;
    };
    spec.make_input_block = [cfg] {
        detail::RotaryInput in;
        in.x.reserve(static_cast<std::size_t>(cfg.num_workers));
        for (int w = 0; w < cfg.num_workers; ++w) in.x.emplace_back(cfg.dtype, 16, cfg.head_dim);
        return std::any{std::move(in)};
    };
    spec.make_output_block = [cfg] {
        detail::RotaryOutput out;
        out.o.assign(static_cast<std::size_t>(cfg.num_workers),
                     Tile(cfg.dtype, 16, cfg.head_dim));
        return std::any{std::move(out)};
    };
    spec.make_consumer_state = [cfg, g, half](int consumer_id, std::any& common_any) {
        const auto& common = *std::any_cast<detail::RotaryCommon>(&common_any);
        detail::RotaryState st(half, Dtype::Fp32);
        const int row_tile = common.row_chunk * cfg.num_workers + consumer_id;
        load(st.sin_reg, g->sin_tab, {0, 0, row_tile, 0});
        load(st.cos_reg, g->cos_tab, {0, 0, row_tile, 0});
        return std::any{std::move(st)};
    };
    spec.load = [cfg, g](LoadArgs& a) {
        auto& in = *std::any_cast<detail::RotaryInput>(a.input);
        const auto& common = *std::any_cast<detail::RotaryCommon>(a.common);
        const int batch = a.iter / cfg.heads;
        const int head = a.iter % cfg.heads;
        for (int w = 0; w < cfg.num_workers; ++w)
            load(in.x[static_cast<std::size_t>(w)], g->x,
                 {batch, head, common.row_chunk * cfg.num_workers + w, 0});
    };
    spec.compute = [cfg, half](ComputeArgs& a) {
        const auto& in = *std::any_cast<const detail::RotaryInput>(a.input);
        auto& st = *std::any_cast<detail::RotaryState>(a.state);
        auto& out = *std::any_cast<detail::RotaryOutput>(a.output);

        Tile x(cfg.dtype, 16, cfg.head_dim);
        load(x, in.x[static_cast<std::size_t>(a.consumer_id)]);
        Tile x1(Dtype::Fp32, 16, half), x2(Dtype::Fp32, 16, half);
        for (int r = 0; r < 16; ++r)
            for (int c = 0; c < half; ++c) {
                x1.at(r, c) = x.at(r, c);
                x2.at(r, c) = x.at(r, c + half);
            }
        Tile temp1(Dtype::Fp32, 16, half), temp2(Dtype::Fp32, 16, half);
        mul(temp1, x1, st.cos_reg);
        mul(temp2, x2, st.cos_reg);
        mul(x2, x2, -1.0f);
        mul(x1, x1, st.sin_reg);
        mul(x2, x2, st.sin_reg);
        add(temp1, temp1, x2);
        add(temp2, temp2, x1);

        Tile& dst = out.o[static_cast<std::size_t>(a.consumer_id)];
        for (int r = 0; r < 16; ++r)
            for (int c = 0; c < half; ++c) {
                dst.set(r, c, temp1.at(r, c));
                dst.set(r, c + half, temp2.at(r, c));
            }
        a.arrive_inputs();
        a.arrive_outputs();
    };
    spec.store = [cfg, g](StoreArgs& a) {
        const auto& out = *std::any_cast<const detail::RotaryOutput>(a.output);
        const auto& common = *std::any_cast<detail::RotaryCommon>(a.common);
        const int batch = a.out_index / cfg.heads;
        const int head = a.out_index % cfg.heads;
        for (int w = 0; w < cfg.num_workers; ++w)
            store(g->o, out.o[static_cast<std::size_t>(w)],
                  {batch, head, common.row_chunk * cfg.num_workers + w, 0});
        a.arrive_outputs_finished();
    };
    spec.finish = [](FinishArgs&) {};
    return spec;
}

inline PipelineConfig rotary_pipeline_config(const RotaryConfig& cfg, int input_stages = 3,
                                             int output_stages = 3) {
    PipelineConfig pc;
    pc.num_consumer_workers = cfg.num_workers;
    pc.num_producer_workers = 1;
    pc.input_pipe_stages = input_stages;
    pc.output_pipe_stages = output_stages;
    return pc;
}

} // namespace kittensim
