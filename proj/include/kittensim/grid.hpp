#pragma once

// Grid-level scheduling: block-launch orders (supergrouping), persistent-grid
// wave math, and an L2 cache replay measuring HBM traffic under each order.

#include <algorithm>
#include <array>
#include <cstdint>
#include <list>
#include <random>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "kittensim/errors.hpp"

namespace kittensim {

struct BlockCoord {
    int row = 0;
    int col = 0;
    bool operator==(const BlockCoord&) const = default;
};

// Supergrouped launch order: walk SUPER_M rows down each column strip before
// advancing, then sweep the remainder rows column by column.
inline std::vector<BlockCoord> supergroup_order(int r_blocks, int c_blocks, int super_m) {
    if (r_blocks <= 0 || c_blocks <= 0 || super_m <= 0)
        throw ConfigError("supergroup_order: extents and SUPER_M must be positive");
    const int super_rows = (r_blocks / super_m) * super_m;
    const int final_rows = r_blocks - super_rows;
    const int super_repeat = super_m * c_blocks;
    std::vector<BlockCoord> order;
    order.reserve(static_cast<std::size_t>(r_blocks) * c_blocks);
    const int total = r_blocks * c_blocks;
    for (int task = 0; task < total; ++task) {
        if (task < super_rows * c_blocks) {
            order.push_back({super_m * (task / super_repeat) + task % super_m,
                             (task % super_repeat) / super_m});
        } else {
            const int rem = task - super_rows * c_blocks;
            order.push_back({super_rows + rem % final_rows, rem / final_rows});
        }
    }
    return order;
}

inline std::vector<BlockCoord> row_major_order(int r_blocks, int c_blocks) {
    if (r_blocks <= 0 || c_blocks <= 0)
        throw ConfigError("row_major_order: extents must be positive");
    std::vector<BlockCoord> order;
    order.reserve(static_cast<std::size_t>(r_blocks) * c_blocks);
    for (int r = 0; r < r_blocks; ++r)
        for (int c = 0; c < c_blocks; ++c) order.push_back({r, c});
    return order;
}

// Attention grid coordinates and launch orders over (batch, head, seq-block).
struct AttentionBlock {
    int batch = 0;
    int head = 0;
    int seq = 0;
    bool operator==(const AttentionBlock&) const = default;
};

enum class AttnAxis { B, H, N };

inline AttnAxis attn_axis_from_string(const std::string& s) {
    if (s == "B" || s == "b") return AttnAxis::B;
    if (s == "H" || s == "h") return AttnAxis::H;
    if (s == "N" || s == "n") return AttnAxis::N;
    throw ConfigError("unknown attention axis: " + s);
}

// axes[0] is the innermost (fastest varying) loop.
inline std::vector<AttentionBlock> attention_order(int batches, int heads, int seq_blocks,
                                                   const std::array<AttnAxis, 3>& axes) {
    if (batches <= 0 || heads <= 0 || seq_blocks <= 0)
        throw ConfigError("attention_order: extents must be positive");
    if ((axes[0] == axes[1]) || (axes[1] == axes[2]) || (axes[0] == axes[2]))
        throw ConfigError("attention_order: axes must be a permutation of {B, H, N}");
    const auto extent = [&](AttnAxis a) {
        switch (a) {
            case AttnAxis::B: return batches;
            case AttnAxis::H: return heads;
            case AttnAxis::N: return seq_blocks;
        }
        return 0;
    };
    std::vector<AttentionBlock> order;
    order.reserve(static_cast<std::size_t>(batches) * heads * seq_blocks);
    for (int o = 0; o < extent(axes[2]); ++o)
        for (int m = 0; m < extent(axes[1]); ++m)
            for (int i = 0; i < extent(axes[0]); ++i) {
                AttentionBlock b;
                const auto assign = [&](AttnAxis a, int v) {
                    switch (a) {
                        case AttnAxis::B: b.batch = v; break;
                        case AttnAxis::H: b.head = v; break;
                        case AttnAxis::N: b.seq = v; break;
                    }
                };
                assign(axes[0], i);
                assign(axes[1], m);
                assign(axes[2], o);
                order.push_back(b);
            }
    return order;
}

// --- persistent grid ----------------------------------------------------------

struct PersistentAssignment {
    std::vector<std::vector<int>> sm_tasks; // per-SM task ids, round-robin
    double makespan_persistent = 0.0;       // one setup, then loop tasks
    double makespan_relaunch = 0.0;         // one setup per wave
    int num_waves = 0;
};

inline PersistentAssignment persistent_assign(int num_tasks, int num_sms, double per_task_time,
                                              double setup_cost) {
    if (num_tasks <= 0 || num_sms <= 0)
        throw ConfigError("persistent_assign: tasks and SMs must be positive");
    if (per_task_time < 0 || setup_cost < 0)
        throw ConfigError("persistent_assign: times must be nonnegative");
    PersistentAssignment out;
    out.sm_tasks.resize(static_cast<std::size_t>(num_sms));
    // task_iter * gridDim + blockIdx
    for (int task = 0; task < num_tasks; ++task)
        out.sm_tasks[static_cast<std::size_t>(task % num_sms)].push_back(task);
    std::size_t most = 0;
    for (const auto& v : out.sm_tasks) most = std::max(most, v.size());
    out.num_waves = static_cast<int>((num_tasks + num_sms - 1) / num_sms);
    out.makespan_persistent = setup_cost + static_cast<double>(most) * per_task_time;
    out.makespan_relaunch = out.num_waves * (setup_cost + per_task_time);
    return out;
}

// --- L2 replay ------------------------------------------------------------------

struct L2Config {
    std::uint64_t capacity_bytes = 0;
    std::uint64_t line_bytes = 128;
    enum class Policy { FullyAssociativeLRU } policy = Policy::FullyAssociativeLRU;

    void validate() const {
        if (line_bytes == 0 || capacity_bytes % line_bytes != 0)
            throw ConfigError("L2Config: capacity must be a multiple of the line size");
    }
    std::uint64_t num_lines() const { return capacity_bytes / line_bytes; }
};

struct MemAccess {
    std::uint64_t address = 0;
    std::uint64_t bytes = 0;
    bool is_write = false; // writes are counted but never cached (write-through)
};

using BlockFootprint = std::vector<MemAccess>;

struct TrafficReport {
    std::uint64_t hbm_bytes_fetched = 0; // misses * line_bytes
    std::uint64_t hbm_bytes_written = 0;
    std::uint64_t l2_hits = 0;
    std::uint64_t l2_misses = 0;
    double hit_rate = 0.0;
    std::vector<std::uint64_t> per_block_misses;
};

enum class WaveInterleave { RoundRobin, SeededShuffle };

namespace detail {

// Fully associative LRU over cache lines. Unbounded capacity when the config
// capacity is zero.
class LruCache {
  public:
    explicit LruCache(std::uint64_t lines) : capacity_(lines) {}

    bool access(std::uint64_t line) {
        const auto it = map_.find(line);
        if (it != map_.end()) {
            order_.splice(order_.begin(), order_, it->second);
            return true;
        }
        order_.push_front(line);
        map_[line] = order_.begin();
        if (capacity_ > 0 && map_.size() > capacity_) {
            map_.erase(order_.back());
            order_.pop_back();
        }
        return false;
    }

  private:
    std::uint64_t capacity_;
    std::list<std::uint64_t> order_;
    std::unordered_map<std::uint64_t, std::list<std::uint64_t>::iterator> map_;
};

} // namespace detail

// Replay block footprints through an LRU model of the L2. Blocks scheduled to
// the same wave (wave_width consecutive blocks in launch order) interleave
// their accesses round-robin at tile-access granularity; a seeded shuffle is
// available as a sensitivity knob.
inline TrafficReport simulate_l2(const std::vector<BlockFootprint>& footprints_in_order,
                                 const L2Config& cfg, int wave_width = 1,
                                 WaveInterleave interleave = WaveInterleave::RoundRobin,
                                 std::uint64_t seed = 0) {
    cfg.validate();
    if (wave_width < 1) throw ConfigError("simulate_l2: wave width must be >= 1");
    for (const auto& fp : footprints_in_order)
        if (fp.empty()) throw ConfigError("simulate_l2: empty block footprint");

    detail::LruCache cache(cfg.num_lines());
    TrafficReport rep;
    rep.per_block_misses.assign(footprints_in_order.size(), 0);
    std::mt19937_64 rng(seed);

    const auto access_block = [&](std::size_t block, const MemAccess& a) {
        const std::uint64_t first = a.address / cfg.line_bytes;
        const std::uint64_t last = (a.address + a.bytes - 1) / cfg.line_bytes;
        for (std::uint64_t line = first; line <= last; ++line) {
            if (a.is_write) {
                rep.hbm_bytes_written += cfg.line_bytes;
                continue;
            }
            if (cache.access(line)) {
                rep.l2_hits++;
            } else {
                rep.l2_misses++;
                rep.per_block_misses[block]++;
            }
        }
    };

    for (std::size_t wave_start = 0; wave_start < footprints_in_order.size();
         wave_start += static_cast<std::size_t>(wave_width)) {
        const std::size_t wave_end =
            std::min(footprints_in_order.size(), wave_start + static_cast<std::size_t>(wave_width));
        // (block, access index) pairs in interleaved order
        std::vector<std::size_t> cursor(wave_end - wave_start, 0);
        if (interleave == WaveInterleave::RoundRobin) {
            bool progress = true;
            while (progress) {
                progress = false;
                for (std::size_t b = wave_start; b < wave_end; ++b) {
                    auto& cur = cursor[b - wave_start];
                    if (cur < footprints_in_order[b].size()) {
                        access_block(b, footprints_in_order[b][cur]);
                        ++cur;
                        progress = true;
                    }
                }
            }
        } else {
            std::vector<std::pair<std::size_t, std::size_t>> accesses;
            for (std::size_t b = wave_start; b < wave_end; ++b)
                for (std::size_t i = 0; i < footprints_in_order[b].size(); ++i)
                    accesses.emplace_back(b, i);
            std::shuffle(accesses.begin(), accesses.end(), rng);
            for (const auto& [b, i] : accesses) access_block(b, footprints_in_order[b][i]);
        }
    }
    rep.hbm_bytes_fetched = rep.l2_misses * cfg.line_bytes;
    if (rep.l2_hits + rep.l2_misses > 0)
        rep.hit_rate = static_cast<double>(rep.l2_hits) /
                       static_cast<double>(rep.l2_hits + rep.l2_misses);
    return rep;
}

// --- footprint generators ---------------------------------------------------------

// GEMM block (r, c) reads its A row-panel and B column-panel tile by tile
// along K. A sits at address 0, B directly after it.
struct GemmFootprintParams {
    int tiles_r = 0;    // output row blocks
    int tiles_c = 0;    // output col blocks
    int tiles_k = 0;    // reduction tiles
    std::uint64_t tile_bytes = 8192; // one 64x64 bf16 tile
};

inline std::vector<BlockFootprint> gemm_footprints(const GemmFootprintParams& p,
                                                   const std::vector<BlockCoord>& order) {
    if (p.tiles_r <= 0 || p.tiles_c <= 0 || p.tiles_k <= 0 || p.tile_bytes == 0)
        throw ConfigError("gemm_footprints: positive extents required");
    const std::uint64_t a_base = 0;
    const std::uint64_t b_base =
        static_cast<std::uint64_t>(p.tiles_r) * p.tiles_k * p.tile_bytes;
    std::vector<BlockFootprint> fps;
    fps.reserve(order.size());
    for (const BlockCoord& bc : order) {
        if (bc.row < 0 || bc.row >= p.tiles_r || bc.col < 0 || bc.col >= p.tiles_c)
            throw BoundsError("gemm_footprints: block coordinate outside the grid");
        BlockFootprint fp;
        fp.reserve(static_cast<std::size_t>(2 * p.tiles_k));
        for (int k = 0; k < p.tiles_k; ++k) {
            fp.push_back({a_base + (static_cast<std::uint64_t>(bc.row) * p.tiles_k + k) * p.tile_bytes,
                          p.tile_bytes, false});
            fp.push_back({b_base + (static_cast<std::uint64_t>(k) * p.tiles_c + bc.col) * p.tile_bytes,
                          p.tile_bytes, false});
        }
        fps.push_back(std::move(fp));
    }
    return fps;
}

// Attention block (b, h, n) reads its own Q tile plus the full K/V stream of
// head (b, h), tile by tile.
struct AttentionFootprintParams {
    int batches = 0;
    int heads = 0;
    int seq_blocks = 0;          // query blocks per head
    std::uint64_t q_tile_bytes = 16384;
    std::uint64_t kv_bytes_per_head = 0; // K plus V for one head
    std::uint64_t kv_tile_bytes = 49152;
};

inline std::vector<BlockFootprint> attention_footprints(const AttentionFootprintParams& p,
                                                        const std::vector<AttentionBlock>& order) {
    if (p.batches <= 0 || p.heads <= 0 || p.seq_blocks <= 0 || p.kv_bytes_per_head == 0 ||
        p.kv_tile_bytes == 0)
        throw ConfigError("attention_footprints: positive extents required");
    const std::uint64_t q_region =
        static_cast<std::uint64_t>(p.batches) * p.heads * p.seq_blocks * p.q_tile_bytes;
    std::vector<BlockFootprint> fps;
    fps.reserve(order.size());
    for (const AttentionBlock& bl : order) {
        if (bl.batch < 0 || bl.batch >= p.batches || bl.head < 0 || bl.head >= p.heads ||
            bl.seq < 0 || bl.seq >= p.seq_blocks)
            throw BoundsError("attention_footprints: block outside the grid");
        BlockFootprint fp;
        const std::uint64_t q_addr =
            (static_cast<std::uint64_t>(bl.batch) * p.heads * p.seq_blocks +
             static_cast<std::uint64_t>(bl.head) * p.seq_blocks + bl.seq) *
            p.q_tile_bytes;
        fp.push_back({q_addr, p.q_tile_bytes, false});
        const std::uint64_t kv_base =
            q_region + (static_cast<std::uint64_t>(bl.batch) * p.heads + bl.head) *
                           p.kv_bytes_per_head;
        for (std::uint64_t off = 0; off < p.kv_bytes_per_head; off += p.kv_tile_bytes) {
            const std::uint64_t n = std::min(p.kv_tile_bytes, p.kv_bytes_per_head - off);
            fp.push_back({kv_base + off, n, false});
        }
        fps.push_back(std::move(fp));
    }
    return fps;
}

} // namespace kittensim
