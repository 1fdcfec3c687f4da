#pragma once

// Shared-memory tile layouts and a brute-force bank-conflict analyzer.
//
// Six layout rules map a tile element (r, c) to a byte offset:
//
//   NaiveRowMajor  (r*cols + c) * elem_bytes
//   Padded         r * (cols*elem_bytes + pad_bytes) + c*elem_bytes
//   RowXor         naive ^ (r << 2)
//   SW32/64/128    naive ^ (((naive % W) >> 7) << 4),  W = 256/512/1024
//
// The SW family XORs k of the offset's row bits into the 16-byte-atom bits
// (k = 1, 2, 3), so it permutes 16-byte atoms within each 2^k-row window
// while preserving footprint and 16-byte alignment. The bank model is 32
// banks of 4-byte words; a phase's conflict degree is the largest number of
// distinct word addresses any one bank must serve.

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "kittensim/errors.hpp"

namespace kittensim {

inline constexpr int kNumBanks = 32;
inline constexpr int kBankWordBytes = 4;
inline constexpr int kWarpThreads = 32;

enum class SwizzleMode {
    NaiveRowMajor,
    Padded,
    RowXor,
    SW32,
    SW64,
    SW128,
};

inline const char* to_string(SwizzleMode m) {
    switch (m) {
        case SwizzleMode::NaiveRowMajor: return "naive";
        case SwizzleMode::Padded:        return "padded";
        case SwizzleMode::RowXor:        return "rowxor";
        case SwizzleMode::SW32:          return "sw32";
        case SwizzleMode::SW64:          return "sw64";
        case SwizzleMode::SW128:         return "sw128";
    }
    return "?";
}

inline bool is_swizzled(SwizzleMode m) {
    return m == SwizzleMode::RowXor || m == SwizzleMode::SW32 ||
           m == SwizzleMode::SW64 || m == SwizzleMode::SW128;
}

struct SharedLayout {
    int rows = 0;
    int cols = 0;
    int elem_bytes = 0; // 2 or 4
    SwizzleMode mode = SwizzleMode::NaiveRowMajor;
    int pad_bytes = kBankWordBytes; // Padded only; one bank word by default
    int base_align = 128;

    SharedLayout(int rows_, int cols_, int elem_bytes_, SwizzleMode mode_,
                 int pad_bytes_ = kBankWordBytes, int base_align_ = 128)
        : rows(rows_), cols(cols_), elem_bytes(elem_bytes_), mode(mode_),
          pad_bytes(pad_bytes_), base_align(base_align_) {
        validate();
    }

    int row_pitch_bytes() const {
        const int naive = cols * elem_bytes;
        return mode == SwizzleMode::Padded ? naive + pad_bytes : naive;
    }

    std::size_t footprint_bytes() const {
        return static_cast<std::size_t>(rows) * row_pitch_bytes();
    }

    void validate() const {
        if (rows <= 0 || cols <= 0) throw ConfigError("SharedLayout: shape must be positive");
        if (elem_bytes != 2 && elem_bytes != 4)
            throw ConfigError("SharedLayout: elem_bytes must be 2 or 4");
        const int width = cols * elem_bytes;
        switch (mode) {
            case SwizzleMode::SW32:
                if (width % 32 != 0) throw ConfigError("sw32 needs row width multiple of 32 bytes");
                break;
            case SwizzleMode::SW64:
                if (width % 64 != 0) throw ConfigError("sw64 needs row width multiple of 64 bytes");
                break;
            case SwizzleMode::SW128:
                if (width % 128 != 0) throw ConfigError("sw128 needs row width multiple of 128 bytes");
                break;
            case SwizzleMode::Padded:
                if (pad_bytes <= 0) throw ConfigError("padded layout needs pad_bytes > 0");
                break;
            default:
                break;
        }
        // The XOR-family offset math assumes the tile base sits on a
        // 128-byte boundary.
        if (is_swizzled(mode) && base_align < 128)
            throw ConfigError("swizzled layouts need base_align >= 128");
    }
};

inline std::size_t element_offset(const SharedLayout& lay, int r, int c) {
    if (r < 0 || r >= lay.rows || c < 0 || c >= lay.cols)
        throw BoundsError("element_offset: index out of range");
    const std::size_t naive =
        (static_cast<std::size_t>(r) * lay.cols + c) * lay.elem_bytes;
    switch (lay.mode) {
        case SwizzleMode::NaiveRowMajor:
            return naive;
        case SwizzleMode::Padded:
            return static_cast<std::size_t>(r) * lay.row_pitch_bytes() +
                   static_cast<std::size_t>(c) * lay.elem_bytes;
        case SwizzleMode::RowXor:
            return naive ^ (static_cast<std::size_t>(r) << 2);
        case SwizzleMode::SW32:
            return naive ^ (((naive % 256) >> 7) << 4);
        case SwizzleMode::SW64:
            return naive ^ (((naive % 512) >> 7) << 4);
        case SwizzleMode::SW128:
            return naive ^ (((naive % 1024) >> 7) << 4);
    }
    return naive;
}

inline int bank_of(std::size_t byte_offset) {
    return static_cast<int>((byte_offset / kBankWordBytes) % kNumBanks);
}

// Largest swizzle whose width precondition the tile passes. Tiles narrower
// than 32 bytes (or with non-multiple widths) have no supported layout.
inline SwizzleMode select_swizzle(int rows, int cols, int elem_bytes) {
    if (rows <= 0 || cols <= 0 || elem_bytes <= 0)
        throw ConfigError("select_swizzle: shape must be positive");
    const int width = cols * elem_bytes;
    if (width % 128 == 0) return SwizzleMode::SW128;
    if (width % 64 == 0) return SwizzleMode::SW64;
    if (width % 32 == 0) return SwizzleMode::SW32;
    throw ConfigError("unsupported tile: row width " + std::to_string(width) +
                      " is not a multiple of 32 bytes");
}

// --- warp access patterns -------------------------------------------------

// 32 threads read consecutive bank words along one row, thread t covering
// the word that starts at element (row, start_col + t*words).
struct RowLinear {
    int row = 0;
    int start_col = 0;
};

// 32 threads each read the bank word containing element (t, col).
struct ColumnWord {
    int col = 0;
};

// 32 threads each read a contiguous 16-byte segment: thread t addresses row
// (t mod 16), segment column (t div 16)*(16/elem_bytes). Hardware serves 8
// thread addresses per phase. This is the tensor-core register-layout
// staging pattern.
struct TensorCoreSegments {};

using AccessPattern = std::variant<RowLinear, ColumnWord, TensorCoreSegments>;

struct ThreadAccess {
    std::size_t byte_start = 0;
    int elem_count = 0; // elements covered, laid out per the layout rule
    int first_col = 0;
    int row = 0;
    bool sixteen_byte = false;
};

struct ConflictReport {
    int max_way = 1; // 1 = conflict-free
    std::vector<int> per_phase_way;
    int worst_bank = 0;
    int misaligned_segments = 0;
};

namespace detail {

// Expand one pattern into phases of per-thread accesses. Each access is the
// element range a thread touches; physical bytes come from element_offset.
inline std::vector<std::vector<ThreadAccess>> expand_pattern(const SharedLayout& lay,
                                                             const AccessPattern& pattern) {
    std::vector<std::vector<ThreadAccess>> phases;
    const int elems_per_word = kBankWordBytes / lay.elem_bytes;

    if (const auto* rl = std::get_if<RowLinear>(&pattern)) {
        std::vector<ThreadAccess> phase;
        for (int t = 0; t < kWarpThreads; ++t) {
            ThreadAccess a;
            a.row = rl->row;
            a.first_col = rl->start_col + t * elems_per_word;
            a.elem_count = elems_per_word;
            if (a.row < 0 || a.row >= lay.rows || a.first_col < 0 ||
                a.first_col + a.elem_count > lay.cols)
                throw BoundsError("RowLinear: access out of range");
            phase.push_back(a);
        }
        phases.push_back(std::move(phase));
    } else if (const auto* cw = std::get_if<ColumnWord>(&pattern)) {
        std::vector<ThreadAccess> phase;
        for (int t = 0; t < kWarpThreads; ++t) {
            ThreadAccess a;
            a.row = t;
            // The whole bank word containing (t, col).
            a.first_col = (cw->col / elems_per_word) * elems_per_word;
            a.elem_count = elems_per_word;
            if (a.row >= lay.rows || cw->col < 0 || cw->col >= lay.cols)
                throw BoundsError("ColumnWord: access out of range");
            phase.push_back(a);
        }
        phases.push_back(std::move(phase));
    } else if (std::holds_alternative<TensorCoreSegments>(pattern)) {
        const int elems_per_seg = 16 / lay.elem_bytes;
        for (int p = 0; p < kWarpThreads / 8; ++p) {
            std::vector<ThreadAccess> phase;
            for (int i = 0; i < 8; ++i) {
                const int t = p * 8 + i;
                ThreadAccess a;
                a.row = t % 16;
                a.first_col = (t / 16) * elems_per_seg;
                a.elem_count = elems_per_seg;
                a.sixteen_byte = true;
                if (a.row >= lay.rows || a.first_col + a.elem_count > lay.cols)
                    throw BoundsError("TensorCoreSegments: tile too small for pattern");
                phase.push_back(a);
            }
            phases.push_back(std::move(phase));
        }
    }
    return phases;
}

} // namespace detail

// Brute-force conflict analysis: expand every thread access into its set of
// 4-byte word addresses and count, per bank and phase, the distinct words it
// must serve. Identical addresses broadcast and do not conflict.
inline ConflictReport analyze_conflicts(const SharedLayout& lay, const AccessPattern& pattern) {
    ConflictReport rep;
    const auto phases = detail::expand_pattern(lay, pattern);
    for (const auto& phase : phases) {
        std::set<std::size_t> words_by_bank[kNumBanks];
        for (const auto& a : phase) {
            std::size_t base = element_offset(lay, a.row, a.first_col);
            if (a.sixteen_byte && base % 16 != 0) rep.misaligned_segments++;
            for (int e = 0; e < a.elem_count; ++e) {
                const std::size_t off = element_offset(lay, a.row, a.first_col + e);
                for (int b = 0; b < lay.elem_bytes; ++b) {
                    const std::size_t word = (off + b) / kBankWordBytes;
                    words_by_bank[bank_of(word * kBankWordBytes)].insert(word);
                }
            }
        }
        int way = 1;
        int bank_id = 0;
        for (int b = 0; b < kNumBanks; ++b) {
            const int n = static_cast<int>(words_by_bank[b].size());
            if (n > way) {
                way = n;
                bank_id = b;
            }
        }
        rep.per_phase_way.push_back(way);
        if (way > rep.max_way) {
            rep.max_way = way;
            rep.worst_bank = bank_id;
        }
    }
    return rep;
}

// True iff element_offset is injective over the tile, and -- for the XOR
// family -- its image is exactly the naive footprint byte set (swizzles
// permute, never expand).
inline bool check_bijective(const SharedLayout& lay) {
    std::vector<std::size_t> offs;
    offs.reserve(static_cast<std::size_t>(lay.rows) * lay.cols);
    for (int r = 0; r < lay.rows; ++r)
        for (int c = 0; c < lay.cols; ++c) offs.push_back(element_offset(lay, r, c));
    std::sort(offs.begin(), offs.end());
    if (std::adjacent_find(offs.begin(), offs.end()) != offs.end()) return false;
    if (is_swizzled(lay.mode)) {
        for (std::size_t i = 0; i < offs.size(); ++i)
            if (offs[i] != i * static_cast<std::size_t>(lay.elem_bytes)) return false;
    }
    return true;
}

} // namespace kittensim
