#pragma once

// Numeric tiles at the global/shared/register levels and the bulk operation
// suite kernels are written in. Tiles are value types; every operation is a
// pure function of its operands.
//
// bf16 is emulated as fp32 storage whose values are already rounded to
// nearest-even bf16. Rounding happens on copy/transfer into a bf16 tile;
// arithmetic is always fp32. Reductions and inner products run in a fixed
// sequential order so fp32 results are reproducible run to run.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "kittensim/errors.hpp"
#include "kittensim/layouts.hpp"

namespace kittensim {

enum class Dtype { Fp32, Bf16 };

inline int dtype_bytes(Dtype d) { return d == Dtype::Fp32 ? 4 : 2; }

inline const char* to_string(Dtype d) { return d == Dtype::Fp32 ? "fp32" : "bf16"; }

inline Dtype dtype_from_string(const std::string& s) {
    if (s == "fp32") return Dtype::Fp32;
    if (s == "bf16") return Dtype::Bf16;
    throw ConfigError("unknown dtype: " + s);
}

// Round-to-nearest-even truncation of the low 16 mantissa bits.
inline float round_to_bf16(float x) {
    if (std::isnan(x)) return x;
    std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
    bits += 0x7FFFu + ((bits >> 16) & 1u);
    bits &= 0xFFFF0000u;
    return std::bit_cast<float>(bits);
}

enum class Major { RowMajor, ColMajor };

struct Tile {
    Dtype dtype = Dtype::Fp32;
    int rows = 0;
    int cols = 0;
    Major major = Major::RowMajor;
    std::vector<float> data; // logical row-major storage regardless of major

    Tile() = default;
    Tile(Dtype dtype_, int rows_, int cols_, Major major_ = Major::RowMajor)
        : dtype(dtype_), rows(rows_), cols(cols_), major(major_) {
        if (rows < 16 || cols < 16 || rows % 16 != 0 || cols % 16 != 0)
            throw ShapeError("Tile: rows/cols must be multiples of 16 and >= 16");
        data.assign(static_cast<std::size_t>(rows) * cols, 0.0f);
    }

    float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    // Stores the value with the tile's dtype semantics.
    void set(int r, int c, float v) { at(r, c) = dtype == Dtype::Bf16 ? round_to_bf16(v) : v; }
};

enum class Orientation { RowVec, ColVec };

struct TileVector {
    int length = 0;
    Orientation orientation = Orientation::ColVec;
    std::vector<float> data;

    TileVector() = default;
    TileVector(int length_, Orientation o, float fill = 0.0f)
        : length(length_), orientation(o) {
        if (length < 16 || length % 16 != 0)
            throw ShapeError("TileVector: length must be a multiple of 16 and >= 16");
        data.assign(static_cast<std::size_t>(length), fill);
    }

    float& operator[](int i) { return data[static_cast<std::size_t>(i)]; }
    float operator[](int i) const { return data[static_cast<std::size_t>(i)]; }
};

// 4D tensor in slow memory, indexed {batch, depth, rows, cols}. Slicing is
// tile-granular: transfers address it by tile coordinates.
struct GlobalTensor {
    std::array<int, 4> dims{}; // batch, depth, rows, cols
    Dtype dtype = Dtype::Fp32;
    std::vector<float> data;

    GlobalTensor() = default;
    GlobalTensor(int b, int d, int r, int c, Dtype dt = Dtype::Fp32)
        : dims{b, d, r, c}, dtype(dt) {
        if (b <= 0 || d <= 0 || r <= 0 || c <= 0)
            throw ShapeError("GlobalTensor: extents must be positive");
        data.assign(static_cast<std::size_t>(b) * d * r * c, 0.0f);
    }

    std::size_t index(int b, int d, int r, int c) const {
        return ((static_cast<std::size_t>(b) * dims[1] + d) * dims[2] + r) * dims[3] + c;
    }
    float& at(int b, int d, int r, int c) { return data[index(b, d, r, c)]; }
    float at(int b, int d, int r, int c) const { return data[index(b, d, r, c)]; }
    void set(int b, int d, int r, int c, float v) {
        data[index(b, d, r, c)] = dtype == Dtype::Bf16 ? round_to_bf16(v) : v;
    }
};

// A tile bound to a byte-addressed shared-memory image. Every element write
// and read goes through the layout's element_offset, so the buffer holds the
// physically swizzled image.
struct SharedTileHandle {
    Dtype dtype;
    SharedLayout layout;
    std::vector<std::uint8_t> bytes;

    SharedTileHandle(Dtype dt, int rows, int cols)
        : dtype(dt),
          layout(rows, cols, dtype_bytes(dt), select_swizzle(rows, cols, dtype_bytes(dt))),
          bytes(layout.footprint_bytes(), 0) {}

    SharedTileHandle(Dtype dt, SharedLayout lay)
        : dtype(dt), layout(lay), bytes(layout.footprint_bytes(), 0) {
        if (dtype_bytes(dt) != lay.elem_bytes)
            throw ConfigError("SharedTileHandle: layout elem_bytes != dtype size");
    }

    int rows() const { return layout.rows; }
    int cols() const { return layout.cols; }

    void store_element(int r, int c, float v) {
        const std::size_t off = element_offset(layout, r, c);
        if (dtype == Dtype::Fp32) {
            std::memcpy(bytes.data() + off, &v, 4);
        } else {
            const std::uint32_t b32 = std::bit_cast<std::uint32_t>(round_to_bf16(v));
            const std::uint16_t b16 = static_cast<std::uint16_t>(b32 >> 16);
            std::memcpy(bytes.data() + off, &b16, 2);
        }
    }

    float load_element(int r, int c) const {
        const std::size_t off = element_offset(layout, r, c);
        if (dtype == Dtype::Fp32) {
            float v;
            std::memcpy(&v, bytes.data() + off, 4);
            return v;
        }
        std::uint16_t b16;
        std::memcpy(&b16, bytes.data() + off, 2);
        return std::bit_cast<float>(static_cast<std::uint32_t>(b16) << 16);
    }
};

// --- elementwise ------------------------------------------------------------

namespace detail {
inline void require_same_shape(const Tile& a, const Tile& b) {
    if (a.rows != b.rows || a.cols != b.cols) throw ShapeError("tile shape mismatch");
    if (a.major != b.major) throw ShapeError("tile major mismatch");
}
inline void map2(Tile& dst, const Tile& a, const Tile& b, float (*f)(float, float)) {
    require_same_shape(dst, a);
    require_same_shape(dst, b);
    const bool rb = dst.dtype == Dtype::Bf16;
    for (std::size_t i = 0; i < dst.data.size(); ++i) {
        const float v = f(a.data[i], b.data[i]);
        dst.data[i] = rb ? round_to_bf16(v) : v;
    }
}
inline void map1(Tile& dst, const Tile& a, float (*f)(float)) {
    require_same_shape(dst, a);
    const bool rb = dst.dtype == Dtype::Bf16;
    for (std::size_t i = 0; i < dst.data.size(); ++i) {
        const float v = f(a.data[i]);
        dst.data[i] = rb ? round_to_bf16(v) : v;
    }
}
} // namespace detail

inline void zero(Tile& t) { std::fill(t.data.begin(), t.data.end(), 0.0f); }
inline void zero(TileVector& v) { std::fill(v.data.begin(), v.data.end(), 0.0f); }
inline void neg_infty(TileVector& v) {
    std::fill(v.data.begin(), v.data.end(), -std::numeric_limits<float>::infinity());
}

// Copy with dtype conversion (bf16 destinations round).
inline void copy(Tile& dst, const Tile& src) {
    detail::require_same_shape(dst, src);
    const bool rb = dst.dtype == Dtype::Bf16 && src.dtype == Dtype::Fp32;
    for (std::size_t i = 0; i < dst.data.size(); ++i)
        dst.data[i] = rb ? round_to_bf16(src.data[i]) : src.data[i];
}

inline void add(Tile& d, const Tile& a, const Tile& b) {
    detail::map2(d, a, b, [](float x, float y) { return x + y; });
}
inline void sub(Tile& d, const Tile& a, const Tile& b) {
    detail::map2(d, a, b, [](float x, float y) { return x - y; });
}
inline void mul(Tile& d, const Tile& a, const Tile& b) {
    detail::map2(d, a, b, [](float x, float y) { return x * y; });
}
inline void div(Tile& d, const Tile& a, const Tile& b) {
    detail::map2(d, a, b, [](float x, float y) { return x / y; });
}
inline void exp(Tile& d, const Tile& a) {
    detail::map1(d, a, [](float x) { return std::exp(x); });
}
inline void exp2(Tile& d, const Tile& a) {
    detail::map1(d, a, [](float x) { return std::exp2(x); });
}
inline void mul(Tile& d, const Tile& a, float s) {
    detail::require_same_shape(d, a);
    const bool rb = d.dtype == Dtype::Bf16;
    for (std::size_t i = 0; i < d.data.size(); ++i) {
        const float v = a.data[i] * s;
        d.data[i] = rb ? round_to_bf16(v) : v;
    }
}

namespace detail {
inline void require_same_len(const TileVector& a, const TileVector& b) {
    if (a.length != b.length || a.orientation != b.orientation)
        throw ShapeError("vector length/orientation mismatch");
}
} // namespace detail

inline void add(TileVector& d, const TileVector& a, const TileVector& b) {
    detail::require_same_len(d, a);
    detail::require_same_len(d, b);
    for (int i = 0; i < d.length; ++i) d[i] = a[i] + b[i];
}
inline void sub(TileVector& d, const TileVector& a, const TileVector& b) {
    detail::require_same_len(d, a);
    detail::require_same_len(d, b);
    for (int i = 0; i < d.length; ++i) d[i] = a[i] - b[i];
}
inline void mul(TileVector& d, const TileVector& a, const TileVector& b) {
    detail::require_same_len(d, a);
    detail::require_same_len(d, b);
    for (int i = 0; i < d.length; ++i) d[i] = a[i] * b[i];
}
inline void mul(TileVector& d, const TileVector& a, float s) {
    detail::require_same_len(d, a);
    for (int i = 0; i < d.length; ++i) d[i] = a[i] * s;
}
inline void exp2(TileVector& d, const TileVector& a) {
    detail::require_same_len(d, a);
    for (int i = 0; i < d.length; ++i) d[i] = std::exp2(a[i]);
}

// --- row broadcasts and row reductions ---------------------------------------

namespace detail {
inline void require_rowvec(const Tile& t, const TileVector& v) {
    if (v.orientation != Orientation::ColVec || v.length != t.rows)
        throw ShapeError("row broadcast needs a ColVec of length t.rows");
}
} // namespace detail

// result[r][c] = t[r][c] op v[r]
inline void sub_row(Tile& d, const Tile& t, const TileVector& v) {
    detail::require_same_shape(d, t);
    detail::require_rowvec(t, v);
    for (int r = 0; r < t.rows; ++r)
        for (int c = 0; c < t.cols; ++c) d.set(r, c, t.at(r, c) - v[r]);
}
inline void div_row(Tile& d, const Tile& t, const TileVector& v) {
    detail::require_same_shape(d, t);
    detail::require_rowvec(t, v);
    for (int r = 0; r < t.rows; ++r)
        for (int c = 0; c < t.cols; ++c) d.set(r, c, t.at(r, c) / v[r]);
}
inline void mul_row(Tile& d, const Tile& t, const TileVector& v) {
    detail::require_same_shape(d, t);
    detail::require_rowvec(t, v);
    for (int r = 0; r < t.rows; ++r)
        for (int c = 0; c < t.cols; ++c) d.set(r, c, t.at(r, c) * v[r]);
}

// dst[r] = max(acc[r], max_c t[r][c]); accumulating, like the kernel listings.
inline void row_max(TileVector& dst, const Tile& t, const TileVector& acc) {
    detail::require_rowvec(t, acc);
    detail::require_rowvec(t, dst);
    for (int r = 0; r < t.rows; ++r) {
        float m = acc[r];
        for (int c = 0; c < t.cols; ++c) m = std::max(m, t.at(r, c));
        dst[r] = m;
    }
}

// dst[r] = acc[r] + sum_c t[r][c], summed left to right.
inline void row_sum(TileVector& dst, const Tile& t, const TileVector& acc) {
    detail::require_rowvec(t, acc);
    detail::require_rowvec(t, dst);
    for (int r = 0; r < t.rows; ++r) {
        float s = acc[r];
        for (int c = 0; c < t.cols; ++c) s += t.at(r, c);
        dst[r] = s;
    }
}

// --- matrix multiply ----------------------------------------------------------

// C = A * B (+ C_in). The major contract mirrors the tensor-core operand
// requirements and is checked up front: AB needs A row-major and B
// column-major; ABt needs both row-major. Inner products accumulate in fp32
// over ascending k.
namespace detail {
inline Tile mma_impl(bool transpose_b, bool accumulate, const Tile& a, const Tile& b,
                     const Tile* c_in) {
    if (!transpose_b) {
        if (a.major != Major::RowMajor) throw ShapeError("mma_AB: A must be RowMajor");
        if (b.major != Major::ColMajor) throw ShapeError("mma_AB: B must be ColMajor");
        if (a.cols != b.rows) throw ShapeError("mma_AB: A.cols != B.rows");
    } else {
        if (a.major != Major::RowMajor || b.major != Major::RowMajor)
            throw ShapeError("mma_ABt: A and B must be RowMajor");
        if (a.cols != b.cols) throw ShapeError("mma_ABt: A.cols != B.cols");
    }
    const int m = a.rows;
    const int n = transpose_b ? b.rows : b.cols;
    const int k = a.cols;
    Tile c(Dtype::Fp32, m, n, Major::RowMajor);
    if (c_in) {
        if (c_in->rows != m || c_in->cols != n) throw ShapeError("mma: C shape mismatch");
    }
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            float acc = (accumulate && c_in) ? c_in->at(i, j) : 0.0f;
            for (int kk = 0; kk < k; ++kk)
                acc += a.at(i, kk) * (transpose_b ? b.at(j, kk) : b.at(kk, j));
            c.at(i, j) = acc;
        }
    }
    return c;
}
} // namespace detail

inline Tile mm_AB(const Tile& a, const Tile& b) { return detail::mma_impl(false, false, a, b, nullptr); }
inline Tile mm_ABt(const Tile& a, const Tile& b) { return detail::mma_impl(true, false, a, b, nullptr); }
inline Tile mma_AB(const Tile& a, const Tile& b, const Tile& c_in) {
    return detail::mma_impl(false, true, a, b, &c_in);
}
inline Tile mma_ABt(const Tile& a, const Tile& b, const Tile& c_in) {
    return detail::mma_impl(true, true, a, b, &c_in);
}

// Same logical matrix, opposite major flag. Involution.
inline Tile swap_layout(const Tile& t) {
    Tile out = t;
    out.major = t.major == Major::RowMajor ? Major::ColMajor : Major::RowMajor;
    return out;
}

// --- transfers ----------------------------------------------------------------

// Byte-traffic log for the simulator side; transfers append when given one.
struct TransferRecord {
    enum class Level { Global, Shared, Register };
    Level src;
    Level dst;
    std::size_t bytes;
};

using TransferLog = std::vector<TransferRecord>;

namespace detail {
inline void check_tile_coord(const GlobalTensor& g, const Tile& t, const std::array<int, 4>& coord) {
    const int rb = coord[2], cb = coord[3];
    if (coord[0] < 0 || coord[0] >= g.dims[0] || coord[1] < 0 || coord[1] >= g.dims[1])
        throw BoundsError("transfer: batch/depth coordinate out of range");
    if (rb < 0 || cb < 0 || (rb + 1) * t.rows > g.dims[2] || (cb + 1) * t.cols > g.dims[3])
        throw BoundsError("transfer: tile coordinate out of range");
}
inline void log_transfer(TransferLog* log, TransferRecord::Level s, TransferRecord::Level d,
                         std::size_t bytes) {
    if (log) log->push_back({s, d, bytes});
}
} // namespace detail

// Global -> register tile. coord = {batch, depth, row_block, col_block};
// row/col blocks are in units of the tile shape.
inline void load(Tile& dst, const GlobalTensor& src, const std::array<int, 4>& coord,
                 TransferLog* log = nullptr) {
    detail::check_tile_coord(src, dst, coord);
    const int r0 = coord[2] * dst.rows, c0 = coord[3] * dst.cols;
    for (int r = 0; r < dst.rows; ++r)
        for (int c = 0; c < dst.cols; ++c)
            dst.set(r, c, src.at(coord[0], coord[1], r0 + r, c0 + c));
    detail::log_transfer(log, TransferRecord::Level::Global, TransferRecord::Level::Register,
                         dst.data.size() * dtype_bytes(dst.dtype));
}

// Register tile -> global.
inline void store(GlobalTensor& dst, const Tile& src, const std::array<int, 4>& coord,
                  TransferLog* log = nullptr) {
    detail::check_tile_coord(dst, src, coord);
    const int r0 = coord[2] * src.rows, c0 = coord[3] * src.cols;
    for (int r = 0; r < src.rows; ++r)
        for (int c = 0; c < src.cols; ++c)
            dst.set(coord[0], coord[1], r0 + r, c0 + c, src.at(r, c));
    detail::log_transfer(log, TransferRecord::Level::Register, TransferRecord::Level::Global,
                         src.data.size() * dtype_bytes(src.dtype));
}

// Global -> shared; every element is placed at its swizzled byte offset.
inline void load(SharedTileHandle& dst, const GlobalTensor& src, const std::array<int, 4>& coord,
                 TransferLog* log = nullptr) {
    Tile probe(dst.dtype, dst.rows(), dst.cols());
    detail::check_tile_coord(src, probe, coord);
    const int r0 = coord[2] * dst.rows(), c0 = coord[3] * dst.cols();
    for (int r = 0; r < dst.rows(); ++r)
        for (int c = 0; c < dst.cols(); ++c)
            dst.store_element(r, c, src.at(coord[0], coord[1], r0 + r, c0 + c));
    detail::log_transfer(log, TransferRecord::Level::Global, TransferRecord::Level::Shared,
                         static_cast<std::size_t>(dst.rows()) * dst.cols() * dtype_bytes(dst.dtype));
}

// Shared -> global.
inline void store(GlobalTensor& dst, const SharedTileHandle& src, const std::array<int, 4>& coord,
                  TransferLog* log = nullptr) {
    Tile probe(src.dtype, src.rows(), src.cols());
    detail::check_tile_coord(dst, probe, coord);
    const int r0 = coord[2] * src.rows(), c0 = coord[3] * src.cols();
    for (int r = 0; r < src.rows(); ++r)
        for (int c = 0; c < src.cols(); ++c)
            dst.set(coord[0], coord[1], r0 + r, c0 + c, src.load_element(r, c));
    detail::log_transfer(log, TransferRecord::Level::Shared, TransferRecord::Level::Global,
                         static_cast<std::size_t>(src.rows()) * src.cols() * dtype_bytes(src.dtype));
}

// Shared -> register.
inline void load(Tile& dst, const SharedTileHandle& src, TransferLog* log = nullptr) {
    if (dst.rows != src.rows() || dst.cols != src.cols())
        throw ShapeError("transfer: shared/register shape mismatch");
    for (int r = 0; r < dst.rows; ++r)
        for (int c = 0; c < dst.cols; ++c) dst.set(r, c, src.load_element(r, c));
    detail::log_transfer(log, TransferRecord::Level::Shared, TransferRecord::Level::Register,
                         dst.data.size() * dtype_bytes(src.dtype));
}

// Register -> shared.
inline void store(SharedTileHandle& dst, const Tile& src, TransferLog* log = nullptr) {
    if (src.rows != dst.rows() || src.cols != dst.cols())
        throw ShapeError("transfer: register/shared shape mismatch");
    for (int r = 0; r < src.rows; ++r)
        for (int c = 0; c < src.cols; ++c) dst.store_element(r, c, src.at(r, c));
    detail::log_transfer(log, TransferRecord::Level::Register, TransferRecord::Level::Shared,
                         src.data.size() * dtype_bytes(dst.dtype));
}

// Concatenate tiles left-to-right into one wide tile (the wide-B operand of
// the matmul kernel). Majors and dtypes must match.
inline Tile hconcat(const std::vector<const Tile*>& parts) {
    if (parts.empty()) throw ShapeError("hconcat: no tiles");
    const Tile& first = *parts.front();
    int total_cols = 0;
    for (const Tile* p : parts) {
        if (p->rows != first.rows || p->dtype != first.dtype || p->major != first.major)
            throw ShapeError("hconcat: incompatible tiles");
        total_cols += p->cols;
    }
    Tile out(first.dtype, first.rows, total_cols, first.major);
    int c0 = 0;
    for (const Tile* p : parts) {
        for (int r = 0; r < p->rows; ++r)
            for (int c = 0; c < p->cols; ++c) out.at(r, c0 + c) = p->at(r, c);
        c0 += p->cols;
    }
    return out;
}

} // namespace kittensim
