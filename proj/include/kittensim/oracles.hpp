#pragma once

// Independent brute-force references for the worked kernels. These are plain
// fp64 loops over flat row-major buffers, deliberately free of the tile and
// pipeline machinery they are used to check.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "kittensim/errors.hpp"

namespace kittensim {

// C[m x n] = A[m x k] * B[k x n]
inline std::vector<double> oracle_gemm(const std::vector<double>& a,
                                       const std::vector<double>& b, int m, int n, int k) {
    if (a.size() != static_cast<std::size_t>(m) * k || b.size() != static_cast<std::size_t>(k) * n)
        throw ShapeError("oracle_gemm: buffer sizes do not match shape");
    std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int kk = 0; kk < k; ++kk)
                acc += a[static_cast<std::size_t>(i) * k + kk] * b[static_cast<std::size_t>(kk) * n + j];
            c[static_cast<std::size_t>(i) * n + j] = acc;
        }
    return c;
}

// O = softmax(Q K^T / sqrt(d)) V for one head; Q is [nq x d], K and V are
// [nk x d], all row-major.
inline std::vector<double> oracle_attention(const std::vector<double>& q,
                                            const std::vector<double>& k,
                                            const std::vector<double>& v, int nq, int nk, int d) {
    if (q.size() != static_cast<std::size_t>(nq) * d || k.size() != static_cast<std::size_t>(nk) * d ||
        v.size() != static_cast<std::size_t>(nk) * d)
        throw ShapeError("oracle_attention: buffer sizes do not match shape");
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> out(static_cast<std::size_t>(nq) * d, 0.0);
    std::vector<double> logits(static_cast<std::size_t>(nk));
    for (int i = 0; i < nq; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < nk; ++j) {
            double dot = 0.0;
            for (int x = 0; x < d; ++x)
                dot += q[static_cast<std::size_t>(i) * d + x] * k[static_cast<std::size_t>(j) * d + x];
            logits[j] = dot * scale;
            m = std::max(m, logits[j]);
        }
        double norm = 0.0;
        for (int j = 0; j < nk; ++j) {
            logits[j] = std::exp(logits[j] - m);
            norm += logits[j];
        }
        for (int j = 0; j < nk; ++j) {
            const double p = logits[j] / norm;
            for (int x = 0; x < d; ++x)
                out[static_cast<std::size_t>(i) * d + x] += p * v[static_cast<std::size_t>(j) * d + x];
        }
    }
    return out;
}

// Rotary position embedding as complex multiplication: for each position p
// and pair index i, rotate (x1, x2) = (x[p][i], x[p][i + hd/2]) by the table
// angle. x is [n x headdim]; sin/cos are [n x headdim/2].
inline std::vector<double> oracle_rotary(const std::vector<double>& x,
                                         const std::vector<double>& sin_tab,
                                         const std::vector<double>& cos_tab, int n, int headdim) {
    if (headdim % 2 != 0) throw ShapeError("oracle_rotary: headdim must be even");
    const int half = headdim / 2;
    if (x.size() != static_cast<std::size_t>(n) * headdim ||
        sin_tab.size() != static_cast<std::size_t>(n) * half ||
        cos_tab.size() != static_cast<std::size_t>(n) * half)
        throw ShapeError("oracle_rotary: buffer sizes do not match shape");
    std::vector<double> out(x.size());
    for (int p = 0; p < n; ++p) {
        for (int i = 0; i < half; ++i) {
            const double x1 = x[static_cast<std::size_t>(p) * headdim + i];
            const double x2 = x[static_cast<std::size_t>(p) * headdim + half + i];
            const double s = sin_tab[static_cast<std::size_t>(p) * half + i];
            const double c = cos_tab[static_cast<std::size_t>(p) * half + i];
            out[static_cast<std::size_t>(p) * headdim + i] = x1 * c - x2 * s;
            out[static_cast<std::size_t>(p) * headdim + half + i] = x2 * c + x1 * s;
        }
    }
    return out;
}

} // namespace kittensim
