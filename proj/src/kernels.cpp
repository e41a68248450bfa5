#include "htl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <malloc.h>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace htl::kernels {

namespace {

// Every gemm variant computes, per output element, c += a_0*b_0, then
// c += a_1*b_1, ... in ascending p. The serial loops spell that out term by
// term; the tiled kernel keeps a 4×8 block of C in registers but performs
// the same additions in the same order, so both agree bit for bit.

using Vec4 = double __attribute__((vector_size(32)));

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 8;

inline Vec4 load4(const double* p) {
  Vec4 v;
  __builtin_memcpy(&v, p, sizeof v);
  return v;
}
inline void store4(double* p, Vec4 v) { __builtin_memcpy(p, &v, sizeof v); }

// A is addressed as a[r*row_stride + p*col_stride], so the same kernel serves
// A and Aᵀ. B is [k×n] row-major.
struct AView {
  const double* data;
  std::size_t row_stride;
  std::size_t col_stride;
  double at(std::size_t r, std::size_t p) const { return data[r * row_stride + p * col_stride]; }
};

inline void tile_full(const AView& a, std::size_t i, const double* b, double* c, std::size_t j, std::size_t k,
                      std::size_t n) {
  Vec4 acc[kTileRows][2];
  for (std::size_t r = 0; r < kTileRows; ++r) {
    acc[r][0] = load4(c + (i + r) * n + j);
    acc[r][1] = load4(c + (i + r) * n + j + 4);
  }
  for (std::size_t p = 0; p < k; ++p) {
    const Vec4 b0 = load4(b + p * n + j);
    const Vec4 b1 = load4(b + p * n + j + 4);
    for (std::size_t r = 0; r < kTileRows; ++r) {
      const double av = a.at(i + r, p);
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
  }
  for (std::size_t r = 0; r < kTileRows; ++r) {
    store4(c + (i + r) * n + j, acc[r][0]);
    store4(c + (i + r) * n + j + 4, acc[r][1]);
  }
}

// Rows [i, i+rows) × columns [j, j+cols), scalar order-preserving fallback.
inline void tile_edge(const AView& a, std::size_t i, std::size_t rows, const double* b, double* c, std::size_t j,
                      std::size_t cols, std::size_t k, std::size_t n) {
  for (std::size_t r = i; r < i + rows; ++r) {
    double* c_row = c + r * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.at(r, p);
      const double* b_row = b + p * n;
      for (std::size_t q = j; q < j + cols; ++q) c_row[q] += av * b_row[q];
    }
  }
}

// One horizontal band of kTileRows rows (fewer at the bottom edge).
inline void gemm_band(const AView& a, std::size_t i, std::size_t rows, const double* b, double* c, std::size_t k,
                      std::size_t n) {
  const std::size_t full_cols = n - n % kTileCols;
  if (rows == kTileRows) {
    for (std::size_t j = 0; j < full_cols; j += kTileCols) tile_full(a, i, b, c, j, k, n);
  } else if (full_cols > 0) {
    tile_edge(a, i, rows, b, c, 0, full_cols, k, n);
  }
  if (full_cols < n) tile_edge(a, i, rows, b, c, full_cols, n - full_cols, k, n);
}

// Bᵀ packed as [k×n].
std::vector<double> pack_transposed(std::span<const double> b, std::size_t n, std::size_t k) {
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  return bt;
}

inline bool softmax_row(const double* s, const std::uint8_t* ok, double* out, std::size_t cols) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cols; ++j)
    if (ok[j] && s[j] > mx) mx = s[j];
  if (mx == -std::numeric_limits<double>::infinity()) {
    bool any = false;
    for (std::size_t j = 0; j < cols; ++j) any = any || ok[j];
    if (!any) return false;
  }
  double z = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double e = ok[j] ? std::exp(s[j] - mx) : 0.0;
    out[j] = e;
    z += e;
  }
  for (std::size_t j = 0; j < cols; ++j) out[j] /= z;
  return true;
}

}  // namespace

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d,
             bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t i = 0; i < d.m; ++i)
    for (std::size_t p = 0; p < d.k; ++p)
      for (std::size_t j = 0; j < d.n; ++j) c[i * d.n + j] += a[i * d.k + p] * b[p * d.n + j];
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d,
             bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t i = 0; i < d.m; ++i)
    for (std::size_t p = 0; p < d.k; ++p)
      for (std::size_t j = 0; j < d.n; ++j) c[i * d.n + j] += a[i * d.k + p] * b[j * d.k + p];
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d,
             bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t i = 0; i < d.m; ++i)
    for (std::size_t p = 0; p < d.k; ++p)
      for (std::size_t j = 0; j < d.n; ++j) c[i * d.n + j] += a[p * d.m + i] * b[p * d.n + j];
}

std::ptrdiff_t masked_softmax(std::span<const double> scores, std::span<const std::uint8_t> allowed,
                              std::span<double> out, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    if (!softmax_row(scores.data() + i * cols, allowed.data() + i * cols, out.data() + i * cols, cols))
      return static_cast<std::ptrdiff_t>(i);
  }
  return -1;
}

}  // namespace serial

namespace parallel {

// Small products are not worth a fork/join.
constexpr std::size_t kMinParallelWork = 1 << 15;

namespace {

void tiled(const AView& a, const double* b, double* c, GemmDims d) {
  const auto bands = static_cast<std::ptrdiff_t>((d.m + kTileRows - 1) / kTileRows);
#pragma omp parallel for schedule(static) if (d.m * d.k * d.n >= kMinParallelWork)
  for (std::ptrdiff_t band = 0; band < bands; ++band) {
    const std::size_t i = static_cast<std::size_t>(band) * kTileRows;
    gemm_band(a, i, std::min(kTileRows, d.m - i), b, c, d.k, d.n);
  }
}

}  // namespace

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d,
             bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.end(), 0.0);
  tiled(AView{a.data(), d.k, 1}, b.data(), c.data(), d);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d,
             bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.end(), 0.0);
  const auto bt = pack_transposed(b, d.n, d.k);
  tiled(AView{a.data(), d.k, 1}, bt.data(), c.data(), d);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, GemmDims d,
             bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.end(), 0.0);
  tiled(AView{a.data(), 1, d.m}, b.data(), c.data(), d);
}

std::ptrdiff_t masked_softmax(std::span<const double> scores, std::span<const std::uint8_t> allowed,
                              std::span<double> out, std::size_t rows, std::size_t cols) {
  std::ptrdiff_t bad = -1;
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) reduction(max : bad) if (rows * cols >= kMinParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    if (!softmax_row(scores.data() + r * cols, allowed.data() + r * cols, out.data() + r * cols, cols))
      bad = std::max(bad, i);
  }
  if (bad < 0) return -1;
  // Report the first degenerate row, matching the serial kernel.
  for (std::size_t i = 0; i < rows; ++i) {
    const auto* ok = allowed.data() + i * cols;
    if (std::none_of(ok, ok + cols, [](std::uint8_t v) { return v != 0; })) return static_cast<std::ptrdiff_t>(i);
  }
  return bad;
}

}  // namespace parallel

void set_thread_count(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void configure_threads_from_env() {
  if (const char* v = std::getenv("HTL_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (end != v && n > 0) set_thread_count(static_cast<int>(n));
  }
}

void configure_runtime() {
  configure_threads_from_env();
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
}

}  // namespace htl::kernels
