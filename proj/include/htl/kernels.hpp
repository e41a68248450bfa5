#pragma once

// Dense kernels behind the tape. Two implementations of every kernel:
// `serial` is the plain reference kept for testing, `parallel` splits the
// outer loop across OpenMP threads. Each output element is reduced in the
// same order by both, so results are bitwise identical for any thread count.

#include <cstddef>
#include <cstdint>
#include <span>

namespace htl::kernels {

struct GemmDims {
  std::size_t m, k, n;
};

namespace serial {

// C (+)= A[m×k] · B[k×n]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             GemmDims d, bool accumulate);
// C (+)= A[m×k] · B[n×k]ᵀ
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             GemmDims d, bool accumulate);
// C (+)= A[k×m]ᵀ · B[k×n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             GemmDims d, bool accumulate);

// Row-wise softmax of scores with disallowed entries (allowed[i*cols+j]==0)
// receiving exactly zero weight. Returns the first row with no allowed
// entry, or -1.
std::ptrdiff_t masked_softmax(std::span<const double> scores, std::span<const std::uint8_t> allowed,
                              std::span<double> out, std::size_t rows, std::size_t cols);

}  // namespace serial

namespace parallel {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             GemmDims d, bool accumulate);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             GemmDims d, bool accumulate);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             GemmDims d, bool accumulate);
std::ptrdiff_t masked_softmax(std::span<const double> scores, std::span<const std::uint8_t> allowed,
                              std::span<double> out, std::size_t rows, std::size_t cols);

}  // namespace parallel

// Defaults used by the tape and the inference path.
using parallel::gemm_nn;
using parallel::gemm_nt;
using parallel::gemm_tn;
using parallel::masked_softmax;

// Caps the OpenMP worker count; n <= 0 leaves the runtime default.
void set_thread_count(int n);
int thread_count();
// Reads HTL_THREADS from the environment, if set.
void configure_threads_from_env();
// configure_threads_from_env, plus allocator settings that keep the tape's
// large short-lived buffers off mmap. Call once at startup.
void configure_runtime();

}  // namespace htl::kernels
