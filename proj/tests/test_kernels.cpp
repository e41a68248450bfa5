#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "htl/kernels.hpp"
#include "htl/random.hpp"

using namespace htl;

namespace {

std::vector<double> randoms(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("gemm variants: parallel equals serial bitwise") {
  Rng rng(1);
  for (int trial = 0; trial < 120; ++trial) {
    const kernels::GemmDims d{static_cast<std::size_t>(rng.range(1, 70)), static_cast<std::size_t>(rng.range(1, 70)),
                              static_cast<std::size_t>(rng.range(1, 70))};
    const bool acc = rng.below(2) == 0;
    const auto a = randoms(d.m * d.k, rng);
    const auto bn = randoms(d.k * d.n, rng);
    const auto bt = randoms(d.n * d.k, rng);
    const auto at = randoms(d.k * d.m, rng);
    const auto c0 = randoms(d.m * d.n, rng);
    auto s = c0, p = c0;
    kernels::serial::gemm_nn(a, bn, s, d, acc);
    kernels::parallel::gemm_nn(a, bn, p, d, acc);
    CHECK(bitwise_equal(s, p));
    s = c0, p = c0;
    kernels::serial::gemm_nt(a, bt, s, d, acc);
    kernels::parallel::gemm_nt(a, bt, p, d, acc);
    CHECK(bitwise_equal(s, p));
    s = c0, p = c0;
    kernels::serial::gemm_tn(at, bn, s, d, acc);
    kernels::parallel::gemm_tn(at, bn, p, d, acc);
    CHECK(bitwise_equal(s, p));
  }
}

TEST_CASE("serial gemm matches a textbook triple loop") {
  Rng rng(2);
  const kernels::GemmDims d{5, 7, 3};
  const auto a = randoms(35, rng), b = randoms(21, rng);
  std::vector<double> c(15, 0.0);
  kernels::serial::gemm_nn(a, b, c, d, false);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double want = 0.0;
      for (std::size_t p = 0; p < 7; ++p) want += a[i * 7 + p] * b[p * 3 + j];
      CHECK(c[i * 3 + j] == doctest::Approx(want).epsilon(1e-14));
    }
}

TEST_CASE("masked softmax: parallel equals serial, masked entries are zero") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto rows = static_cast<std::size_t>(rng.range(1, 90)), cols = static_cast<std::size_t>(rng.range(1, 90));
    const auto scores = randoms(rows * cols, rng);
    std::vector<std::uint8_t> allowed(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) allowed[i * cols + j] = rng.below(3) != 0;
      allowed[i * cols + rng.below(cols)] = 1;
    }
    std::vector<double> s(rows * cols), p(rows * cols);
    CHECK(kernels::serial::masked_softmax(scores, allowed, s, rows, cols) == -1);
    CHECK(kernels::parallel::masked_softmax(scores, allowed, p, rows, cols) == -1);
    CHECK(bitwise_equal(s, p));
    for (std::size_t i = 0; i < rows; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        if (!allowed[i * cols + j]) CHECK(s[i * cols + j] == 0.0);
        total += s[i * cols + j];
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("masked softmax reports a fully masked row") {
  const std::vector<double> scores{1, 2, 3, 4};
  const std::vector<std::uint8_t> allowed{1, 0, 0, 0};
  std::vector<double> out(4);
  CHECK(kernels::serial::masked_softmax(scores, allowed, out, 2, 2) == 1);
}
