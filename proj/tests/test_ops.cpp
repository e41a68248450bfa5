#include <doctest.h>

#include "htl/error.hpp"
#include "htl/ops.hpp"
#include "test_util.hpp"

using namespace htl;
using htl::testing::gradient_error;
using htl::testing::random_tensor;

TEST_CASE("op gradients match central differences") {
  Rng rng(7);
  const double tol = 1e-6;
  SUBCASE("matmul and matmul_nt") {
    CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return sum(mul(matmul(v[0], v[1]), matmul(v[0], v[1]))); },
                         {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng)}) < tol);
    CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return sum(mul(matmul_nt(v[0], v[1]), matmul_nt(v[0], v[1]))); },
                         {random_tensor({3, 4}, rng), random_tensor({2, 4}, rng)}) < tol);
  }
  SUBCASE("elementwise, bias and gelu") {
    CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return sum(gelu(add_row(scale(v[0], 1.5), v[1]))); },
                         {random_tensor({3, 4}, rng), random_tensor({4}, rng)}) < tol);
  }
  SUBCASE("layer norm") {
    CHECK(gradient_error(
              [](Tape&, const std::vector<Var>& v) {
                const auto y = layer_norm(v[0], v[1], v[2]);
                return sum(mul(y, y));
              },
              {random_tensor({3, 6}, rng), random_tensor({6}, rng), random_tensor({6}, rng)}) < tol);
  }
  SUBCASE("masked softmax") {
    AttentionMask m = build_causal_mask(5);
    const Tensor w = random_tensor({5, 5}, rng);
    CHECK(gradient_error(
              [&](Tape& t, const std::vector<Var>& v) { return sum(mul(masked_softmax(v[0], m), t.input(w))); },
              {random_tensor({5, 5}, rng)}) < tol);
  }
  SUBCASE("slicing, concatenation, transpose, gather") {
    const std::vector<int> ids{2, 0, 2, 1};
    CHECK(gradient_error(
              [&](Tape&, const std::vector<Var>& v) {
                const auto g = gather_rows(v[0], ids);
                const auto c = concat_cols({slice_cols(g, 1, 2), slice_cols(g, 0, 1)});
                const auto r = slice_rows(transpose(c), 1, 2);
                return sum(mul(r, r));
              },
              {random_tensor({3, 3}, rng)}) < tol);
  }
  SUBCASE("cross entropy and token log-probs") {
    const std::vector<int> targets{1, 3, 0, 2};
    const std::vector<std::size_t> positions{0, 2, 3};
    CHECK(gradient_error([&](Tape&, const std::vector<Var>& v) { return cross_entropy(v[0], targets, positions); },
                         {random_tensor({4, 5}, rng)}) < tol);
    const std::vector<std::size_t> rows{0, 1, 3};
    const std::vector<int> pick{4, 0, 2};
    CHECK(gradient_error([&](Tape&, const std::vector<Var>& v) { return sum(token_log_probs(v[0], rows, pick)); },
                         {random_tensor({4, 5}, rng)}) < tol);
  }
  SUBCASE("clipped objective and squared error") {
    const std::vector<double> old{-1.0, -0.5, -2.0};
    const std::vector<double> adv{0.7, -1.2, 0.3};
    Tensor lp({3}, {-1.05, -0.45, -2.02});
    CHECK(gradient_error([&](Tape&, const std::vector<Var>& v) { return ppo_clip_objective(v[0], old, adv, 0.2); }, {lp}) <
          tol);
    const std::vector<double> target{0.1, 0.2, -0.3};
    CHECK(gradient_error([&](Tape&, const std::vector<Var>& v) { return mean_squared_error(v[0], target); },
                         {random_tensor({3}, rng)}) < tol);
  }
}

TEST_CASE("clipped objective uses the clipped ratio when the ratio is large") {
  Tape tape;
  const std::vector<double> old{0.0};
  const std::vector<double> adv{2.0};
  Tensor lp({1}, {std::log(1.5)});
  ClipStats stats;
  const auto obj = ppo_clip_objective(tape.input(lp), old, adv, 0.2, &stats);
  CHECK(obj.value().item() == doctest::Approx(1.2 * 2.0).epsilon(1e-12));
  CHECK(stats.clip_fraction == 1.0);
}

TEST_CASE("leaf gradients accumulate across backward calls") {
  Tensor w({2}, {1.0, 2.0});
  w.set_requires_grad(true);
  for (int k = 0; k < 2; ++k) {
    Tape tape;
    tape.backward(sum(mul(tape.parameter(w), tape.parameter(w))));
  }
  CHECK(w.grad()[0] == 4.0);
  CHECK(w.grad()[1] == 8.0);
}

TEST_CASE("shape mismatches are rejected") {
  Tape tape;
  const auto a = tape.input(Tensor({2, 3}));
  const auto b = tape.input(Tensor({2, 3}));
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
}
