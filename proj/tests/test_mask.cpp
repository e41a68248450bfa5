#include <doctest.h>

#include <cmath>

#include "htl/error.hpp"
#include "htl/mask.hpp"
#include "test_util.hpp"

using namespace htl;
using htl::testing::focus_rule;
using htl::testing::random_segmentation;

namespace {

SegmentedSequence segmentation(std::size_t q, std::size_t c, std::size_t p) {
  SegmentedSequence s;
  s.tokens.assign(q + c + p, 0);
  s.q_span = {0, q};
  s.c_span = {q, q + c};
  s.p_span = {q + c, q + c + p};
  return s;
}

}  // namespace

TEST_CASE("causal mask") {
  const auto one = build_causal_mask(1);
  CHECK(one.allowed(0, 0));
  CHECK(one.additive(0, 0) == 0.0);
  const auto m = build_causal_mask(9);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(m.zeros_in_row(i) == i + 1);
    for (std::size_t j = 0; j < 9; ++j) {
      CHECK(m.allowed(i, j) == (j <= i));
      if (j > i) CHECK(std::isinf(m.additive(i, j)));
    }
  }
}

TEST_CASE("focus mask worked example") {
  const auto s = segmentation(6, 5, 3);
  const auto m = build_focus_mask(s, 4);
  std::vector<std::size_t> zeros;
  for (std::size_t j = 0; j < s.length(); ++j)
    if (m.allowed(12, j)) zeros.push_back(j);
  CHECK(zeros == std::vector<std::size_t>{0, 1, 2, 3, 6, 7, 8, 9, 10, 11, 12});
}

TEST_CASE("focus mask matches the per-entry rule on random segmentations") {
  Rng rng(21);
  for (int k = 0; k < 1000; ++k) {
    const auto s = random_segmentation(rng);
    const auto sinks = static_cast<std::size_t>(rng.range(0, 4));
    const auto m = build_focus_mask(s, sinks);
    bool same = true;
    for (std::size_t i = 0; i < s.length(); ++i) {
      CHECK(m.zeros_in_row(i) >= 1);
      for (std::size_t j = 0; j < s.length(); ++j) same = same && m.allowed(i, j) == focus_rule(s, sinks, i, j);
    }
    REQUIRE(same);
  }
}

TEST_CASE("focus mask with all of Q as sinks equals the causal mask") {
  const auto s = segmentation(7, 4, 5);
  CHECK(build_focus_mask(s, 7) == build_causal_mask(s.length()));
}

TEST_CASE("focus mask rejects bad segmentations") {
  auto s = segmentation(6, 5, 3);
  s.c_span = {5, 11};
  CHECK_THROWS_AS(build_focus_mask(s, 4), SegmentationError);
  auto gap = segmentation(6, 5, 3);
  gap.p_span.end = 13;
  CHECK_THROWS_AS(build_focus_mask(gap, 4), SegmentationError);
}

TEST_CASE("blend masks: limits, counts, determinism, nesting") {
  Rng rng(22);
  for (int k = 0; k < 200; ++k) {
    const auto s = random_segmentation(rng, 96);
    const auto seed = rng.next();
    CHECK(blend_masks(s, 0.0, 4, seed) == build_causal_mask(s.length()));
    CHECK(blend_masks(s, 1.0, 4, seed) == build_focus_mask(s, 4));
    double prev = 0.0;
    AttentionMask prev_mask = blend_masks(s, 0.0, 4, seed);
    for (double lam : {0.1, 0.25, 0.5, 0.8, 1.0}) {
      const auto m = blend_masks(s, lam, 4, seed);
      for (std::size_t i = 0; i < s.length(); ++i)
        for (std::size_t j = 0; j < s.length(); ++j) {
          if (j > i) CHECK_FALSE(m.allowed(i, j));
          if (!prev_mask.allowed(i, j)) CHECK_FALSE(m.allowed(i, j));
        }
      prev_mask = m;
      prev = lam;
    }
    (void)prev;
  }
}

TEST_CASE("blend mask at half coverage hides exactly half of eight maskable columns") {
  const auto s = segmentation(12, 3, 4);  // maskable = q minus 4 sinks = 8
  const auto a = blend_masks(s, 0.5, 4, 99);
  const auto b = blend_masks(s, 0.5, 4, 99);
  CHECK(a == b);
  const auto last = s.length() - 1;
  std::size_t hidden = 0;
  for (std::size_t j = 4; j < 12; ++j) hidden += a.allowed(last, j) ? 0 : 1;
  CHECK(hidden == 4);
  for (std::size_t j = 0; j < 4; ++j) CHECK(a.allowed(last, j));
  // Hidden columns are hidden from every P row, and from no other row.
  for (std::size_t j = 4; j < 12; ++j) {
    const bool h = !a.allowed(last, j);
    for (std::size_t i = s.p_span.begin; i < s.length(); ++i) CHECK(a.allowed(i, j) == !h);
    for (std::size_t i = j; i < s.p_span.begin; ++i) CHECK(a.allowed(i, j));
  }
  CHECK(masked_column_count(0.5, 8) == 4);
  CHECK(masked_column_count(0.01, 8) == 1);
  CHECK(masked_column_count(0.0, 8) == 0);
}

TEST_CASE("blend masks reject coverage outside [0, 1]") {
  const auto s = segmentation(8, 2, 2);
  CHECK_THROWS_AS(blend_masks(s, -0.1, 4, 1), RangeError);
  CHECK_THROWS_AS(blend_masks(s, 1.1, 4, 1), RangeError);
}
