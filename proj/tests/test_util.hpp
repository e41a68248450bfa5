#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "htl/mask.hpp"
#include "htl/ops.hpp"
#include "htl/random.hpp"
#include "htl/tape.hpp"

namespace htl::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

// Builds a scalar from tape inputs; used by gradient checks.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Largest relative error between tape gradients and central differences
// over every entry of every input.
inline double gradient_error(const ScalarFn& fn, std::vector<Tensor> inputs, double h = 1e-6) {
  Tape tape;
  std::vector<Var> vars;
  for (auto& t : inputs) {
    Tensor copy = t;
    copy.set_requires_grad(true);
    vars.push_back(tape.input(std::move(copy)));
  }
  tape.backward(fn(tape, vars));
  const auto eval = [&] {
    Tape t2;
    std::vector<Var> v2;
    for (auto& t : inputs) v2.push_back(t2.input(t));
    return fn(t2, v2).value().item();
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto analytic = tape.leaf_grad(vars[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double saved = inputs[k][i];
      inputs[k][i] = saved + h;
      const double up = eval();
      inputs[k][i] = saved - h;
      const double down = eval();
      inputs[k][i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double err = std::abs(a - numeric) / std::max(1e-6, std::max(std::abs(a), std::abs(numeric)));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline SegmentedSequence random_segmentation(Rng& rng, std::size_t max_len = 128, std::size_t min_q = 4) {
  const auto len = static_cast<std::size_t>(rng.range(static_cast<std::int64_t>(min_q) + 2, static_cast<std::int64_t>(max_len)));
  const auto q = static_cast<std::size_t>(rng.range(static_cast<std::int64_t>(min_q), static_cast<std::int64_t>(len) - 2));
  const auto c = static_cast<std::size_t>(rng.range(1, static_cast<std::int64_t>(len - q) - 1));
  SegmentedSequence s;
  s.tokens.assign(len, 0);
  s.q_span = {0, q};
  s.c_span = {q, q + c};
  s.p_span = {q + c, len};
  return s;
}

// Per-entry statement of the focus rule, written independently of the
// library's construction.
inline bool focus_rule(const SegmentedSequence& s, std::size_t sinks, std::size_t i, std::size_t j) {
  if (j > i) return false;
  if (i < s.p_span.begin) return true;
  return j < sinks || (j >= s.c_span.begin && j < s.c_span.end) || (j >= s.p_span.begin && j < s.p_span.end);
}

}  // namespace htl::testing
