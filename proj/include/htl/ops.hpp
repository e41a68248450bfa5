#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "htl/mask.hpp"
#include "htl/tape.hpp"
#include "htl/tensor.hpp"

namespace htl {

inline constexpr double kLayerNormEps = 1e-5;

// Tape-free forward kernels. The tape ops below compute identical values.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor masked_softmax(const Tensor& scores, const AttentionMask& mask);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps);
double gelu(double x);

// Differentiable ops. All operands must live on the same tape.
Var matmul(Var a, Var b);     // [m×k]·[k×n]
Var matmul_nt(Var a, Var b);  // [m×k]·[n×k]ᵀ
Var transpose(Var a);
Var add(Var a, Var b);
Var add_row(Var x, Var bias);  // x[R×C] + bias[C] on every row
Var mul(Var a, Var b);         // elementwise
Var scale(Var a, double s);
Var sum(Var a);
Var gelu(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps);
Var masked_softmax(Var scores, const AttentionMask& mask);
Var gather_rows(Var table, std::span<const int> ids);
Var slice_cols(Var x, std::size_t begin, std::size_t width);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var x, std::size_t begin, std::size_t count);

/// Mean over `positions` of -log softmax(logits[p])[targets[p]]. `targets`
/// is indexed by logits row.
Var cross_entropy(Var logits, std::span<const int> targets, std::span<const std::size_t> positions);

/// log softmax(logits[rows[i]])[ids[i]] for each i, as a rank-1 tensor.
Var token_log_probs(Var logits, std::span<const std::size_t> rows, std::span<const int> ids);

struct ClipStats {
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
  double max_ratio_deviation = 0.0;  // max |ratio - 1|
};

/// Mean over tokens of min(r·A, clip(r, 1-ε, 1+ε)·A) with r = exp(new - old).
Var ppo_clip_objective(Var new_log_probs, std::span<const double> old_log_probs,
                       std::span<const double> advantages, double clip_epsilon, ClipStats* stats = nullptr);

/// Mean of (pred - target)^2.
Var mean_squared_error(Var pred, std::span<const double> target);

}  // namespace htl
