#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "htl/mask.hpp"
#include "htl/tape.hpp"
#include "htl/tensor.hpp"

namespace htl {

struct ModelConfig {
  int n_layers = 4;
  int n_heads = 4;
  int d_model = 128;
  int d_ff = 512;
  int vocab_size = 0;
  int max_seq_len = 512;
  std::uint64_t seed = 0;

  // Throws ConfigError on any violated invariant.
  void validate() const;
  int head_dim() const { return d_model / n_heads; }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerParams {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, wk, wv, wo;  // [d×d]
  Tensor ln2_gain, ln2_bias;
  Tensor w1, b1;  // [d×ff], [ff]
  Tensor w2, b2;  // [ff×d], [d]
};

struct ModelParams {
  Tensor token_embedding;     // [V×d]
  Tensor position_embedding;  // [max_len×d]
  std::vector<LayerParams> layers;
  Tensor final_gain, final_bias;
  Tensor unembedding;  // [d×V]
};

/// Linear map from final hidden states to one scalar per position.
struct ValueHead {
  Tensor weight;  // [d×1]
  Tensor bias;    // [1]
};

struct ForwardOutput {
  Var logits;  // [L×V]
  Var hidden;  // [L×d], after the final layer norm
};

/// Decoder-only pre-norm transformer with learned absolute positions and an
/// externally supplied additive attention mask.
class Model {
 public:
  Model() = default;
  // Seeded initialization from config.seed.
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }
  ValueHead& value_head() { return value_head_; }
  const ValueHead& value_head() const { return value_head_; }

  // Stable, ordered list used by optimizers and checkpoints.
  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  std::vector<std::pair<std::string, const Tensor*>> named_parameters() const;
  std::vector<Tensor*> trunk_parameters();
  std::vector<Tensor*> value_parameters();
  void set_requires_grad(bool trunk, bool value);
  void zero_grad();

  // token + position embeddings, [L×d].
  Var embed(Tape& tape, std::span<const int> tokens);
  // Runs the layer stack on precomputed input embeddings.
  ForwardOutput forward_embedded(Tape& tape, Var embedded, const AttentionMask& mask);
  ForwardOutput forward(Tape& tape, std::span<const int> tokens, const AttentionMask& mask);
  Var values(Tape& tape, Var hidden);

  // Read-only forward pass; never touches gradients.
  ForwardOutput forward_const(Tape& tape, std::span<const int> tokens, const AttentionMask& mask) const;
  // Tape-free convenience: logits [L×V] under `mask`.
  Tensor logits(std::span<const int> tokens, const AttentionMask& mask) const;

 private:
  void check_tokens(std::span<const int> tokens) const;
  template <class Self>
  static ForwardOutput run_layers(Self& self, Tape& tape, Var embedded, const AttentionMask& mask);

  ModelConfig config_;
  ModelParams params_;
  ValueHead value_head_;
};

/// Per-head A·(X W_V), concatenated: the attention core before the output
/// projection. `x` is the (already normalized) layer input.
Var attention_heads(Tape& tape, Var x, const AttentionMask& mask, Var wq, Var wk, Var wv, int n_heads);

/// LayerParams bound as tape leaves.
struct BoundLayer {
  Var ln1_gain, ln1_bias, wq, wk, wv, wo, ln2_gain, ln2_bias, w1, b1, w2, b2;
};
// Mutable parameters are bound with gradient tracking (when requested by the
// tensors); const parameters are bound as read-only views.
BoundLayer bind_layer(Tape& tape, LayerParams& layer);
BoundLayer bind_layer(Tape& tape, const LayerParams& layer);

/// One residual attention sublayer: x + (attention_heads(LN(x)) · W_O).
Var attention_layer(Tape& tape, Var x, const AttentionMask& mask, const BoundLayer& layer, int n_heads);

}  // namespace htl
