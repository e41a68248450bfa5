#include "htl/model.hpp"

#include <cmath>
#include <string>

#include "htl/error.hpp"
#include "htl/ops.hpp"
#include "htl/random.hpp"

namespace htl {

void ModelConfig::validate() const {
  const auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("model.") + name + " must be positive, got " + std::to_string(v));
  };
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(d_model, "d_model");
  positive(d_ff, "d_ff");
  positive(vocab_size, "vocab_size");
  positive(max_seq_len, "max_seq_len");
  if (d_model % n_heads != 0)
    throw ConfigError("model.d_model (" + std::to_string(d_model) + ") must be divisible by model.n_heads (" +
                      std::to_string(n_heads) + ")");
}

namespace {

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  Tensor t({rows, cols});
  for (double& v : t.values()) v = stddev * rng.normal();
  return t;
}

}  // namespace

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto d = static_cast<std::size_t>(config_.d_model);
  const auto ff = static_cast<std::size_t>(config_.d_ff);
  const auto vocab = static_cast<std::size_t>(config_.vocab_size);
  const auto len = static_cast<std::size_t>(config_.max_seq_len);
  Rng rng(derive_seed({config_.seed, 0x6d6f64656cULL}));
  const double in_std = 1.0 / std::sqrt(static_cast<double>(d));
  const double ff_std = 1.0 / std::sqrt(static_cast<double>(ff));
  const double resid_scale = 1.0 / std::sqrt(2.0 * config_.n_layers);

  params_.token_embedding = random_matrix(rng, vocab, d, 0.1);
  params_.position_embedding = random_matrix(rng, len, d, 0.1);
  for (int l = 0; l < config_.n_layers; ++l) {
    LayerParams layer;
    layer.ln1_gain = Tensor({d}, 1.0);
    layer.ln1_bias = Tensor({d}, 0.0);
    layer.wq = random_matrix(rng, d, d, in_std);
    layer.wk = random_matrix(rng, d, d, in_std);
    layer.wv = random_matrix(rng, d, d, in_std);
    layer.wo = random_matrix(rng, d, d, in_std * resid_scale);
    layer.ln2_gain = Tensor({d}, 1.0);
    layer.ln2_bias = Tensor({d}, 0.0);
    layer.w1 = random_matrix(rng, d, ff, in_std);
    layer.b1 = Tensor({ff}, 0.0);
    layer.w2 = random_matrix(rng, ff, d, ff_std * resid_scale);
    layer.b2 = Tensor({d}, 0.0);
    params_.layers.push_back(std::move(layer));
  }
  params_.final_gain = Tensor({d}, 1.0);
  params_.final_bias = Tensor({d}, 0.0);
  params_.unembedding = random_matrix(rng, d, vocab, in_std);
  value_head_.weight = Tensor({d, 1}, 0.0);
  value_head_.bias = Tensor({1}, 0.0);
}

std::vector<std::pair<std::string, Tensor*>> Model::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("token_embedding", &params_.token_embedding);
  out.emplace_back("position_embedding", &params_.position_embedding);
  for (std::size_t l = 0; l < params_.layers.size(); ++l) {
    auto& p = params_.layers[l];
    const std::string pre = "layers." + std::to_string(l) + ".";
    out.emplace_back(pre + "ln1_gain", &p.ln1_gain);
    out.emplace_back(pre + "ln1_bias", &p.ln1_bias);
    out.emplace_back(pre + "wq", &p.wq);
    out.emplace_back(pre + "wk", &p.wk);
    out.emplace_back(pre + "wv", &p.wv);
    out.emplace_back(pre + "wo", &p.wo);
    out.emplace_back(pre + "ln2_gain", &p.ln2_gain);
    out.emplace_back(pre + "ln2_bias", &p.ln2_bias);
    out.emplace_back(pre + "w1", &p.w1);
    out.emplace_back(pre + "b1", &p.b1);
    out.emplace_back(pre + "w2", &p.w2);
    out.emplace_back(pre + "b2", &p.b2);
  }
  out.emplace_back("final_gain", &params_.final_gain);
  out.emplace_back("final_bias", &params_.final_bias);
  out.emplace_back("unembedding", &params_.unembedding);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Model::named_parameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<Model*>(this)->named_parameters()) out.emplace_back(name, t);
  return out;
}

std::vector<Tensor*> Model::trunk_parameters() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<Tensor*> Model::value_parameters() { return {&value_head_.weight, &value_head_.bias}; }

void Model::set_requires_grad(bool trunk, bool value) {
  for (Tensor* t : trunk_parameters()) t->set_requires_grad(trunk);
  for (Tensor* t : value_parameters()) t->set_requires_grad(value);
}

void Model::zero_grad() {
  for (Tensor* t : trunk_parameters()) t->clear_grad();
  for (Tensor* t : value_parameters()) t->clear_grad();
}

void Model::check_tokens(std::span<const int> tokens) const {
  if (tokens.empty()) throw LengthError("empty token sequence");
  if (tokens.size() > static_cast<std::size_t>(config_.max_seq_len))
    throw LengthError("sequence of " + std::to_string(tokens.size()) + " tokens exceeds max_seq_len " +
                      std::to_string(config_.max_seq_len));
  for (int t : tokens)
    if (t < 0 || t >= config_.vocab_size)
      throw DimensionError("token id " + std::to_string(t) + " outside vocabulary of " +
                           std::to_string(config_.vocab_size));
}

Var attention_heads(Tape& tape, Var x, const AttentionMask& mask, Var wq, Var wk, Var wv, int n_heads) {
  (void)tape;
  const std::size_t d = x.value().cols();
  const std::size_t len = x.value().rows();
  if (mask.length() != len)
    throw DimensionError("mask of length " + std::to_string(mask.length()) + " for " + std::to_string(len) + " positions");
  const std::size_t hd = d / static_cast<std::size_t>(n_heads);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Var q = matmul(x, wq);
  Var k = matmul(x, wk);
  Var v = matmul(x, wv);
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * hd;
    Var qh = slice_cols(q, off, hd);
    Var kh = slice_cols(k, off, hd);
    Var vh = slice_cols(v, off, hd);
    Var scores = scale(matmul_nt(qh, kh), inv_scale);
    Var attn = masked_softmax(scores, mask);
    heads.push_back(matmul(attn, vh));
  }
  return n_heads == 1 ? heads.front() : concat_cols(heads);
}

BoundLayer bind_layer(Tape& tape, LayerParams& p) {
  return {tape.parameter(p.ln1_gain), tape.parameter(p.ln1_bias), tape.parameter(p.wq),
          tape.parameter(p.wk),       tape.parameter(p.wv),       tape.parameter(p.wo),
          tape.parameter(p.ln2_gain), tape.parameter(p.ln2_bias), tape.parameter(p.w1),
          tape.parameter(p.b1),       tape.parameter(p.w2),       tape.parameter(p.b2)};
}

BoundLayer bind_layer(Tape& tape, const LayerParams& p) {
  return {tape.view(p.ln1_gain), tape.view(p.ln1_bias), tape.view(p.wq), tape.view(p.wk),
          tape.view(p.wv),       tape.view(p.wo),       tape.view(p.ln2_gain), tape.view(p.ln2_bias),
          tape.view(p.w1),       tape.view(p.b1),       tape.view(p.w2),  tape.view(p.b2)};
}

Var attention_layer(Tape& tape, Var x, const AttentionMask& mask, const BoundLayer& layer, int n_heads) {
  Var h = layer_norm(x, layer.ln1_gain, layer.ln1_bias);
  Var a = attention_heads(tape, h, mask, layer.wq, layer.wk, layer.wv, n_heads);
  return add(x, matmul(a, layer.wo));
}

namespace {

Var bind(Tape& tape, Tensor& t) { return tape.parameter(t); }
Var bind(Tape& tape, const Tensor& t) { return tape.view(t); }

std::vector<int> position_ids(std::size_t n) {
  std::vector<int> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = static_cast<int>(i);
  return positions;
}

}  // namespace

Var Model::embed(Tape& tape, std::span<const int> tokens) {
  check_tokens(tokens);
  return add(gather_rows(tape.parameter(params_.token_embedding), tokens),
             gather_rows(tape.parameter(params_.position_embedding), position_ids(tokens.size())));
}

template <class Self>
ForwardOutput Model::run_layers(Self& self, Tape& tape, Var embedded, const AttentionMask& mask) {
  const std::size_t len = embedded.value().rows();
  if (len > static_cast<std::size_t>(self.config_.max_seq_len))
    throw LengthError("sequence of " + std::to_string(len) + " positions exceeds max_seq_len " +
                      std::to_string(self.config_.max_seq_len));
  Var x = embedded;
  for (auto& layer : self.params_.layers) {
    const BoundLayer b = bind_layer(tape, layer);
    x = attention_layer(tape, x, mask, b, self.config_.n_heads);
    Var h = layer_norm(x, b.ln2_gain, b.ln2_bias);
    Var f = gelu(add_row(matmul(h, b.w1), b.b1));
    x = add(x, add_row(matmul(f, b.w2), b.b2));
  }
  Var hidden = layer_norm(x, bind(tape, self.params_.final_gain), bind(tape, self.params_.final_bias));
  Var logits = matmul(hidden, bind(tape, self.params_.unembedding));
  return {logits, hidden};
}

ForwardOutput Model::forward_embedded(Tape& tape, Var embedded, const AttentionMask& mask) {
  return run_layers(*this, tape, embedded, mask);
}

ForwardOutput Model::forward(Tape& tape, std::span<const int> tokens, const AttentionMask& mask) {
  return forward_embedded(tape, embed(tape, tokens), mask);
}

ForwardOutput Model::forward_const(Tape& tape, std::span<const int> tokens, const AttentionMask& mask) const {
  check_tokens(tokens);
  Var x = add(gather_rows(tape.view(params_.token_embedding), tokens),
              gather_rows(tape.view(params_.position_embedding), position_ids(tokens.size())));
  return run_layers(*this, tape, x, mask);
}

Var Model::values(Tape& tape, Var hidden) {
  return add_row(matmul(hidden, tape.parameter(value_head_.weight)), tape.parameter(value_head_.bias));
}

Tensor Model::logits(std::span<const int> tokens, const AttentionMask& mask) const {
  Tape tape;
  return forward_const(tape, tokens, mask).logits.value();
}

}  // namespace htl
