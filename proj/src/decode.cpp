#include "htl/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "htl/error.hpp"
#include "htl/kernels.hpp"
#include "htl/ops.hpp"
#include "htl/random.hpp"

namespace htl {

namespace {

void layer_norm_row(std::span<const double> x, const Tensor& gain, const Tensor& bias, std::span<double> out) {
  const std::size_t d = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d);
  const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t j = 0; j < d; ++j) out[j] = (x[j] - mean) * inv * gain[j] + bias[j];
}

// out = x[1×k] · w[k×n]
void row_times(std::span<const double> x, const Tensor& w, std::span<double> out) {
  kernels::gemm_nn(x, w.values(), out, {1, w.shape()[0], w.shape()[1]}, false);
}

}  // namespace

DecodeState::DecodeState(const Model& model) : model_(&model) {
  keys_.resize(model.params().layers.size());
  values_.resize(model.params().layers.size());
}

void DecodeState::push(int token) {
  const ModelConfig& cfg = model_->config();
  const ModelParams& p = model_->params();
  if (token < 0 || token >= cfg.vocab_size)
    throw DimensionError("token id " + std::to_string(token) + " outside vocabulary of " + std::to_string(cfg.vocab_size));
  if (length_ >= static_cast<std::size_t>(cfg.max_seq_len))
    throw LengthError("decode position " + std::to_string(length_) + " reaches max_seq_len " +
                      std::to_string(cfg.max_seq_len));
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto ff = static_cast<std::size_t>(cfg.d_ff);
  const auto heads = static_cast<std::size_t>(cfg.n_heads);
  const std::size_t hd = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const std::size_t pos = length_;
  const std::size_t n = pos + 1;

  std::vector<double> x(d), h(d), q(d), k(d), v(d), attn(d), proj(d), f(ff), scores(n), weights(n);
  std::vector<std::uint8_t> allowed(n, 1);
  const auto tok = static_cast<std::size_t>(token);
  for (std::size_t j = 0; j < d; ++j)
    x[j] = p.token_embedding[tok * d + j] + p.position_embedding[pos * d + j];

  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const LayerParams& layer = p.layers[l];
    layer_norm_row(x, layer.ln1_gain, layer.ln1_bias, h);
    row_times(h, layer.wq, q);
    row_times(h, layer.wk, k);
    row_times(h, layer.wv, v);
    auto& kc = keys_[l];
    auto& vc = values_[l];
    kc.insert(kc.end(), k.begin(), k.end());
    vc.insert(vc.end(), v.begin(), v.end());
    for (std::size_t hh = 0; hh < heads; ++hh) {
      const std::size_t off = hh * hd;
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < hd; ++c) s += q[off + c] * kc[j * d + off + c];
        scores[j] = s * inv_scale;
      }
      kernels::masked_softmax(scores, allowed, weights, 1, n);
      for (std::size_t c = 0; c < hd; ++c) attn[off + c] = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double w = weights[j];
        for (std::size_t c = 0; c < hd; ++c) attn[off + c] += w * vc[j * d + off + c];
      }
    }
    row_times(attn, layer.wo, proj);
    for (std::size_t j = 0; j < d; ++j) x[j] += proj[j];
    layer_norm_row(x, layer.ln2_gain, layer.ln2_bias, h);
    row_times(h, layer.w1, f);
    for (std::size_t j = 0; j < ff; ++j) f[j] = gelu(f[j] + layer.b1[j]);
    row_times(f, layer.w2, proj);
    for (std::size_t j = 0; j < d; ++j) x[j] += proj[j] + layer.b2[j];
  }
  hidden_.assign(d, 0.0);
  layer_norm_row(x, p.final_gain, p.final_bias, hidden_);
  logits_.assign(static_cast<std::size_t>(cfg.vocab_size), 0.0);
  row_times(hidden_, p.unembedding, logits_);
  ++length_;
}

double DecodeState::value() const {
  const ValueHead& vh = model_->value_head();
  double s = 0.0;
  for (std::size_t j = 0; j < hidden_.size(); ++j) s += hidden_[j] * vh.weight[j];
  return s + vh.bias[0];
}

double log_prob_of(std::span<const double> logits, int id) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return logits[static_cast<std::size_t>(id)] - (mx + std::log(z));
}

namespace {

int argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<int>(best);
}

int sample(std::span<const double> logits, double temperature, Rng& rng) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> w(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    w[i] = std::exp((logits[i] - mx) / temperature);
    z += w[i];
  }
  const double u = rng.uniform() * z;
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u < acc) return static_cast<int>(i);
  }
  return argmax(logits);
}

}  // namespace

Decoded generate(const Model& model, std::span<const int> prompt, const DecodeOptions& options) {
  if (prompt.empty()) throw LengthError("generate() needs a nonempty prompt");
  if (options.max_new < 1) throw RangeError("generate() needs max_new >= 1");
  const auto max_len = static_cast<std::size_t>(model.config().max_seq_len);
  if (prompt.size() > max_len)
    throw LengthError("prompt of " + std::to_string(prompt.size()) + " tokens exceeds max_seq_len " +
                      std::to_string(max_len));
  DecodeState state(model);
  for (int t : prompt) state.push(t);
  Rng rng(options.seed);
  Decoded out;
  for (int i = 0; i < options.max_new; ++i) {
    const auto logits = state.logits();
    const int next = options.temperature > 0.0 ? sample(logits, options.temperature, rng) : argmax(logits);
    out.tokens.push_back(next);
    out.log_probs.push_back(log_prob_of(logits, next));
    out.values.push_back(state.value());
    const bool is_stop = (options.eos && next == *options.eos) ||
                         std::find(options.stop_tokens.begin(), options.stop_tokens.end(), next) !=
                             options.stop_tokens.end();
    if (is_stop) {
      out.stopped = true;
      break;
    }
    if (state.length() >= max_len) break;
    state.push(next);
  }
  return out;
}

std::vector<double> score_continuation(const Model& model, std::span<const int> prompt,
                                       std::span<const int> continuation) {
  if (prompt.empty()) throw LengthError("score_continuation() needs a nonempty prompt");
  DecodeState state(model);
  for (int t : prompt) state.push(t);
  std::vector<double> out;
  out.reserve(continuation.size());
  for (std::size_t i = 0; i < continuation.size(); ++i) {
    out.push_back(log_prob_of(state.logits(), continuation[i]));
    if (i + 1 < continuation.size()) state.push(continuation[i]);
  }
  return out;
}

}  // namespace htl
