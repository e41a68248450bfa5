#include "htl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "htl/error.hpp"
#include "htl/kernels.hpp"

namespace htl {

namespace {

using kernels::GemmDims;

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw DimensionError(std::string(what) + " expects a matrix, got " + shape_string(t.shape()));
}

Tape& same_tape(std::initializer_list<Var> vars) {
  Tape* t = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw ProvenanceError("unbound Var passed to op");
    if (t && v.tape() != t) throw ProvenanceError("operands live on different tapes");
    t = v.tape();
  }
  return *t;
}

void accumulate(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluK = 0.044715;

double gelu_grad(double x) {
  const double u = kGeluC * (x + kGeluK * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * kGeluK * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape-free forward kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.shape()[1] != b.shape()[0])
    throw DimensionError("matmul inner extents differ: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  const GemmDims d{a.shape()[0], a.shape()[1], b.shape()[1]};
  Tensor c({d.m, d.n});
  kernels::gemm_nn(a.values(), b.values(), c.values(), d, false);
  return c;
}

Tensor masked_softmax(const Tensor& scores, const AttentionMask& mask) {
  require_matrix(scores, "masked_softmax");
  if (scores.shape()[0] != mask.length() || scores.shape()[1] != mask.length())
    throw DimensionError("masked_softmax: scores " + shape_string(scores.shape()) + " vs mask of length " +
                         std::to_string(mask.length()));
  Tensor out(scores.shape());
  const auto bad = kernels::masked_softmax(scores.values(), mask.flags(), out.values(), mask.length(), mask.length());
  if (bad >= 0) throw DegenerateRowError("attention row " + std::to_string(bad) + " is fully masked");
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.cols();
  if (gain.size() != d || bias.size() != d)
    throw DimensionError("layer_norm: gain/bias size must equal last extent " + std::to_string(d));
  Tensor y(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* xr = x.values().data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) y[r * d + j] = (xr[j] - mean) * inv * gain[j] + bias[j];
  }
  return y;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluK * x * x * x))); }

// ---------------------------------------------------------------------------
// Differentiable ops

Var matmul(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out = matmul(av, bv);
  const GemmDims d{av.shape()[0], av.shape()[1], bv.shape()[1]};
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib, d](Tape& t, std::size_t o) {
    const auto g = t.grad_at(o);
    if (t.tracks(ia)) kernels::gemm_nt(g, t.value_at(ib).values(), t.grad_buffer(ia), {d.m, d.n, d.k}, true);
    if (t.tracks(ib)) kernels::gemm_tn(t.value_at(ia).values(), g, t.grad_buffer(ib), {d.k, d.m, d.n}, true);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul_nt");
  require_matrix(bv, "matmul_nt");
  if (av.shape()[1] != bv.shape()[1])
    throw DimensionError("matmul_nt inner extents differ: " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()) + "^T");
  const GemmDims d{av.shape()[0], av.shape()[1], bv.shape()[0]};
  Tensor out({d.m, d.n});
  kernels::gemm_nt(av.values(), bv.values(), out.values(), d, false);
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib, d](Tape& t, std::size_t o) {
    const auto g = t.grad_at(o);  // [m×n]
    // dA = G·B, dB = Gᵀ·A
    if (t.tracks(ia)) kernels::gemm_nn(g, t.value_at(ib).values(), t.grad_buffer(ia), {d.m, d.n, d.k}, true);
    if (t.tracks(ib)) kernels::gemm_tn(g, t.value_at(ia).values(), t.grad_buffer(ib), {d.n, d.m, d.k}, true);
  });
}

Var transpose(Var a) {
  Tape& tape = same_tape({a});
  const Tensor& av = a.value();
  require_matrix(av, "transpose");
  const std::size_t r = av.shape()[0], c = av.shape()[1];
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
  const auto ia = a.id();
  return tape.record(std::move(out), {a}, [ia, r, c](Tape& t, std::size_t o) {
    const auto g = t.grad_at(o);
    auto ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape())
    throw DimensionError("add shapes differ: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t o) {
    const auto g = t.grad_at(o);
    if (t.tracks(ia)) accumulate(t.grad_buffer(ia), g);
    if (t.tracks(ib)) accumulate(t.grad_buffer(ib), g);
  });
}

Var add_row(Var x, Var bias) {
  Tape& tape = same_tape({x, bias});
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  const std::size_t cols = xv.cols(), rows = xv.rows();
  if (bv.size() != cols)
    throw DimensionError("add_row: bias of size " + std::to_string(bv.size()) + " vs row width " + std::to_string(cols));
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] + bv[c];
  const auto ix = x.id(), ib = bias.id();
  return tape.record(std::move(out), {x, bias}, [ix, ib, rows, cols](Tape& t, std::size_t o) {
    const auto g = t.grad_at(o);
    if (t.tracks(ix)) accumulate(t.grad_buffer(ix), g);
    if (t.tracks(ib)) {
      auto gb = t.grad_buffer(ib);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape())
    throw DimensionError("mul shapes differ: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t o) {
    const auto g = t.grad_at(o);
    const auto& va = t.value_at(ia);
    const auto& vb = t.value_at(ib);
    if (t.tracks(ia)) {
      auto ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (t.tracks(ib)) {
      auto gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

Var scale(Var a, double s) {
  Tape& tape = same_tape({a});
  Tensor out = a.value();
  out.clear_grad();
  out.set_requires_grad(false);
  for (double& v : out.values()) v *= s;
  const auto ia = a.id();
  return tape.record(std::move(out), {a}, [ia, s](Tape& t, std::size_t o) {
    const auto g = t.grad_at(o);
    auto ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var sum(Var a) {
  Tape& tape = same_tape({a});
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const auto ia = a.id();
  return tape.record(Tensor::scalar(s), {a}, [ia](Tape& t, std::size_t o) {
    const double g = t.grad_at(o)[0];
    for (double& v : t.grad_buffer(ia)) v += g;
  });
}

Var gelu(Var a) {
  Tape& tape = same_tape({a});
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = gelu(av[i]);
  const auto ia = a.id();
  return tape.record(std::move(out), {a}, [ia](Tape& t, std::size_t o) {
    const auto g = t.grad_at(o);
    const auto& x = t.value_at(ia);
    auto ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * gelu_grad(x[i]);
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& tape = same_tape({x, gain, bias});
  const Tensor& xv = x.value();
  Tensor out = layer_norm(xv, gain.value(), bias.value(), eps);
  const std::size_t d = xv.cols(), rows = xv.rows();
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return tape.record(std::move(out), {x, gain, bias}, [ix, ig, ib, d, rows, eps](Tape& t, std::size_t o) {
    const auto g = t.grad_at(o);
    const auto& xv = t.value_at(ix);
    const auto& gv = t.value_at(ig);
    std::vector<double> xhat(d), dxhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = xv.values().data() + r * d;
      const double* gr = g.data() + r * d;
      double mean = 0.0;
      for (std::size_t j = 0; j < d; ++j) mean += xr[j];
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + eps);
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        xhat[j] = (xr[j] - mean) * inv;
        dxhat[j] = gr[j] * gv[j];
        mean_dxhat += dxhat[j];
        mean_dxhat_xhat += dxhat[j] * xhat[j];
      }
      mean_dxhat /= static_cast<double>(d);
      mean_dxhat_xhat /= static_cast<double>(d);
      if (t.tracks(ix)) {
        auto gx = t.grad_buffer(ix);
        for (std::size_t j = 0; j < d; ++j)
          gx[r * d + j] += inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
      }
      if (t.tracks(ig)) {
        auto gg = t.grad_buffer(ig);
        for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * xhat[j];
      }
      if (t.tracks(ib)) {
        auto gb = t.grad_buffer(ib);
        for (std::size_t j = 0; j < d; ++j) gb[j] += gr[j];
      }
    }
  });
}

Var masked_softmax(Var scores, const AttentionMask& mask) {
  Tape& tape = same_tape({scores});
  Tensor out = masked_softmax(scores.value(), mask);
  const std::size_t n = mask.length();
  const auto is = scores.id();
  return tape.record(std::move(out), {scores}, [is, n](Tape& t, std::size_t o) {
    const auto g = t.grad_at(o);
    const auto& a = t.value_at(o);
    auto gs = t.grad_buffer(is);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += a[i * n + j] * g[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gs[i * n + j] += a[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  Tape& tape = same_tape({table});
  const Tensor& tv = table.value();
  require_matrix(tv, "gather_rows");
  const std::size_t vocab = tv.shape()[0], d = tv.shape()[1];
  if (ids.empty()) throw DimensionError("gather_rows with no ids");
  Tensor out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab)
      throw DimensionError("row id " + std::to_string(ids[r]) + " outside table of " + std::to_string(vocab));
    std::copy_n(tv.values().data() + static_cast<std::size_t>(ids[r]) * d, d, out.values().data() + r * d);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  const auto it = table.id();
  return tape.record(std::move(out), {table}, [it, idv = std::move(idv), d](Tape& t, std::size_t o) {
    const auto g = t.grad_at(o);
    auto gt = t.grad_buffer(it);
    for (std::size_t r = 0; r < idv.size(); ++r) {
      const auto row = static_cast<std::size_t>(idv[r]);
      for (std::size_t j = 0; j < d; ++j) gt[row * d + j] += g[r * d + j];
    }
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t width) {
  Tape& tape = same_tape({x});
  const Tensor& xv = x.value();
  require_matrix(xv, "slice_cols");
  const std::size_t rows = xv.shape()[0], cols = xv.shape()[1];
  if (width == 0 || begin + width > cols) throw DimensionError("slice_cols out of range");
  Tensor out({rows, width});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xv.values().data() + r * cols + begin, width, out.values().data() + r * width);
  const auto ix = x.id();
  return tape.record(std::move(out), {x}, [ix, rows, cols, begin, width](Tape& t, std::size_t o) {
    const auto g = t.grad_at(o);
    auto gx = t.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < width; ++j) gx[r * cols + begin + j] += g[r * width + j];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  Tape& tape = *parts.front().tape();
  const std::size_t rows = parts.front().value().shape()[0];
  std::size_t cols = 0;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    if (p.tape() != &tape) throw ProvenanceError("operands live on different tapes");
    const Tensor& v = p.value();
    require_matrix(v, "concat_cols");
    if (v.shape()[0] != rows) throw DimensionError("concat_cols row counts differ");
    widths.push_back(v.shape()[1]);
    cols += v.shape()[1];
  }
  Tensor out({rows, cols});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.values().data() + r * widths[k], widths[k], out.values().data() + r * cols + off);
    off += widths[k];
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return tape.record(std::move(out), parts, [ids, widths, rows, cols](Tape& t, std::size_t o) {
    const auto g = t.grad_at(o);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.tracks(ids[k])) {
        auto gp = t.grad_buffer(ids[k]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j) gp[r * widths[k] + j] += g[r * cols + off + j];
      }
      off += widths[k];
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  Tape& tape = same_tape({x});
  const Tensor& xv = x.value();
  const std::size_t cols = xv.cols();
  if (count == 0 || begin + count > xv.rows()) throw DimensionError("slice_rows out of range");
  Tensor out({count, cols});
  std::copy_n(xv.values().data() + begin * cols, count * cols, out.values().data());
  const auto ix = x.id();
  return tape.record(std::move(out), {x}, [ix, begin, count, cols](Tape& t, std::size_t o) {
    const auto g = t.grad_at(o);
    auto gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < count * cols; ++i) gx[begin * cols + i] += g[i];
  });
}

namespace {

// log-sum-exp of one row.
double row_lse(const double* row, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, row[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
  return mx + std::log(z);
}

}  // namespace

Var cross_entropy(Var logits, std::span<const int> targets, std::span<const std::size_t> positions) {
  Tape& tape = same_tape({logits});
  const Tensor& lv = logits.value();
  require_matrix(lv, "cross_entropy");
  const std::size_t rows = lv.shape()[0], vocab = lv.shape()[1];
  if (positions.empty()) throw EmptyLossError("cross_entropy over zero contributing positions");
  if (targets.size() != rows)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(rows) + " rows");
  double total = 0.0;
  for (auto p : positions) {
    if (p >= rows) throw DimensionError("cross_entropy position out of range");
    const int y = targets[p];
    if (y < 0 || static_cast<std::size_t>(y) >= vocab)
      throw DimensionError("target id " + std::to_string(y) + " outside vocabulary of " + std::to_string(vocab));
    const double* row = lv.values().data() + p * vocab;
    total += row_lse(row, vocab) - row[y];
  }
  const double n = static_cast<double>(positions.size());
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<std::size_t> pos(positions.begin(), positions.end());
  const auto il = logits.id();
  return tape.record(Tensor::scalar(total / n), {logits},
                     [il, tg = std::move(tg), pos = std::move(pos), vocab, n](Tape& t, std::size_t o) {
                       const double g = t.grad_at(o)[0] / n;
                       const auto& lv = t.value_at(il);
                       auto gl = t.grad_buffer(il);
                       for (auto p : pos) {
                         const double* row = lv.values().data() + p * vocab;
                         const double lse = row_lse(row, vocab);
                         for (std::size_t j = 0; j < vocab; ++j) gl[p * vocab + j] += g * std::exp(row[j] - lse);
                         gl[p * vocab + static_cast<std::size_t>(tg[p])] -= g;
                       }
                     });
}

Var token_log_probs(Var logits, std::span<const std::size_t> rows, std::span<const int> ids) {
  Tape& tape = same_tape({logits});
  const Tensor& lv = logits.value();
  require_matrix(lv, "token_log_probs");
  const std::size_t vocab = lv.shape()[1];
  if (rows.size() != ids.size() || rows.empty()) throw DimensionError("token_log_probs: rows/ids mismatch or empty");
  Tensor out({rows.size()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= lv.shape()[0] || ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab)
      throw DimensionError("token_log_probs index out of range");
    const double* row = lv.values().data() + rows[i] * vocab;
    out[i] = row[ids[i]] - row_lse(row, vocab);
  }
  std::vector<std::size_t> rv(rows.begin(), rows.end());
  std::vector<int> iv(ids.begin(), ids.end());
  const auto il = logits.id();
  return tape.record(std::move(out), {logits}, [il, rv = std::move(rv), iv = std::move(iv), vocab](Tape& t, std::size_t o) {
    const auto g = t.grad_at(o);
    const auto& lv = t.value_at(il);
    auto gl = t.grad_buffer(il);
    for (std::size_t i = 0; i < rv.size(); ++i) {
      const double* row = lv.values().data() + rv[i] * vocab;
      const double lse = row_lse(row, vocab);
      for (std::size_t j = 0; j < vocab; ++j) gl[rv[i] * vocab + j] -= g[i] * std::exp(row[j] - lse);
      gl[rv[i] * vocab + static_cast<std::size_t>(iv[i])] += g[i];
    }
  });
}

Var ppo_clip_objective(Var new_log_probs, std::span<const double> old_log_probs, std::span<const double> advantages,
                       double clip_epsilon, ClipStats* stats) {
  Tape& tape = same_tape({new_log_probs});
  const Tensor& nv = new_log_probs.value();
  const std::size_t n = nv.size();
  if (old_log_probs.size() != n || advantages.size() != n || n == 0)
    throw DimensionError("ppo_clip_objective: array lengths differ");
  std::vector<double> ratio(n);
  // d objective / d new_logp per token: r·A when the unclipped branch is active, else 0.
  std::vector<double> slope(n);
  double total = 0.0;
  std::size_t clipped = 0;
  double ratio_sum = 0.0, max_dev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = std::exp(nv[i] - old_log_probs[i]);
    const double a = advantages[i];
    const double rc = std::clamp(r, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    const double unclipped = r * a, clip_term = rc * a;
    if (clip_term < unclipped) {
      total += clip_term;
      slope[i] = 0.0;
    } else {
      total += unclipped;
      slope[i] = r * a;
    }
    if (r < 1.0 - clip_epsilon || r > 1.0 + clip_epsilon) ++clipped;
    ratio[i] = r;
    ratio_sum += r;
    max_dev = std::max(max_dev, std::abs(r - 1.0));
  }
  if (stats) {
    stats->clip_fraction = static_cast<double>(clipped) / static_cast<double>(n);
    stats->mean_ratio = ratio_sum / static_cast<double>(n);
    stats->max_ratio_deviation = max_dev;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto in = new_log_probs.id();
  return tape.record(Tensor::scalar(total * inv_n), {new_log_probs},
                     [in, slope = std::move(slope), inv_n](Tape& t, std::size_t o) {
                       const double g = t.grad_at(o)[0] * inv_n;
                       auto gn = t.grad_buffer(in);
                       for (std::size_t i = 0; i < slope.size(); ++i) gn[i] += g * slope[i];
                     });
}

Var mean_squared_error(Var pred, std::span<const double> target) {
  Tape& tape = same_tape({pred});
  const Tensor& pv = pred.value();
  if (pv.size() != target.size() || target.empty()) throw DimensionError("mean_squared_error: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) total += (pv[i] - target[i]) * (pv[i] - target[i]);
  const double n = static_cast<double>(pv.size());
  std::vector<double> tv(target.begin(), target.end());
  const auto ip = pred.id();
  return tape.record(Tensor::scalar(total / n), {pred}, [ip, tv = std::move(tv), n](Tape& t, std::size_t o) {
    const double g = t.grad_at(o)[0];
    const auto& pv = t.value_at(ip);
    auto gp = t.grad_buffer(ip);
    for (std::size_t i = 0; i < tv.size(); ++i) gp[i] += g * 2.0 * (pv[i] - tv[i]) / n;
  });
}

}  // namespace htl
