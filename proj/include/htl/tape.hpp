#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "htl/tensor.hpp"

namespace htl {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Records are appended in evaluation order, so every
/// record's inputs precede it and a reverse sweep is a topological order.
///
/// Gradients of intermediate values are recomputed on every backward call.
/// Gradients of leaves (parameters and inputs) accumulate across calls until
/// the owner clears them.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf referencing an external tensor. Gradients flow into t.grad() when
  // t.requires_grad() is set; otherwise it acts as a constant.
  Var parameter(Tensor& t);
  // Read-only external leaf; never receives gradients.
  Var view(const Tensor& t);
  // Leaf owned by the tape. Tracks gradients when t.requires_grad() is set;
  // read them back with leaf_grad().
  Var input(Tensor t);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  // Gradient of the last backward pass for intermediate values. Empty when
  // the value did not receive a gradient.
  std::span<const double> grad(Var v) const;
  // Accumulated gradient of a tape-owned input leaf.
  std::span<const double> leaf_grad(Var v) const;

  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Op plumbing.
  Var record(Tensor out, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor out, const std::vector<Var>& inputs, BackwardFn fn);
  const Tensor& value_at(std::size_t id) const;
  std::span<const double> grad_at(std::size_t id) const;
  bool tracks(std::size_t id) const;
  // Gradient buffer of node `id`, zero-initialized on first use.
  std::span<double> grad_buffer(std::size_t id);

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    Tensor* sink = nullptr;
    bool requires_grad = false;
    bool is_leaf = false;
    std::vector<double> grad;
    BackwardFn backward;
  };

  void check_owner(Var v) const;

  std::deque<Node> nodes_;
};

}  // namespace htl
