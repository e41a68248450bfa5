#include "htl/tape.hpp"

#include <algorithm>

#include "htl/error.hpp"

namespace htl {

const Tensor& Var::value() const {
  if (!tape_) throw ProvenanceError("value() on an unbound Var");
  return tape_->value_at(id_);
}

Var Tape::parameter(Tensor& t) {
  Node n;
  n.ref = &t;
  n.requires_grad = t.requires_grad();
  n.sink = t.requires_grad() ? &t : nullptr;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::view(const Tensor& t) {
  Node n;
  n.ref = &t;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::input(Tensor t) {
  Node n;
  n.requires_grad = t.requires_grad();
  n.owned = std::move(t);
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size())
    throw ProvenanceError("value was not produced under this tape");
}

const Tensor& Tape::value_at(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.owned;
}

const Tensor& Tape::value(Var v) const {
  check_owner(v);
  return value_at(v.id());
}

bool Tape::requires_grad(Var v) const {
  check_owner(v);
  return nodes_[v.id()].requires_grad;
}

bool Tape::tracks(std::size_t id) const { return nodes_[id].requires_grad; }

std::span<const double> Tape::grad_at(std::size_t id) const { return nodes_[id].grad; }

std::span<const double> Tape::grad(Var v) const {
  check_owner(v);
  return nodes_[v.id()].grad;
}

std::span<const double> Tape::leaf_grad(Var v) const {
  check_owner(v);
  const Node& n = nodes_[v.id()];
  if (!n.is_leaf) throw ProvenanceError("leaf_grad() on an intermediate value");
  if (n.sink) return n.sink->grad();
  return n.owned.grad();
}

std::span<double> Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(value_at(id).size(), 0.0);
  return n.grad;
}

Var Tape::record(Tensor out, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(out), std::vector<Var>(inputs), std::move(fn));
}

Var Tape::record(Tensor out, const std::vector<Var>& inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& v : inputs) {
    check_owner(v);
    needs = needs || nodes_[v.id()].requires_grad;
  }
  Node n;
  n.owned = std::move(out);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  check_owner(loss);
  if (value_at(loss.id()).size() != 1) throw DimensionError("backward() needs a scalar loss");
  for (Node& n : nodes_) n.grad.clear();
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      n.backward(*this, id);
    } else if (n.is_leaf) {
      Tensor& target = n.sink ? *n.sink : n.owned;
      auto g = target.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  }
}

}  // namespace htl
