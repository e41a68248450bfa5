#include "htl/adam.hpp"

#include <cmath>
#include <string>

#include "htl/error.hpp"

namespace htl {

Adam::Adam(std::vector<Tensor*> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  for (Tensor* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void Adam::step() {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (!params_[k]->has_grad())
      throw GradientError("parameter " + std::to_string(k) + " " + shape_string(params_[k]->shape()) +
                          " has no populated gradient");
  }
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = *params_[k];
    auto g = p.grad();
    auto w = p.values();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= options_.learning_rate * mhat / (std::sqrt(vhat) + options_.epsilon);
    }
    if (!p.all_finite())
      throw NonFiniteError("non-finite parameter after Adam step " + std::to_string(step_));
    p.clear_grad();
  }
}

}  // namespace htl
