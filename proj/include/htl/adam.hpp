#pragma once

#include <cstdint>
#include <vector>

#include "htl/tensor.hpp"

namespace htl {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moment buffers are bound to the parameter list
/// passed at construction.
class Adam {
 public:
  Adam(std::vector<Tensor*> params, AdamOptions options = {});

  // Applies one update to every parameter, then clears the gradients.
  // Throws GradientError if a parameter has no gradient, NonFiniteError if
  // an update produces a non-finite value.
  void step();

  std::int64_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }

 private:
  std::vector<Tensor*> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamOptions options_;
  std::int64_t step_ = 0;
};

}  // namespace htl
