#pragma once

#include <map>
#include <string>

#include "diffcore/tensor.hpp"

namespace diffcore {

// First-order optimizer over named parameter tensors. RMSProp keeps one
// squared-gradient accumulator per parameter, created lazily at zero.
class Optimizer {
 public:
  static Optimizer sgd(double lr);
  static Optimizer rmsprop(double lr, double decay, double eps);

  // In-place update; every gradient must match its parameter's shape.
  // Parameters without a gradient entry are left untouched.
  void step(ParamMap& params, const GradMap& grads);

  double learning_rate() const { return lr_; }

 private:
  enum class Kind { kSgd, kRmsProp };
  Optimizer(Kind kind, double lr, double decay, double eps);

  Kind kind_;
  double lr_;
  double decay_;
  double eps_;
  std::map<std::string, Tensor> accum_;
};

}  // namespace diffcore
