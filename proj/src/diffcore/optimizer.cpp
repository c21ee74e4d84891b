#include "diffcore/optimizer.hpp"

#include <cmath>

#include "diffcore/errors.hpp"

namespace diffcore {

Optimizer::Optimizer(Kind kind, double lr, double decay, double eps)
    : kind_(kind), lr_(lr), decay_(decay), eps_(eps) {
  if (lr <= 0.0) throw ContractError("Optimizer: learning rate must be positive");
}

Optimizer Optimizer::sgd(double lr) { return Optimizer(Kind::kSgd, lr, 0.0, 0.0); }

Optimizer Optimizer::rmsprop(double lr, double decay, double eps) {
  if (decay < 0.0 || decay >= 1.0) throw ContractError("Optimizer: decay must be in [0,1)");
  if (eps <= 0.0) throw ContractError("Optimizer: epsilon must be positive");
  return Optimizer(Kind::kRmsProp, lr, decay, eps);
}

void Optimizer::step(ParamMap& params, const GradMap& grads) {
  for (auto& [name, w] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    if (!w.same_shape(g)) {
      throw ContractError("Optimizer: gradient shape mismatch for '" + name + "'");
    }
    if (kind_ == Kind::kSgd) {
      for (std::size_t i = 0; i < w.data.size(); ++i) w.data[i] -= lr_ * g.data[i];
    } else {
      Tensor& a = accum_.try_emplace(name, Tensor::zeros(w.shape)).first->second;
      for (std::size_t i = 0; i < w.data.size(); ++i) {
        a.data[i] = decay_ * a.data[i] + (1.0 - decay_) * g.data[i] * g.data[i];
        w.data[i] -= lr_ * g.data[i] / std::sqrt(a.data[i] + eps_);
      }
    }
  }
}

}  // namespace diffcore
