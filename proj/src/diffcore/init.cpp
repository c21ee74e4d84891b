#include "diffcore/init.hpp"

#include <cmath>

#include "diffcore/errors.hpp"

namespace diffcore {

Tensor glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
  if (fan_in <= 0 || fan_out <= 0) throw ContractError("glorot_uniform: fans must be positive");
  const double s = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-s, s);
  return t;
}

}  // namespace diffcore
