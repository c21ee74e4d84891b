#pragma once

#include <vector>

#include "diffcore/rng.hpp"
#include "diffcore/tensor.hpp"

namespace diffcore {

// Uniform in [−s, s] with s = √(6/(fan_in + fan_out)).
Tensor glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng);

}  // namespace diffcore
