#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "diffcore/graph.hpp"
#include "diffcore/tensor.hpp"

namespace testutil {

// Compares analytic gradients against central finite differences.
//
// `build` constructs a fresh graph from the given parameter values and
// returns the scalar loss node. The analytic gradient from one
// forward_backward call is checked element-by-element against
// (f(w+h) - f(w-h)) / 2h with relative error
// |a - n| / max(|a|, |n|, 1e-3).
struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;  // "param[i]" of the worst element
};

inline GradCheckResult grad_check(
    const diffcore::ParamMap& params,
    const std::function<diffcore::NodeId(diffcore::Graph&, const diffcore::ParamMap&)>& build,
    double h = 1e-5) {
  diffcore::Graph g;
  const diffcore::NodeId loss = build(g, params);
  const diffcore::GradMap analytic = g.forward_backward(loss);

  GradCheckResult res;
  for (const auto& [name, grad] : analytic) {
    for (std::size_t i = 0; i < grad.data.size(); ++i) {
      diffcore::ParamMap bumped = params;
      bumped.at(name).data[i] += h;
      diffcore::Graph gp;
      const double fp = gp.scalar_value(build(gp, bumped));
      bumped.at(name).data[i] -= 2.0 * h;
      diffcore::Graph gm;
      const double fm = gm.scalar_value(build(gm, bumped));
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = grad.data[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3});
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

}  // namespace testutil
