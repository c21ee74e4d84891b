#include "diffcore/graph.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "kernels.hpp"

namespace diffcore {

namespace {

double vec_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double vec_norm(const std::vector<double>& a) { return std::sqrt(vec_dot(a, a)); }

}  // namespace

NodeId Graph::push(Node node) {
  for (double v : node.value.data) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value produced by node '" + node.name + "#" +
                         std::to_string(nodes_.size()) + "'");
    }
  }
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

std::vector<double>& Graph::grad_buffer(NodeId id) {
  Node& n = at(id);
  if (n.grad.empty()) n.grad.assign(n.value.data.size(), 0.0);
  return n.grad;
}

double Graph::scalar_value(NodeId id) const {
  const Tensor& t = value(id);
  if (t.numel() != 1) throw ContractError("scalar_value: node has " + shape_str(t.shape));
  return t.data[0];
}

NodeId Graph::constant(Tensor value, std::string name) {
  Node n;
  n.value = std::move(value);
  n.name = std::move(name);
  n.requires_grad = false;
  return push(std::move(n));
}

NodeId Graph::param(const std::string& name, const Tensor& value) {
  Node n;
  n.value = value;
  n.name = name;
  n.requires_grad = true;
  const NodeId id = push(std::move(n));
  params_.emplace_back(name, id);
  return id;
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) {
    throw ContractError("add: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  Node n;
  n.value = Tensor(ta.shape, ta.data);
  for (std::size_t i = 0; i < tb.data.size(); ++i) n.value.data[i] += tb.data[i];
  n.inputs = {a, b};
  n.name = "add";
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.backward = [a, b](Graph& g, const Node& out) {
    if (g.at(a).requires_grad) {
      auto& ga = g.grad_buffer(a);
      for (std::size_t i = 0; i < out.grad.size(); ++i) ga[i] += out.grad[i];
    }
    if (g.at(b).requires_grad) {
      auto& gb = g.grad_buffer(b);
      for (std::size_t i = 0; i < out.grad.size(); ++i) gb[i] += out.grad[i];
    }
  };
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) {
    throw ContractError("sub: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  Node n;
  n.value = Tensor(ta.shape, ta.data);
  for (std::size_t i = 0; i < tb.data.size(); ++i) n.value.data[i] -= tb.data[i];
  n.inputs = {a, b};
  n.name = "sub";
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.backward = [a, b](Graph& g, const Node& out) {
    if (g.at(a).requires_grad) {
      auto& ga = g.grad_buffer(a);
      for (std::size_t i = 0; i < out.grad.size(); ++i) ga[i] += out.grad[i];
    }
    if (g.at(b).requires_grad) {
      auto& gb = g.grad_buffer(b);
      for (std::size_t i = 0; i < out.grad.size(); ++i) gb[i] -= out.grad[i];
    }
  };
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) {
    throw ContractError("mul: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  Node n;
  n.value = Tensor(ta.shape, ta.data);
  for (std::size_t i = 0; i < tb.data.size(); ++i) n.value.data[i] *= tb.data[i];
  n.inputs = {a, b};
  n.name = "mul";
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.backward = [a, b](Graph& g, const Node& out) {
    const auto& va = g.value(a).data;
    const auto& vb = g.value(b).data;
    if (g.at(a).requires_grad) {
      auto& ga = g.grad_buffer(a);
      for (std::size_t i = 0; i < out.grad.size(); ++i) ga[i] += out.grad[i] * vb[i];
    }
    if (g.at(b).requires_grad) {
      auto& gb = g.grad_buffer(b);
      for (std::size_t i = 0; i < out.grad.size(); ++i) gb[i] += out.grad[i] * va[i];
    }
  };
  return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double factor) {
  const Tensor& ta = value(a);
  Node n;
  n.value = Tensor(ta.shape, ta.data);
  for (double& v : n.value.data) v *= factor;
  n.inputs = {a};
  n.name = "scale";
  n.requires_grad = at(a).requires_grad;
  n.backward = [a, factor](Graph& g, const Node& out) {
    if (!g.at(a).requires_grad) return;
    auto& ga = g.grad_buffer(a);
    for (std::size_t i = 0; i < out.grad.size(); ++i) ga[i] += out.grad[i] * factor;
  };
  return push(std::move(n));
}

NodeId Graph::relu(NodeId a) {
  const Tensor& ta = value(a);
  Node n;
  n.value = Tensor(ta.shape, ta.data);
  for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
  n.inputs = {a};
  n.name = "relu";
  n.requires_grad = at(a).requires_grad;
  n.backward = [a](Graph& g, const Node& out) {
    if (!g.at(a).requires_grad) return;
    const auto& va = g.value(a).data;
    auto& ga = g.grad_buffer(a);
    for (std::size_t i = 0; i < out.grad.size(); ++i) {
      if (va[i] > 0.0) ga[i] += out.grad[i];
    }
  };
  return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId a) {
  const Tensor& ta = value(a);
  Node n;
  n.value = Tensor(ta.shape, ta.data);
  for (double& v : n.value.data) v = 1.0 / (1.0 + std::exp(-v));
  n.inputs = {a};
  n.name = "sigmoid";
  n.requires_grad = at(a).requires_grad;
  n.backward = [a](Graph& g, const Node& out) {
    if (!g.at(a).requires_grad) return;
    auto& ga = g.grad_buffer(a);
    for (std::size_t i = 0; i < out.grad.size(); ++i) {
      const double s = out.value.data[i];
      ga[i] += out.grad[i] * s * (1.0 - s);
    }
  };
  return push(std::move(n));
}

NodeId Graph::tanh(NodeId a) {
  const Tensor& ta = value(a);
  Node n;
  n.value = Tensor(ta.shape, ta.data);
  for (double& v : n.value.data) v = std::tanh(v);
  n.inputs = {a};
  n.name = "tanh";
  n.requires_grad = at(a).requires_grad;
  n.backward = [a](Graph& g, const Node& out) {
    if (!g.at(a).requires_grad) return;
    auto& ga = g.grad_buffer(a);
    for (std::size_t i = 0; i < out.grad.size(); ++i) {
      const double t = out.value.data[i];
      ga[i] += out.grad[i] * (1.0 - t * t);
    }
  };
  return push(std::move(n));
}

NodeId Graph::log_floor(NodeId a, double floor) {
  const Tensor& ta = value(a);
  if (floor <= 0.0) throw ContractError("log_floor: floor must be positive");
  Node n;
  n.value = Tensor(ta.shape, ta.data);
  for (double& v : n.value.data) {
    if (v < floor) {
      ++clamp_events_;
      v = floor;
    }
    v = std::log(v);
  }
  n.inputs = {a};
  n.name = "log_floor";
  n.requires_grad = at(a).requires_grad;
  n.backward = [a, floor](Graph& g, const Node& out) {
    if (!g.at(a).requires_grad) return;
    const auto& va = g.value(a).data;
    auto& ga = g.grad_buffer(a);
    for (std::size_t i = 0; i < out.grad.size(); ++i) {
      if (va[i] >= floor) ga[i] += out.grad[i] / va[i];
    }
  };
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0]) {
    throw ContractError("matmul: incompatible shapes " + shape_str(ta.shape) + " x " +
                        shape_str(tb.shape));
  }
  const int m = ta.shape[0], k = ta.shape[1], nn = tb.shape[1];
  Node n;
  n.value = Tensor::zeros({m, nn});
  kernels::mm(ta.data.data(), tb.data.data(), n.value.data.data(), m, k, nn);
  n.inputs = {a, b};
  n.name = "matmul";
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.backward = [a, b, m, k, nn](Graph& g, const Node& out) {
    const auto& va = g.value(a).data;
    const auto& vb = g.value(b).data;
    if (g.at(a).requires_grad) {
      // dA = dC * B^T, computed as mm against the transposed (small) B
      const auto bt = kernels::transpose(vb.data(), k, nn);
      kernels::mm(out.grad.data(), bt.data(), g.grad_buffer(a).data(), m, nn, k);
    }
    if (g.at(b).requires_grad) {
      kernels::mm_at_b(va.data(), out.grad.data(), g.grad_buffer(b).data(), m, k, nn);
    }
  };
  return push(std::move(n));
}

NodeId Graph::add_rows(NodeId mat, NodeId row) {
  const Tensor& tm = value(mat);
  const Tensor& tr = value(row);
  if (tm.rank() != 2 || tr.rank() != 1 || tm.shape[1] != tr.shape[0]) {
    throw ContractError("add_rows: incompatible shapes " + shape_str(tm.shape) + " + " +
                        shape_str(tr.shape));
  }
  const int rows = tm.shape[0], cols = tm.shape[1];
  Node n;
  n.value = Tensor(tm.shape, tm.data);
  for (int i = 0; i < rows; ++i) {
    double* out = n.value.data.data() + static_cast<std::size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) out[j] += tr.data[static_cast<std::size_t>(j)];
  }
  n.inputs = {mat, row};
  n.name = "add_rows";
  n.requires_grad = at(mat).requires_grad || at(row).requires_grad;
  n.backward = [mat, row, rows, cols](Graph& g, const Node& out) {
    if (g.at(mat).requires_grad) {
      auto& gm = g.grad_buffer(mat);
      for (std::size_t i = 0; i < out.grad.size(); ++i) gm[i] += out.grad[i];
    }
    if (g.at(row).requires_grad) {
      auto& gr = g.grad_buffer(row);
      for (int i = 0; i < rows; ++i) {
        const double* og = out.grad.data() + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) gr[static_cast<std::size_t>(j)] += og[j];
      }
    }
  };
  return push(std::move(n));
}

NodeId Graph::vecmat(NodeId vec, NodeId mat) {
  const Tensor& tv = value(vec);
  const Tensor& tm = value(mat);
  if (tv.rank() != 1 || tm.rank() != 2 || tv.shape[0] != tm.shape[0]) {
    throw ContractError("vecmat: incompatible shapes " + shape_str(tv.shape) + " x " +
                        shape_str(tm.shape));
  }
  const int k = tm.shape[0], nn = tm.shape[1];
  Node n;
  n.value = Tensor::zeros({nn});
  for (int i = 0; i < k; ++i) {
    const double wi = tv.data[static_cast<std::size_t>(i)];
    const double* mrow = tm.data.data() + static_cast<std::size_t>(i) * nn;
    for (int j = 0; j < nn; ++j) n.value.data[static_cast<std::size_t>(j)] += wi * mrow[j];
  }
  n.inputs = {vec, mat};
  n.name = "vecmat";
  n.requires_grad = at(vec).requires_grad || at(mat).requires_grad;
  n.backward = [vec, mat, k, nn](Graph& g, const Node& out) {
    const auto& vv = g.value(vec).data;
    const auto& vm = g.value(mat).data;
    if (g.at(vec).requires_grad) {
      auto& gv = g.grad_buffer(vec);
      for (int i = 0; i < k; ++i) {
        const double* mrow = vm.data() + static_cast<std::size_t>(i) * nn;
        double s = 0.0;
        for (int j = 0; j < nn; ++j) s += out.grad[static_cast<std::size_t>(j)] * mrow[j];
        gv[static_cast<std::size_t>(i)] += s;
      }
    }
    if (g.at(mat).requires_grad) {
      auto& gm = g.grad_buffer(mat);
      for (int i = 0; i < k; ++i) {
        const double wi = vv[static_cast<std::size_t>(i)];
        double* grow = gm.data() + static_cast<std::size_t>(i) * nn;
        for (int j = 0; j < nn; ++j) grow[j] += wi * out.grad[static_cast<std::size_t>(j)];
      }
    }
  };
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId a, std::vector<int> shape) {
  const Tensor& ta = value(a);
  if (shape_numel(shape) != ta.numel()) {
    throw ContractError("reshape: " + shape_str(ta.shape) + " to " + shape_str(shape) +
                        " changes element count");
  }
  Node n;
  n.value = Tensor(std::move(shape), ta.data);
  n.inputs = {a};
  n.name = "reshape";
  n.requires_grad = at(a).requires_grad;
  n.backward = [a](Graph& g, const Node& out) {
    if (!g.at(a).requires_grad) return;
    auto& ga = g.grad_buffer(a);
    for (std::size_t i = 0; i < out.grad.size(); ++i) ga[i] += out.grad[i];
  };
  return push(std::move(n));
}

NodeId Graph::sum_all(NodeId a) {
  const Tensor& ta = value(a);
  double s = 0.0;
  for (double v : ta.data) s += v;
  Node n;
  n.value = Tensor::scalar(s);
  n.inputs = {a};
  n.name = "sum";
  n.requires_grad = at(a).requires_grad;
  n.backward = [a](Graph& g, const Node& out) {
    if (!g.at(a).requires_grad) return;
    auto& ga = g.grad_buffer(a);
    const double og = out.grad[0];
    for (double& v : ga) v += og;
  };
  return push(std::move(n));
}

NodeId Graph::cosine_similarity(NodeId u, NodeId v) {
  const Tensor& tu = value(u);
  const Tensor& tv = value(v);
  if (tu.numel() != tv.numel()) {
    throw ContractError("cosine_similarity: length mismatch " + shape_str(tu.shape) + " vs " +
                        shape_str(tv.shape));
  }
  if (tu.numel() == 0) throw ContractError("cosine_similarity: empty vectors");
  const double nu = vec_norm(tu.data);
  const double nv = vec_norm(tv.data);
  if (nu == 0.0 || nv == 0.0) throw NumericError("cosine_similarity: zero-norm input");
  const double dot = vec_dot(tu.data, tv.data);
  const double sim = dot / (nu * nv);
  Node n;
  n.value = Tensor::scalar(sim);
  n.inputs = {u, v};
  n.name = "cosine_similarity";
  n.requires_grad = at(u).requires_grad || at(v).requires_grad;
  n.backward = [u, v, nu, nv, sim](Graph& g, const Node& out) {
    const auto& du = g.value(u).data;
    const auto& dv = g.value(v).data;
    const double og = out.grad[0];
    if (g.at(u).requires_grad) {
      auto& gu = g.grad_buffer(u);
      for (std::size_t i = 0; i < du.size(); ++i) {
        gu[i] += og * (dv[i] / (nu * nv) - sim * du[i] / (nu * nu));
      }
    }
    if (g.at(v).requires_grad) {
      auto& gv = g.grad_buffer(v);
      for (std::size_t i = 0; i < dv.size(); ++i) {
        gv[i] += og * (du[i] / (nu * nv) - sim * dv[i] / (nv * nv));
      }
    }
  };
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// shape assembly
// ---------------------------------------------------------------------------

NodeId Graph::stack_scalars(const std::vector<NodeId>& scalars) {
  if (scalars.empty()) throw ContractError("stack_scalars: empty input");
  Node n;
  n.value = Tensor::zeros({static_cast<int>(scalars.size())});
  bool rg = false;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    const Tensor& t = value(scalars[i]);
    if (t.numel() != 1) throw ContractError("stack_scalars: input " + std::to_string(i) + " not scalar");
    n.value.data[i] = t.data[0];
    rg = rg || at(scalars[i]).requires_grad;
  }
  n.inputs = scalars;
  n.name = "stack_scalars";
  n.requires_grad = rg;
  n.backward = [scalars](Graph& g, const Node& out) {
    for (std::size_t i = 0; i < scalars.size(); ++i) {
      if (g.at(scalars[i]).requires_grad) g.grad_buffer(scalars[i])[0] += out.grad[i];
    }
  };
  return push(std::move(n));
}

NodeId Graph::stack_rows(const std::vector<NodeId>& rows) {
  if (rows.empty()) throw ContractError("stack_rows: empty input");
  const std::int64_t d = value(rows[0]).numel();
  Node n;
  n.value = Tensor::zeros({static_cast<int>(rows.size()), static_cast<int>(d)});
  bool rg = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor& t = value(rows[i]);
    if (t.numel() != d) throw ContractError("stack_rows: row " + std::to_string(i) + " length mismatch");
    std::copy(t.data.begin(), t.data.end(),
              n.value.data.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(d)));
    rg = rg || at(rows[i]).requires_grad;
  }
  n.inputs = rows;
  n.name = "stack_rows";
  n.requires_grad = rg;
  const std::size_t stride = static_cast<std::size_t>(d);
  n.backward = [rows, stride](Graph& g, const Node& out) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!g.at(rows[i]).requires_grad) continue;
      auto& gr = g.grad_buffer(rows[i]);
      const double* og = out.grad.data() + i * stride;
      for (std::size_t j = 0; j < stride; ++j) gr[j] += og[j];
    }
  };
  return push(std::move(n));
}

NodeId Graph::pick(NodeId vec, int index) {
  const Tensor& tv = value(vec);
  if (index < 0 || static_cast<std::int64_t>(index) >= tv.numel()) {
    throw ContractError("pick: index " + std::to_string(index) + " out of range for " +
                        shape_str(tv.shape));
  }
  Node n;
  n.value = Tensor::scalar(tv.data[static_cast<std::size_t>(index)]);
  n.inputs = {vec};
  n.name = "pick";
  n.requires_grad = at(vec).requires_grad;
  n.backward = [vec, index](Graph& g, const Node& out) {
    if (!g.at(vec).requires_grad) return;
    g.grad_buffer(vec)[static_cast<std::size_t>(index)] += out.grad[0];
  };
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// neural net
// ---------------------------------------------------------------------------

namespace {

// rows of size `width`; stable softmax per row
void softmax_rows(const std::vector<double>& in, std::vector<double>& out, int width) {
  const int rows = static_cast<int>(in.size()) / width;
  for (int r = 0; r < rows; ++r) {
    const double* x = in.data() + static_cast<std::size_t>(r) * width;
    double* y = out.data() + static_cast<std::size_t>(r) * width;
    double mx = x[0];
    for (int j = 1; j < width; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (int j = 0; j < width; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (int j = 0; j < width; ++j) y[j] /= z;
  }
}

}  // namespace

NodeId Graph::softmax(NodeId a) {
  const Tensor& ta = value(a);
  if (ta.rank() < 1 || ta.rank() > 2 || ta.shape.back() < 1) {
    throw ContractError("softmax: expects [K] or [N,K], got " + shape_str(ta.shape));
  }
  const int width = ta.shape.back();
  Node n;
  n.value = Tensor::zeros(ta.shape);
  softmax_rows(ta.data, n.value.data, width);
  n.inputs = {a};
  n.name = "softmax";
  n.requires_grad = at(a).requires_grad;
  n.backward = [a, width](Graph& g, const Node& out) {
    if (!g.at(a).requires_grad) return;
    auto& ga = g.grad_buffer(a);
    const int rows = static_cast<int>(out.grad.size()) / width;
    for (int r = 0; r < rows; ++r) {
      const double* p = out.value.data.data() + static_cast<std::size_t>(r) * width;
      const double* og = out.grad.data() + static_cast<std::size_t>(r) * width;
      double* gx = ga.data() + static_cast<std::size_t>(r) * width;
      double inner = 0.0;
      for (int j = 0; j < width; ++j) inner += og[j] * p[j];
      for (int j = 0; j < width; ++j) gx[j] += p[j] * (og[j] - inner);
    }
  };
  return push(std::move(n));
}

NodeId Graph::cross_entropy(NodeId logits, const std::vector<int>& labels) {
  const Tensor& tl = value(logits);
  if (tl.rank() != 2) throw ContractError("cross_entropy: logits must be [N,K]");
  const int rows = tl.shape[0], width = tl.shape[1];
  if (static_cast<int>(labels.size()) != rows) {
    throw ContractError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(rows) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || y >= width) throw ContractError("cross_entropy: label out of range");
  }
  auto probs = std::make_shared<std::vector<double>>(tl.data.size());
  softmax_rows(tl.data, *probs, width);
  double loss = 0.0;
  for (int r = 0; r < rows; ++r) {
    loss -= std::log((*probs)[static_cast<std::size_t>(r) * width + labels[static_cast<std::size_t>(r)]]);
  }
  loss /= rows;
  Node n;
  n.value = Tensor::scalar(loss);
  n.inputs = {logits};
  n.name = "cross_entropy";
  n.requires_grad = at(logits).requires_grad;
  n.backward = [logits, labels, probs, rows, width](Graph& g, const Node& out) {
    if (!g.at(logits).requires_grad) return;
    auto& gl = g.grad_buffer(logits);
    const double og = out.grad[0] / rows;
    for (int r = 0; r < rows; ++r) {
      const double* p = probs->data() + static_cast<std::size_t>(r) * width;
      double* gx = gl.data() + static_cast<std::size_t>(r) * width;
      for (int j = 0; j < width; ++j) gx[j] += og * p[j];
      gx[labels[static_cast<std::size_t>(r)]] -= og;
    }
  };
  return push(std::move(n));
}

namespace {

// Gather 3x3 zero-padded patches: x[N,H,W,C] -> cols[N*H*W, 9*C].
void im2col3(const std::vector<double>& x, std::vector<double>& cols, int n, int h, int w, int c) {
  const std::size_t row_len = 9u * static_cast<std::size_t>(c);
  std::size_t r = 0;
  for (int in = 0; in < n; ++in) {
    const double* img = x.data() + static_cast<std::size_t>(in) * h * w * c;
    for (int iy = 0; iy < h; ++iy) {
      for (int ix = 0; ix < w; ++ix, ++r) {
        double* dst = cols.data() + r * row_len;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = iy + ky - 1;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = ix + kx - 1;
            double* cell = dst + static_cast<std::size_t>(ky * 3 + kx) * c;
            if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
              std::fill(cell, cell + c, 0.0);
            } else {
              const double* src = img + (static_cast<std::size_t>(sy) * w + sx) * c;
              std::copy(src, src + c, cell);
            }
          }
        }
      }
    }
  }
}

// Scatter-add of dcols back to image layout; the exact adjoint of im2col3.
void col2im3(const std::vector<double>& dcols, std::vector<double>& dx, int n, int h, int w, int c) {
  const std::size_t row_len = 9u * static_cast<std::size_t>(c);
  std::size_t r = 0;
  for (int in = 0; in < n; ++in) {
    double* img = dx.data() + static_cast<std::size_t>(in) * h * w * c;
    for (int iy = 0; iy < h; ++iy) {
      for (int ix = 0; ix < w; ++ix, ++r) {
        const double* src = dcols.data() + r * row_len;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = iy + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = ix + kx - 1;
            if (sx < 0 || sx >= w) continue;
            const double* cell = src + static_cast<std::size_t>(ky * 3 + kx) * c;
            double* dst = img + (static_cast<std::size_t>(sy) * w + sx) * c;
            for (int ic = 0; ic < c; ++ic) dst[ic] += cell[ic];
          }
        }
      }
    }
  }
}

}  // namespace

NodeId Graph::conv2d(NodeId x, NodeId w, NodeId b) {
  const Tensor& tx = value(x);
  const Tensor& tw = value(w);
  const Tensor& tb = value(b);
  if (tx.rank() != 4) throw ContractError("conv2d: x must be [N,H,W,C], got " + shape_str(tx.shape));
  if (tw.rank() != 4 || tw.shape[0] != 3 || tw.shape[1] != 3) {
    throw ContractError("conv2d: w must be [3,3,C,OC], got " + shape_str(tw.shape));
  }
  const int n = tx.shape[0], h = tx.shape[1], ww = tx.shape[2], c = tx.shape[3];
  const int oc = tw.shape[3];
  if (tw.shape[2] != c) throw ContractError("conv2d: channel mismatch");
  if (tb.rank() != 1 || tb.shape[0] != oc) throw ContractError("conv2d: bias must be [OC]");

  const std::size_t rows = static_cast<std::size_t>(n) * h * ww;
  const int row_len = 9 * c;
  auto cols = std::make_shared<std::vector<double>>(rows * static_cast<std::size_t>(row_len));
  im2col3(tx.data, *cols, n, h, ww, c);

  Node node;
  node.value = Tensor::zeros({n, h, ww, oc});
  kernels::mm(cols->data(), tw.data.data(), node.value.data.data(), static_cast<int>(rows), row_len, oc);
  for (std::size_t r = 0; r < rows; ++r) {
    double* out = node.value.data.data() + r * static_cast<std::size_t>(oc);
    for (int j = 0; j < oc; ++j) out[j] += tb.data[static_cast<std::size_t>(j)];
  }
  node.inputs = {x, w, b};
  node.name = "conv2d";
  node.requires_grad = at(x).requires_grad || at(w).requires_grad || at(b).requires_grad;
  node.backward = [x, w, b, cols, n, h, ww, c, oc, rows, row_len](Graph& g, const Node& out) {
    if (g.at(b).requires_grad) {
      auto& gb = g.grad_buffer(b);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* og = out.grad.data() + r * static_cast<std::size_t>(oc);
        for (int j = 0; j < oc; ++j) gb[static_cast<std::size_t>(j)] += og[j];
      }
    }
    if (g.at(w).requires_grad) {
      kernels::mm_at_b(cols->data(), out.grad.data(), g.grad_buffer(w).data(),
                       static_cast<int>(rows), row_len, oc);
    }
    if (g.at(x).requires_grad) {
      const auto wt = kernels::transpose(g.value(w).data.data(), row_len, oc);
      std::vector<double> dcols(cols->size(), 0.0);
      kernels::mm(out.grad.data(), wt.data(), dcols.data(), static_cast<int>(rows), oc, row_len);
      col2im3(dcols, g.grad_buffer(x), n, h, ww, c);
    }
  };
  return push(std::move(node));
}

NodeId Graph::maxpool2(NodeId x) {
  const Tensor& tx = value(x);
  if (tx.rank() != 4) throw ContractError("maxpool2: x must be [N,H,W,C]");
  const int n = tx.shape[0], h = tx.shape[1], w = tx.shape[2], c = tx.shape[3];
  if (h % 2 != 0 || w % 2 != 0) throw ContractError("maxpool2: H and W must be even");
  const int oh = h / 2, ow = w / 2;
  Node node;
  node.value = Tensor::zeros({n, oh, ow, c});
  auto argmax = std::make_shared<std::vector<std::size_t>>(node.value.data.size());
  std::size_t o = 0;
  for (int in = 0; in < n; ++in) {
    const double* img = tx.data.data() + static_cast<std::size_t>(in) * h * w * c;
    const std::size_t base = static_cast<std::size_t>(in) * h * w * c;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        for (int ic = 0; ic < c; ++ic, ++o) {
          double best = -1e300;
          std::size_t best_at = 0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx =
                  (static_cast<std::size_t>(oy * 2 + dy) * w + static_cast<std::size_t>(ox * 2 + dx)) * c +
                  static_cast<std::size_t>(ic);
              if (img[idx] > best) {
                best = img[idx];
                best_at = base + idx;
              }
            }
          }
          node.value.data[o] = best;
          (*argmax)[o] = best_at;
        }
      }
    }
  }
  node.inputs = {x};
  node.name = "maxpool2";
  node.requires_grad = at(x).requires_grad;
  node.backward = [x, argmax](Graph& g, const Node& out) {
    if (!g.at(x).requires_grad) return;
    auto& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < out.grad.size(); ++i) gx[(*argmax)[i]] += out.grad[i];
  };
  return push(std::move(node));
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

GradMap Graph::forward_backward(NodeId loss) {
  if (loss < 0 || loss >= size()) throw ContractError("forward_backward: bad loss node");
  const Tensor& lt = value(loss);
  if (lt.numel() != 1) {
    throw ContractError("forward_backward: loss must be scalar, got " + shape_str(lt.shape));
  }
  if (at(loss).requires_grad) {
    grad_buffer(loss)[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
      Node& n = at(id);
      if (n.grad.empty() || !n.backward) continue;
      n.backward(*this, n);
    }
  }
  GradMap grads;
  for (const auto& [name, id] : params_) {
    const Node& n = at(id);
    Tensor g = Tensor::zeros(n.value.shape);
    if (!n.grad.empty()) g.data = n.grad;
    for (double v : g.data) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite gradient for parameter '" + name + "'");
      }
    }
    grads.emplace(name, std::move(g));
  }
  return grads;
}

}  // namespace diffcore
