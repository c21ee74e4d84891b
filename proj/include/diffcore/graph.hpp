#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "diffcore/tensor.hpp"

namespace diffcore {

using NodeId = int;

// Define-by-run reverse-mode tape. Ops execute eagerly as nodes are appended,
// which keeps the node list topologically ordered by construction; backward
// is a single reverse sweep. Values are immutable once a node is created.
class Graph {
 public:
  struct Node {
    Tensor value;
    std::vector<double> grad;  // sized lazily during backward
    std::vector<NodeId> inputs;
    std::function<void(Graph&, const Node&)> backward;
    std::string name;
    bool requires_grad = false;
  };

  // --- leaves ---
  NodeId constant(Tensor value, std::string name = "const");
  // Named trainable leaf; its gradient appears in the forward_backward result.
  NodeId param(const std::string& name, const Tensor& value);

  // --- elementwise ---
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId tanh(NodeId a);
  // log(max(x, floor)); clamped entries contribute zero gradient and bump
  // clamp_events().
  NodeId log_floor(NodeId a, double floor);

  // --- linear algebra ---
  NodeId matmul(NodeId a, NodeId b);          // [M,K]x[K,N] -> [M,N]
  NodeId add_rows(NodeId mat, NodeId row);    // [N,M] + [M] broadcast over rows
  NodeId vecmat(NodeId vec, NodeId mat);      // [K]x[K,N] -> [N]
  NodeId reshape(NodeId a, std::vector<int> shape);
  NodeId sum_all(NodeId a);                   // -> scalar
  NodeId cosine_similarity(NodeId u, NodeId v);

  // --- shape assembly ---
  NodeId stack_scalars(const std::vector<NodeId>& scalars);  // k scalars -> [k]
  NodeId stack_rows(const std::vector<NodeId>& rows);        // k vectors [d] -> [k,d]
  NodeId pick(NodeId vec, int index);                        // [k] -> scalar

  // --- neural net ---
  NodeId softmax(NodeId a);  // over the last dimension
  // Mean NLL of softmax(logits) at the given class indices. logits: [N,K].
  NodeId cross_entropy(NodeId logits, const std::vector<int>& labels);
  // 3x3 convolution, stride 1, zero padding. x: [N,H,W,C], w: [3,3,C,OC], b: [OC].
  NodeId conv2d(NodeId x, NodeId w, NodeId b);
  NodeId maxpool2(NodeId x);  // 2x2 window, stride 2; H and W must be even

  const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  double scalar_value(NodeId id) const;
  int size() const { return static_cast<int>(nodes_.size()); }

  // Reverse sweep from a scalar loss. Returns d loss / d p for every param
  // leaf (zero tensors for params the loss does not depend on). Node values
  // are left untouched.
  GradMap forward_backward(NodeId loss);

  long clamp_events() const { return clamp_events_; }

 private:
  friend struct GraphOps;
  NodeId push(Node node);
  Node& at(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& at(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::vector<double>& grad_buffer(NodeId id);

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, NodeId>> params_;
  long clamp_events_ = 0;
};

}  // namespace diffcore
