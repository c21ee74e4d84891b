#pragma once

#include <string>

#include "diffcore/graph.hpp"
#include "diffcore/rng.hpp"
#include "diffcore/tensor.hpp"

namespace diffcore {

// One LSTM cell: input/forget/output/candidate gates, each with an
// input-to-gate matrix [input,hidden], a hidden-to-gate matrix
// [hidden,hidden], and a bias [hidden].
struct LstmParams {
  int input_size = 0;
  int hidden_size = 0;
  Tensor wx_i, wh_i, b_i;
  Tensor wx_f, wh_f, b_f;
  Tensor wx_o, wh_o, b_o;
  Tensor wx_c, wh_c, b_c;

  // Glorot-uniform weights, zero biases.
  static LstmParams init(int input_size, int hidden_size, Rng& rng);
  static LstmParams zeros(int input_size, int hidden_size);
};

// Copy the twelve tensors into `params` under "<prefix>.wx_i" etc.
void lstm_register(ParamMap& params, const std::string& prefix, const LstmParams& p);

// Reassemble a cell from a ParamMap written by lstm_register.
LstmParams lstm_collect(const ParamMap& params, const std::string& prefix);

// Graph node handles for one cell's parameters.
struct LstmNodeIds {
  NodeId wx_i, wh_i, b_i;
  NodeId wx_f, wh_f, b_f;
  NodeId wx_o, wh_o, b_o;
  NodeId wx_c, wh_c, b_c;
};

// Insert the cell into a live graph; trainable when `trainable`, frozen
// constants otherwise. Trainable tensors are registered as "<prefix>.*".
LstmNodeIds lstm_bind(Graph& g, const LstmParams& p, const std::string& prefix, bool trainable);

struct LstmState {
  NodeId h;
  NodeId c;
};

// One cell step. x is a vector [input_size]; h and c are [hidden_size].
// Gates: i,f,o = sigmoid(x·Wx + h·Wh + b); candidate = tanh(x·Wx_c + h·Wh_c + b_c);
// c' = f⊙c + i⊙candidate; h' = o⊙tanh(c').
LstmState lstm_step(Graph& g, const LstmNodeIds& w, NodeId x, LstmState prev);

}  // namespace diffcore
