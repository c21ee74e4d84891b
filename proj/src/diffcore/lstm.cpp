#include "diffcore/lstm.hpp"

#include "diffcore/errors.hpp"
#include "diffcore/init.hpp"

namespace diffcore {

LstmParams LstmParams::init(int input_size, int hidden_size, Rng& rng) {
  if (input_size <= 0 || hidden_size <= 0) {
    throw ContractError("LstmParams: sizes must be positive");
  }
  LstmParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  auto wx = [&] { return glorot_uniform({input_size, hidden_size}, input_size, hidden_size, rng); };
  auto wh = [&] { return glorot_uniform({hidden_size, hidden_size}, hidden_size, hidden_size, rng); };
  auto b = [&] { return Tensor::zeros({hidden_size}); };
  p.wx_i = wx(); p.wh_i = wh(); p.b_i = b();
  p.wx_f = wx(); p.wh_f = wh(); p.b_f = b();
  p.wx_o = wx(); p.wh_o = wh(); p.b_o = b();
  p.wx_c = wx(); p.wh_c = wh(); p.b_c = b();
  return p;
}

LstmParams LstmParams::zeros(int input_size, int hidden_size) {
  if (input_size <= 0 || hidden_size <= 0) {
    throw ContractError("LstmParams: sizes must be positive");
  }
  LstmParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  p.wx_i = p.wx_f = p.wx_o = p.wx_c = Tensor::zeros({input_size, hidden_size});
  p.wh_i = p.wh_f = p.wh_o = p.wh_c = Tensor::zeros({hidden_size, hidden_size});
  p.b_i = p.b_f = p.b_o = p.b_c = Tensor::zeros({hidden_size});
  return p;
}

void lstm_register(ParamMap& params, const std::string& prefix, const LstmParams& p) {
  params[prefix + ".wx_i"] = p.wx_i; params[prefix + ".wh_i"] = p.wh_i; params[prefix + ".b_i"] = p.b_i;
  params[prefix + ".wx_f"] = p.wx_f; params[prefix + ".wh_f"] = p.wh_f; params[prefix + ".b_f"] = p.b_f;
  params[prefix + ".wx_o"] = p.wx_o; params[prefix + ".wh_o"] = p.wh_o; params[prefix + ".b_o"] = p.b_o;
  params[prefix + ".wx_c"] = p.wx_c; params[prefix + ".wh_c"] = p.wh_c; params[prefix + ".b_c"] = p.b_c;
}

LstmParams lstm_collect(const ParamMap& params, const std::string& prefix) {
  auto get = [&](const char* leaf) -> const Tensor& {
    auto it = params.find(prefix + "." + leaf);
    if (it == params.end()) throw ContractError("lstm_collect: missing " + prefix + "." + leaf);
    return it->second;
  };
  LstmParams p;
  p.wx_i = get("wx_i"); p.wh_i = get("wh_i"); p.b_i = get("b_i");
  p.wx_f = get("wx_f"); p.wh_f = get("wh_f"); p.b_f = get("b_f");
  p.wx_o = get("wx_o"); p.wh_o = get("wh_o"); p.b_o = get("b_o");
  p.wx_c = get("wx_c"); p.wh_c = get("wh_c"); p.b_c = get("b_c");
  if (p.wx_i.rank() != 2) throw ContractError("lstm_collect: wx_i is not a matrix");
  p.input_size = p.wx_i.shape[0];
  p.hidden_size = p.wx_i.shape[1];
  return p;
}

LstmNodeIds lstm_bind(Graph& g, const LstmParams& p, const std::string& prefix, bool trainable) {
  auto bind = [&](const char* leaf, const Tensor& t) {
    return trainable ? g.param(prefix + "." + leaf, t) : g.constant(t, prefix + "." + leaf);
  };
  LstmNodeIds ids;
  ids.wx_i = bind("wx_i", p.wx_i); ids.wh_i = bind("wh_i", p.wh_i); ids.b_i = bind("b_i", p.b_i);
  ids.wx_f = bind("wx_f", p.wx_f); ids.wh_f = bind("wh_f", p.wh_f); ids.b_f = bind("b_f", p.b_f);
  ids.wx_o = bind("wx_o", p.wx_o); ids.wh_o = bind("wh_o", p.wh_o); ids.b_o = bind("b_o", p.b_o);
  ids.wx_c = bind("wx_c", p.wx_c); ids.wh_c = bind("wh_c", p.wh_c); ids.b_c = bind("b_c", p.b_c);
  return ids;
}

LstmState lstm_step(Graph& g, const LstmNodeIds& w, NodeId x, LstmState prev) {
  auto gate = [&](NodeId wx, NodeId wh, NodeId b) {
    return g.add(g.add(g.vecmat(x, wx), g.vecmat(prev.h, wh)), b);
  };
  const NodeId i = g.sigmoid(gate(w.wx_i, w.wh_i, w.b_i));
  const NodeId f = g.sigmoid(gate(w.wx_f, w.wh_f, w.b_f));
  const NodeId o = g.sigmoid(gate(w.wx_o, w.wh_o, w.b_o));
  const NodeId cand = g.tanh(gate(w.wx_c, w.wh_c, w.b_c));
  const NodeId c_next = g.add(g.mul(f, prev.c), g.mul(i, cand));
  const NodeId h_next = g.mul(o, g.tanh(c_next));
  return {h_next, c_next};
}

}  // namespace diffcore
