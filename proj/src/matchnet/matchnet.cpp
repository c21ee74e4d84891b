#include "matchnet/matchnet.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <utility>

#include "diffcore/checkpoint.hpp"
#include "diffcore/errors.hpp"
#include "diffcore/graph.hpp"
#include "diffcore/lstm.hpp"

namespace matchnet {

using diffcore::ContractError;
using diffcore::Graph;
using diffcore::LstmNodeIds;
using diffcore::LstmParams;
using diffcore::LstmState;
using diffcore::NodeId;
using diffcore::Tensor;
using diffcore::TrainingError;

namespace {

constexpr double kProbFloor = 1e-12;

struct BoundLstms {
  LstmNodeIds g_fwd;
  LstmNodeIds g_bwd;
  LstmNodeIds f;
};

BoundLstms bind_model(Graph& g, const MatchNetModel& model, bool trainable) {
  BoundLstms out;
  out.g_fwd = diffcore::lstm_bind(g, diffcore::lstm_collect(model.params, "g_fwd"), "g_fwd",
                                  trainable);
  out.g_bwd = diffcore::lstm_bind(g, diffcore::lstm_collect(model.params, "g_bwd"), "g_bwd",
                                  trainable);
  out.f = diffcore::lstm_bind(g, diffcore::lstm_collect(model.params, "f"), "f", trainable);
  return out;
}

// Sequence positions ordered by label (stable, so equal labels keep their
// relative input order).
std::vector<int> label_order(const std::vector<int>& labels) {
  std::vector<int> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return labels[a] < labels[b]; });
  return order;
}

// g(x_i, S) for every support item: bi-LSTM over the label-ordered base
// features plus a skip connection. Returns node ids aligned with the input
// order of `feats`.
std::vector<NodeId> build_support_embeddings(Graph& g, const BoundLstms& w,
                                             const std::vector<NodeId>& feats,
                                             const std::vector<int>& labels, int hidden) {
  const int k = static_cast<int>(feats.size());
  const std::vector<int> order = label_order(labels);

  const NodeId zero = g.constant(Tensor::zeros({hidden}), "zero_state");
  std::vector<NodeId> h_fwd(k), h_bwd(k);

  LstmState state{zero, zero};
  for (int pos = 0; pos < k; ++pos) {
    state = diffcore::lstm_step(g, w.g_fwd, feats[order[pos]], state);
    h_fwd[order[pos]] = state.h;
  }
  state = LstmState{zero, zero};
  for (int pos = k - 1; pos >= 0; --pos) {
    state = diffcore::lstm_step(g, w.g_bwd, feats[order[pos]], state);
    h_bwd[order[pos]] = state.h;
  }

  std::vector<NodeId> out(k);
  for (int i = 0; i < k; ++i) out[i] = g.add(g.add(h_fwd[i], h_bwd[i]), feats[i]);
  return out;
}

// Softmax over cosine similarities of `query` against each support
// embedding. Returns a [k] node.
NodeId build_attention(Graph& g, NodeId query, const std::vector<NodeId>& support_emb) {
  std::vector<NodeId> sims;
  sims.reserve(support_emb.size());
  for (NodeId s : support_emb) sims.push_back(g.cosine_similarity(query, s));
  return g.softmax(g.stack_scalars(sims));
}

// f(x̂, S): K read-attention steps. Each step feeds the base feature to the
// LSTM with the hidden state augmented by the previous attention readout;
// the step output adds the base feature back as a skip connection.
NodeId build_probe_embedding(Graph& g, const BoundLstms& w, NodeId probe_feat,
                             const std::vector<NodeId>& support_emb, int read_steps,
                             int hidden) {
  NodeId f_vec = probe_feat;  // read_steps == 0 degenerates to the base feature
  const NodeId zero = g.constant(Tensor::zeros({hidden}), "zero_state");
  NodeId h = zero;
  NodeId c = zero;
  NodeId readout = zero;
  for (int t = 0; t < read_steps; ++t) {
    LstmState next = diffcore::lstm_step(g, w.f, probe_feat, LstmState{g.add(h, readout), c});
    c = next.c;
    h = g.add(next.h, probe_feat);
    f_vec = h;

    const NodeId attn = build_attention(g, f_vec, support_emb);
    std::vector<NodeId> rows;
    rows.reserve(support_emb.size());
    for (NodeId s : support_emb) rows.push_back(s);
    // readout = attnᵀ · [g_1; ...; g_k]
    readout = g.vecmat(attn, g.stack_rows(rows));
  }
  return f_vec;
}

// P(y | x̂, S) as a [n_labels] node: attention mass pooled by support label.
NodeId build_label_distribution(Graph& g, NodeId attn, const std::vector<int>& labels,
                                int n_labels) {
  const int k = static_cast<int>(labels.size());
  Tensor pool = Tensor::zeros({k, n_labels});
  for (int i = 0; i < k; ++i) pool.data[static_cast<std::size_t>(i) * n_labels + labels[i]] = 1.0;
  return g.vecmat(attn, g.constant(std::move(pool), "label_pool"));
}

void check_support(const std::vector<std::vector<double>>& feats, const std::vector<int>& labels,
                   int n_labels, int feature_dim) {
  if (feats.empty()) throw ContractError("matchnet: support set is empty");
  if (feats.size() != labels.size())
    throw ContractError("matchnet: support features and labels differ in length");
  for (const auto& f : feats)
    if (static_cast<int>(f.size()) != feature_dim)
      throw ContractError("matchnet: support feature dimension mismatch");
  for (int lab : labels)
    if (lab < 0 || lab >= n_labels)
      throw ContractError("matchnet: support label out of range");
}

struct EpisodeFeatures {
  std::vector<std::vector<double>> support;
  std::vector<std::vector<double>> probes;
};

// Shared core: loss and gradients for one episode given base features.
EpisodeResult episode_core(const MatchNetModel& model, const EpisodeFeatures& feats,
                           const std::vector<int>& permutation) {
  const int way = static_cast<int>(feats.support.size());
  Graph g;
  const BoundLstms w = bind_model(g, model, /*trainable=*/true);

  std::vector<NodeId> sup_nodes(way);
  for (int s = 0; s < way; ++s)
    sup_nodes[s] = g.constant(Tensor::from_vector(feats.support[s]), "support_feat");

  const std::vector<NodeId> sup_emb =
      build_support_embeddings(g, w, sup_nodes, permutation, model.feature_dim);

  std::vector<NodeId> probe_nlls;
  probe_nlls.reserve(feats.probes.size());
  for (std::size_t b = 0; b < feats.probes.size(); ++b) {
    const NodeId probe = g.constant(Tensor::from_vector(feats.probes[b]), "probe_feat");
    const NodeId f_vec =
        build_probe_embedding(g, w, probe, sup_emb, model.read_steps, model.feature_dim);
    const NodeId attn = build_attention(g, f_vec, sup_emb);
    const NodeId dist = build_label_distribution(g, attn, permutation, way);
    probe_nlls.push_back(g.log_floor(g.pick(dist, permutation[b]), kProbFloor));
  }
  const NodeId loss = g.scale(g.sum_all(g.stack_scalars(probe_nlls)), -1.0);

  EpisodeResult out;
  out.grads = g.forward_backward(loss);
  out.loss = g.scalar_value(loss);
  out.clamp_events = g.clamp_events();
  return out;
}

std::string read_sidecar_embedder_path(const std::string& mn_path) {
  const std::string side = mn_path + ".meta";
  std::ifstream in(side);
  if (!in) throw ContractError("load_matchnet: cannot open sidecar '" + side + "'");
  std::string line;
  while (std::getline(in, line)) {
    const std::string key = "embedder_checkpoint=";
    if (line.rfind(key, 0) == 0) return line.substr(key.size());
  }
  throw ContractError("load_matchnet: sidecar '" + side + "' has no embedder_checkpoint entry");
}

double meta_scalar(const diffcore::ParamMap& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end())
    throw ContractError("load_matchnet: checkpoint missing field '" + name + "'");
  if (it->second.numel() != 1)
    throw ContractError("load_matchnet: field '" + name + "' is not a scalar");
  return it->second.data[0];
}

}  // namespace

MatchNetModel init_matchnet(std::shared_ptr<const embedder::EmbedderCheckpoint> base,
                            int read_steps, std::uint64_t seed) {
  if (!base) throw ContractError("init_matchnet: base embedder checkpoint is null");
  if (read_steps < 0) throw ContractError("init_matchnet: read_steps must be >= 0");
  MatchNetModel model;
  model.base = std::move(base);
  model.read_steps = read_steps;
  model.feature_dim = model.base->feature_dim;
  model.seed = seed;

  diffcore::Rng init_rng = diffcore::Rng(seed).fork("init");
  const int d = model.feature_dim;
  diffcore::Rng r_fwd = init_rng.fork("g_fwd");
  diffcore::lstm_register(model.params, "g_fwd", LstmParams::init(d, d, r_fwd));
  diffcore::Rng r_bwd = init_rng.fork("g_bwd");
  diffcore::lstm_register(model.params, "g_bwd", LstmParams::init(d, d, r_bwd));
  diffcore::Rng r_f = init_rng.fork("f");
  diffcore::lstm_register(model.params, "f", LstmParams::init(d, d, r_f));
  return model;
}

std::vector<std::vector<double>> base_features(const embedder::EmbedderCheckpoint& base,
                                               const stimgen::LabeledDataset& ds) {
  std::vector<const stimgen::Stimulus*> images;
  images.reserve(ds.items.size());
  for (const auto& item : ds.items) images.push_back(&item.stim);
  return embedder::embed_batch(base, images);
}

std::vector<std::vector<double>> embed_support(
    const MatchNetModel& model, const std::vector<std::vector<double>>& support_feats,
    const std::vector<int>& labels) {
  const int n_labels =
      labels.empty() ? 1 : *std::max_element(labels.begin(), labels.end()) + 1;
  check_support(support_feats, labels, n_labels, model.feature_dim);
  Graph g;
  const BoundLstms w = bind_model(g, model, /*trainable=*/false);
  std::vector<NodeId> feat_nodes;
  feat_nodes.reserve(support_feats.size());
  for (const auto& f : support_feats)
    feat_nodes.push_back(g.constant(Tensor::from_vector(f), "support_feat"));
  const std::vector<NodeId> emb =
      build_support_embeddings(g, w, feat_nodes, labels, model.feature_dim);
  std::vector<std::vector<double>> out;
  out.reserve(emb.size());
  for (NodeId id : emb) out.push_back(g.value(id).data);
  return out;
}

std::vector<double> embed_probe(const MatchNetModel& model, const std::vector<double>& probe_feat,
                                const std::vector<std::vector<double>>& support_embeddings) {
  if (static_cast<int>(probe_feat.size()) != model.feature_dim)
    throw ContractError("embed_probe: probe feature dimension mismatch");
  if (support_embeddings.empty()) throw ContractError("embed_probe: empty support");
  for (const auto& e : support_embeddings)
    if (static_cast<int>(e.size()) != model.feature_dim)
      throw ContractError("embed_probe: support embedding dimension mismatch");
  Graph g;
  const BoundLstms w = bind_model(g, model, /*trainable=*/false);
  const NodeId probe = g.constant(Tensor::from_vector(probe_feat), "probe_feat");
  std::vector<NodeId> sup;
  sup.reserve(support_embeddings.size());
  for (const auto& e : support_embeddings)
    sup.push_back(g.constant(Tensor::from_vector(e), "support_emb"));
  const NodeId f_vec = build_probe_embedding(g, w, probe, sup, model.read_steps, model.feature_dim);
  return g.value(f_vec).data;
}

std::vector<double> attention(const std::vector<double>& f_vec,
                              const std::vector<std::vector<double>>& g_vecs) {
  if (g_vecs.empty()) throw ContractError("attention: empty support");
  Graph g;
  const NodeId query = g.constant(Tensor::from_vector(f_vec), "query");
  std::vector<NodeId> sup;
  sup.reserve(g_vecs.size());
  for (const auto& v : g_vecs) {
    if (v.size() != f_vec.size())
      throw ContractError("attention: dimension mismatch between query and support");
    sup.push_back(g.constant(Tensor::from_vector(v), "support_emb"));
  }
  return g.value(build_attention(g, query, sup)).data;
}

std::vector<double> mn_predict_features(const MatchNetModel& model,
                                        const std::vector<double>& probe_feat,
                                        const std::vector<std::vector<double>>& support_feats,
                                        const std::vector<int>& support_labels, int n_labels) {
  if (n_labels < 1) throw ContractError("mn_predict: n_labels must be positive");
  check_support(support_feats, support_labels, n_labels, model.feature_dim);
  if (static_cast<int>(probe_feat.size()) != model.feature_dim)
    throw ContractError("mn_predict: probe feature dimension mismatch");

  Graph g;
  const BoundLstms w = bind_model(g, model, /*trainable=*/false);
  std::vector<NodeId> feat_nodes;
  feat_nodes.reserve(support_feats.size());
  for (const auto& f : support_feats)
    feat_nodes.push_back(g.constant(Tensor::from_vector(f), "support_feat"));
  const std::vector<NodeId> sup_emb =
      build_support_embeddings(g, w, feat_nodes, support_labels, model.feature_dim);
  const NodeId probe = g.constant(Tensor::from_vector(probe_feat), "probe_feat");
  const NodeId f_vec =
      build_probe_embedding(g, w, probe, sup_emb, model.read_steps, model.feature_dim);
  const NodeId attn = build_attention(g, f_vec, sup_emb);
  return g.value(build_label_distribution(g, attn, support_labels, n_labels)).data;
}

std::vector<double> mn_predict(const MatchNetModel& model, const stimgen::Stimulus& probe,
                               const std::vector<stimgen::Stimulus>& support_images,
                               const std::vector<int>& support_labels, int n_labels) {
  std::vector<const stimgen::Stimulus*> images;
  images.reserve(support_images.size() + 1);
  for (const auto& s : support_images) images.push_back(&s);
  images.push_back(&probe);
  const auto feats = embedder::embed_batch(*model.base, images);
  const std::vector<std::vector<double>> sup_feats(feats.begin(), feats.end() - 1);
  return mn_predict_features(model, feats.back(), sup_feats, support_labels, n_labels);
}

Episode sample_episode(const stimgen::LabeledDataset& ds, int way, diffcore::Rng& rng) {
  if (way < 2) throw ContractError("sample_episode: way must be at least 2");
  if (ds.n_classes < way)
    throw ContractError("sample_episode: dataset has fewer classes than requested way");

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.n_classes));
  for (int i = 0; i < static_cast<int>(ds.items.size()); ++i)
    by_class[static_cast<std::size_t>(ds.items[i].label)].push_back(i);

  std::vector<int> classes(static_cast<std::size_t>(ds.n_classes));
  std::iota(classes.begin(), classes.end(), 0);
  rng.shuffle(classes);
  classes.resize(static_cast<std::size_t>(way));

  Episode ep;
  ep.support_items.reserve(static_cast<std::size_t>(way));
  ep.probe_items.reserve(static_cast<std::size_t>(way));
  for (int cls : classes) {
    const auto& pool = by_class[static_cast<std::size_t>(cls)];
    if (pool.size() < 2)
      throw ContractError("sample_episode: class " + std::to_string(cls) +
                          " has fewer than 2 images (need disjoint support and probe)");
    const int sup = rng.uniform_int(static_cast<int>(pool.size()));
    int probe = rng.uniform_int(static_cast<int>(pool.size()) - 1);
    if (probe >= sup) ++probe;  // skip the support image: probe batch is disjoint
    ep.support_items.push_back(pool[static_cast<std::size_t>(sup)]);
    ep.probe_items.push_back(pool[static_cast<std::size_t>(probe)]);
  }

  ep.permutation.resize(static_cast<std::size_t>(way));
  std::iota(ep.permutation.begin(), ep.permutation.end(), 0);
  rng.shuffle(ep.permutation);
  return ep;
}

EpisodeResult episode_forward_backward(const MatchNetModel& model,
                                       const stimgen::LabeledDataset& ds, const Episode& ep) {
  if (ep.support_items.size() != ep.probe_items.size() ||
      ep.support_items.size() != ep.permutation.size() || ep.support_items.empty())
    throw ContractError("episode_forward_backward: malformed episode");
  std::vector<const stimgen::Stimulus*> images;
  for (int idx : ep.support_items) images.push_back(&ds.items.at(static_cast<std::size_t>(idx)).stim);
  for (int idx : ep.probe_items) images.push_back(&ds.items.at(static_cast<std::size_t>(idx)).stim);
  const auto feats = embedder::embed_batch(*model.base, images);

  EpisodeFeatures ef;
  const std::size_t way = ep.support_items.size();
  ef.support.assign(feats.begin(), feats.begin() + static_cast<std::ptrdiff_t>(way));
  ef.probes.assign(feats.begin() + static_cast<std::ptrdiff_t>(way), feats.end());
  return episode_core(model, ef, ep.permutation);
}

EpisodeResult episode_forward_backward_features(
    const MatchNetModel& model, const std::vector<std::vector<double>>& support_feats,
    const std::vector<std::vector<double>>& probe_feats, const std::vector<int>& permutation) {
  const std::size_t way = support_feats.size();
  if (way == 0 || probe_feats.size() != way || permutation.size() != way)
    throw ContractError("episode_forward_backward_features: malformed episode");
  std::vector<bool> seen(way, false);
  for (int lab : permutation) {
    if (lab < 0 || lab >= static_cast<int>(way) || seen[static_cast<std::size_t>(lab)])
      throw ContractError("episode_forward_backward_features: labels are not a permutation");
    seen[static_cast<std::size_t>(lab)] = true;
  }
  for (const auto& f : support_feats)
    if (static_cast<int>(f.size()) != model.feature_dim)
      throw ContractError("episode_forward_backward_features: support feature dim mismatch");
  for (const auto& f : probe_feats)
    if (static_cast<int>(f.size()) != model.feature_dim)
      throw ContractError("episode_forward_backward_features: probe feature dim mismatch");

  EpisodeFeatures ef;
  ef.support = support_feats;
  ef.probes = probe_feats;
  return episode_core(model, ef, permutation);
}

double train_episode(MatchNetModel& model, const stimgen::LabeledDataset& ds, const Episode& ep,
                     diffcore::Optimizer& opt) {
  EpisodeResult r = episode_forward_backward(model, ds, ep);
  opt.step(model.params, r.grads);
  model.clamp_events += r.clamp_events;
  ++model.episodes_trained;
  return r.loss;
}

MatchNetTraining train_matchnet(std::shared_ptr<const embedder::EmbedderCheckpoint> base,
                                const stimgen::LabeledDataset& ds, const MatchNetConfig& config) {
  if (config.episodes < 1) throw ContractError("train_matchnet: episodes must be positive");
  if (config.checkpoint_interval < 1 || config.episodes % config.checkpoint_interval != 0)
    throw ContractError("train_matchnet: checkpoint_interval must divide episodes");
  if (config.learning_rate <= 0.0)
    throw ContractError("train_matchnet: learning_rate must be positive");

  MatchNetModel model = init_matchnet(std::move(base), config.read_steps, config.seed);
  const auto table = base_features(*model.base, ds);

  diffcore::Rng episode_rng = diffcore::Rng(config.seed).fork("episodes");
  diffcore::Optimizer opt = diffcore::Optimizer::sgd(config.learning_rate);

  MatchNetTraining out;
  out.checkpoints.push_back(model);
  out.losses.reserve(static_cast<std::size_t>(config.episodes));

  for (long e = 1; e <= config.episodes; ++e) {
    const Episode ep = sample_episode(ds, config.way, episode_rng);
    EpisodeFeatures ef;
    for (int idx : ep.support_items) ef.support.push_back(table[static_cast<std::size_t>(idx)]);
    for (int idx : ep.probe_items) ef.probes.push_back(table[static_cast<std::size_t>(idx)]);

    EpisodeResult r;
    try {
      r = episode_core(model, ef, ep.permutation);
    } catch (const diffcore::NumericError& err) {
      throw TrainingError("train_matchnet: diverged at episode " + std::to_string(e) + ": " +
                          err.what());
    }
    opt.step(model.params, r.grads);
    model.clamp_events += r.clamp_events;
    ++model.episodes_trained;
    out.losses.push_back(r.loss);

    if (e % config.checkpoint_interval == 0) out.checkpoints.push_back(model);
  }
  return out;
}

void save_matchnet(const std::string& path, const MatchNetModel& model,
                   const std::string& embedder_path) {
  diffcore::ParamMap on_disk = model.params;
  on_disk.emplace("meta.read_steps", Tensor::scalar(static_cast<double>(model.read_steps)));
  on_disk.emplace("meta.feature_dim", Tensor::scalar(static_cast<double>(model.feature_dim)));
  on_disk.emplace("meta.episodes_trained",
                  Tensor::scalar(static_cast<double>(model.episodes_trained)));
  on_disk.emplace("meta.clamp_events", Tensor::scalar(static_cast<double>(model.clamp_events)));
  on_disk.emplace("meta.seed", Tensor::scalar(static_cast<double>(model.seed)));
  diffcore::checkpoint_save(path, on_disk);

  const std::string side = path + ".meta";
  std::ofstream out(side, std::ios::trunc);
  if (!out) throw ContractError("save_matchnet: cannot write sidecar '" + side + "'");
  out << "embedder_checkpoint=" << embedder_path << "\n";
  if (!out) throw ContractError("save_matchnet: failed writing sidecar '" + side + "'");
}

MatchNetModel load_matchnet(const std::string& path) {
  const std::string embedder_path = read_sidecar_embedder_path(path);
  if (!std::filesystem::exists(embedder_path))
    throw ContractError("load_matchnet: embedder checkpoint '" + embedder_path +
                        "' recorded in sidecar was not found");
  auto base = std::make_shared<embedder::EmbedderCheckpoint>(
      embedder::load_checkpoint(embedder_path));

  diffcore::ParamMap on_disk = diffcore::checkpoint_load(path);
  MatchNetModel model;
  model.read_steps = static_cast<int>(meta_scalar(on_disk, "meta.read_steps"));
  model.feature_dim = static_cast<int>(meta_scalar(on_disk, "meta.feature_dim"));
  model.episodes_trained = static_cast<long>(meta_scalar(on_disk, "meta.episodes_trained"));
  model.clamp_events = static_cast<long>(meta_scalar(on_disk, "meta.clamp_events"));
  model.seed = static_cast<std::uint64_t>(meta_scalar(on_disk, "meta.seed"));
  if (model.feature_dim != base->feature_dim)
    throw ContractError("load_matchnet: feature_dim disagrees with the recorded embedder");
  model.base = std::move(base);
  for (auto& [name, tensor] : on_disk)
    if (name.rfind("meta.", 0) != 0) model.params.emplace(name, std::move(tensor));
  return model;
}

}  // namespace matchnet
