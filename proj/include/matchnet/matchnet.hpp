#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "diffcore/optimizer.hpp"
#include "diffcore/rng.hpp"
#include "diffcore/tensor.hpp"
#include "embedder/embedder.hpp"
#include "stimgen/stimgen.hpp"

namespace matchnet {

struct MatchNetConfig {
  int read_steps = 2;  // attention-readout unroll length K
  int way = 2;
  double learning_rate = 0.1;  // plain SGD
  long episodes = 1000;
  long checkpoint_interval = 100;  // must divide episodes
  std::uint64_t seed = 0;
};

// A matching classifier on top of a frozen feature extractor. The base
// checkpoint is shared, never copied, never mutated. LSTM hidden size
// equals the base feature dimension.
struct MatchNetModel {
  std::shared_ptr<const embedder::EmbedderCheckpoint> base;
  diffcore::ParamMap params;  // g_fwd.*, g_bwd.*, f.*
  int read_steps = 2;
  int feature_dim = 0;
  long episodes_trained = 0;
  long clamp_events = 0;  // probability floor hits in training losses
  std::uint64_t seed = 0;
};

MatchNetModel init_matchnet(std::shared_ptr<const embedder::EmbedderCheckpoint> base,
                            int read_steps, std::uint64_t seed);

// Frozen-embedder features for every dataset item, in item order.
std::vector<std::vector<double>> base_features(const embedder::EmbedderCheckpoint& base,
                                               const stimgen::LabeledDataset& ds);

// Context embedding g(x_i, S): bi-directional LSTM over the support
// sequence (ordered by label index) plus the base feature as a skip
// connection. Outputs align with the input order.
std::vector<std::vector<double>> embed_support(
    const MatchNetModel& model, const std::vector<std::vector<double>>& support_feats,
    const std::vector<int>& labels);

// Probe embedding f(x̂, S): K LSTM steps consuming the base feature, the
// hidden state augmented by the attention readout over the embedded
// support, output with the base feature as a skip connection.
std::vector<double> embed_probe(const MatchNetModel& model, const std::vector<double>& probe_feat,
                                const std::vector<std::vector<double>>& support_embeddings);

// Softmax over cosine similarities of f against each g_i.
std::vector<double> attention(const std::vector<double>& f_vec,
                              const std::vector<std::vector<double>>& g_vecs);

// P(y | x̂, S): attention weights pooled by support label.
std::vector<double> mn_predict_features(const MatchNetModel& model,
                                        const std::vector<double>& probe_feat,
                                        const std::vector<std::vector<double>>& support_feats,
                                        const std::vector<int>& support_labels, int n_labels);
std::vector<double> mn_predict(const MatchNetModel& model, const stimgen::Stimulus& probe,
                               const std::vector<stimgen::Stimulus>& support_images,
                               const std::vector<int>& support_labels, int n_labels);

// One episodic task against a dataset: `way` support items (slot s holds
// an image whose episode label is permutation[s]) and one same-class probe
// per slot. Items are dataset indices.
struct Episode {
  std::vector<int> support_items;
  std::vector<int> probe_items;
  std::vector<int> permutation;  // slot -> freshly drawn label
};

Episode sample_episode(const stimgen::LabeledDataset& ds, int way, diffcore::Rng& rng);

struct EpisodeResult {
  double loss = 0.0;  // summed negative log-likelihood over the probe batch
  diffcore::GradMap grads;
  long clamp_events = 0;
};

// Loss and gradients w.r.t. the MN parameters only; the base embedder
// contributes constants.
EpisodeResult episode_forward_backward(const MatchNetModel& model,
                                       const stimgen::LabeledDataset& ds, const Episode& ep);

// Same objective on precomputed base features: support slot s carries
// episode label permutation[s], probe b is the same-class partner of slot b.
EpisodeResult episode_forward_backward_features(
    const MatchNetModel& model, const std::vector<std::vector<double>>& support_feats,
    const std::vector<std::vector<double>>& probe_feats, const std::vector<int>& permutation);

// One SGD step on the MN parameters. Returns the episode loss.
double train_episode(MatchNetModel& model, const stimgen::LabeledDataset& ds, const Episode& ep,
                     diffcore::Optimizer& opt);

struct MatchNetTraining {
  std::vector<MatchNetModel> checkpoints;  // episode 0 and every interval
  std::vector<double> losses;              // one entry per training episode
};

// Episodic training with a precomputed feature table (the base embedder is
// frozen, so features are constants worth caching). Deterministic in
// (base, dataset, config).
MatchNetTraining train_matchnet(std::shared_ptr<const embedder::EmbedderCheckpoint> base,
                                const stimgen::LabeledDataset& ds, const MatchNetConfig& config);

// Persistence: parameters via the shared codec; the base checkpoint's path
// goes into a sidecar text file "<path>.meta" and is loaded back from
// there.
void save_matchnet(const std::string& path, const MatchNetModel& model,
                   const std::string& embedder_path);
MatchNetModel load_matchnet(const std::string& path);

}  // namespace matchnet
