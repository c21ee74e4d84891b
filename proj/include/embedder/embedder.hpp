#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffcore/tensor.hpp"
#include "stimgen/stimgen.hpp"

namespace embedder {

enum class OptimizerKind { SGD, RMSProp };

struct EmbedderConfig {
  int image_size = 32;
  int feature_dim = 64;
  int conv1_channels = 16;
  int conv2_channels = 32;
  int steps = 1000;
  int batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::RMSProp;
  double learning_rate = 1e-3;
  double rms_decay = 0.9;
  double rms_eps = 1e-8;
  int checkpoint_interval = 100;  // must divide steps
  std::uint64_t seed = 0;
};

// Immutable snapshot of the classifier at one training step. Shareable
// across threads once constructed.
struct EmbedderCheckpoint {
  long step = 0;
  int image_size = 0;
  int feature_dim = 0;
  int conv1_channels = 0;
  int conv2_channels = 0;
  int n_classes = 0;
  double train_accuracy = 0.0;  // top-1 over the training slice at `step`
  double train_loss = 0.0;      // mean cross-entropy over the same slice
  diffcore::ParamMap params;
};

// Softmax classifier: conv3x3(c1)-relu-pool-conv3x3(c2)-relu-pool-
// dense(feature_dim)-relu-dense(n_classes), cross-entropy, seeded batch
// shuffling. Trains on the non-heldout slice; snapshots at step 0 and
// every checkpoint_interval steps. Deterministic in (dataset, config).
std::vector<EmbedderCheckpoint> train_embedder(const stimgen::LabeledDataset& dataset,
                                               const EmbedderConfig& config);

// Feature vector h(x): the activations feeding the softmax head. The
// checkpoint's head weights applied to this vector reproduce the logits
// exactly.
std::vector<double> embed(const EmbedderCheckpoint& ckpt, const stimgen::Stimulus& image);

// Same, amortized over many images.
std::vector<std::vector<double>> embed_batch(const EmbedderCheckpoint& ckpt,
                                             const std::vector<const stimgen::Stimulus*>& images);

// Raw class scores for one image (softmax input of the classifier head).
std::vector<double> classify_logits(const EmbedderCheckpoint& ckpt,
                                    const stimgen::Stimulus& image);

// Top-1 accuracy; ties prefer the lowest class index.
double classify_accuracy(const EmbedderCheckpoint& ckpt, const stimgen::LabeledDataset& dataset);

// Snapshot persistence; model geometry rides along as scalar entries.
void save_checkpoint(const std::string& path, const EmbedderCheckpoint& ckpt);
EmbedderCheckpoint load_checkpoint(const std::string& path);

}  // namespace embedder
