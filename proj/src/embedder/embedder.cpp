#include "embedder/embedder.hpp"

#include <algorithm>
#include <numeric>
#include <utility>

#include "diffcore/checkpoint.hpp"
#include "diffcore/errors.hpp"
#include "diffcore/graph.hpp"
#include "diffcore/init.hpp"
#include "diffcore/optimizer.hpp"
#include "diffcore/rng.hpp"

namespace embedder {

using diffcore::ContractError;
using diffcore::GradMap;
using diffcore::Graph;
using diffcore::NodeId;
using diffcore::NumericError;
using diffcore::Optimizer;
using diffcore::ParamMap;
using diffcore::Rng;
using diffcore::Tensor;
using diffcore::TrainingError;

namespace {

void check_config(const EmbedderConfig& c) {
  if (c.image_size < 16) throw ContractError("embedder: image_size must be at least 16");
  if (c.image_size % 4 != 0) throw ContractError("embedder: image_size must be divisible by 4");
  if (c.feature_dim <= 0) throw ContractError("embedder: feature_dim must be positive");
  if (c.conv1_channels <= 0 || c.conv2_channels <= 0) {
    throw ContractError("embedder: channel counts must be positive");
  }
  if (c.steps < 1 || c.batch_size < 1) throw ContractError("embedder: steps/batch must be positive");
  if (c.checkpoint_interval < 1 || c.steps % c.checkpoint_interval != 0) {
    throw ContractError("embedder: checkpoint_interval must divide steps");
  }
}

ParamMap init_params(const EmbedderConfig& c, int n_classes, Rng& rng) {
  const int flat = (c.image_size / 4) * (c.image_size / 4) * c.conv2_channels;
  ParamMap p;
  p["conv1.w"] = diffcore::glorot_uniform({3, 3, 3, c.conv1_channels}, 9 * 3,
                                          9 * c.conv1_channels, rng);
  p["conv1.b"] = Tensor::zeros({c.conv1_channels});
  p["conv2.w"] = diffcore::glorot_uniform({3, 3, c.conv1_channels, c.conv2_channels},
                                          9 * c.conv1_channels, 9 * c.conv2_channels, rng);
  p["conv2.b"] = Tensor::zeros({c.conv2_channels});
  p["dense.w"] = diffcore::glorot_uniform({flat, c.feature_dim}, flat, c.feature_dim, rng);
  p["dense.b"] = Tensor::zeros({c.feature_dim});
  p["head.w"] = diffcore::glorot_uniform({c.feature_dim, n_classes}, c.feature_dim, n_classes, rng);
  p["head.b"] = Tensor::zeros({n_classes});
  return p;
}

// Pixel grid -> [B,H,W,3] tensor scaled to [0,1].
Tensor batch_tensor(const std::vector<const stimgen::Stimulus*>& images, int image_size) {
  const int b = static_cast<int>(images.size());
  Tensor t = Tensor::zeros({b, image_size, image_size, 3});
  std::size_t at = 0;
  for (const auto* img : images) {
    if (img->width != image_size || img->height != image_size) {
      throw ContractError("embedder: image is " + std::to_string(img->width) + "x" +
                          std::to_string(img->height) + ", model expects " +
                          std::to_string(image_size));
    }
    for (std::uint8_t px : img->image) t.data[at++] = px / 255.0;
  }
  return t;
}

struct ForwardNodes {
  NodeId features;
  NodeId logits;
};

// The whole classifier as one graph; `trainable` decides whether weights
// are registered for gradients or frozen in as constants.
ForwardNodes build_forward(Graph& g, const ParamMap& params, Tensor batch, bool trainable) {
  auto bind = [&](const char* name) {
    return trainable ? g.param(name, params.at(name)) : g.constant(params.at(name), name);
  };
  const int b = batch.shape[0];
  const NodeId x = g.constant(std::move(batch), "input");
  const NodeId c1 = g.maxpool2(g.relu(g.conv2d(x, bind("conv1.w"), bind("conv1.b"))));
  const NodeId c2 = g.maxpool2(g.relu(g.conv2d(c1, bind("conv2.w"), bind("conv2.b"))));
  const Tensor& c2v = g.value(c2);
  const int flat = c2v.shape[1] * c2v.shape[2] * c2v.shape[3];
  const NodeId flatx = g.reshape(c2, {b, flat});
  const NodeId features = g.relu(g.add_rows(g.matmul(flatx, bind("dense.w")), bind("dense.b")));
  const NodeId logits = g.add_rows(g.matmul(features, bind("head.w")), bind("head.b"));
  return {features, logits};
}

struct EvalMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Mean cross-entropy and top-1 accuracy over a list of items, chunked to
// bound graph memory. Ties resolve to the lowest class index.
EvalMetrics eval_metrics(const ParamMap& params, int image_size,
                         const std::vector<const stimgen::LabeledItem*>& items) {
  if (items.empty()) throw ContractError("embedder: cannot evaluate an empty dataset");
  const int n_classes = params.at("head.b").shape[0];
  constexpr std::size_t kChunk = 128;

  double loss_sum = 0.0;
  long correct = 0;
  for (std::size_t begin = 0; begin < items.size(); begin += kChunk) {
    const std::size_t end = std::min(items.size(), begin + kChunk);
    std::vector<const stimgen::Stimulus*> images;
    std::vector<int> labels;
    for (std::size_t i = begin; i < end; ++i) {
      images.push_back(&items[i]->stim);
      labels.push_back(items[i]->label);
    }
    Graph g;
    const auto fwd = build_forward(g, params, batch_tensor(images, image_size), false);
    const Tensor& logits = g.value(fwd.logits);
    loss_sum += g.scalar_value(g.cross_entropy(fwd.logits, labels)) * static_cast<double>(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const double* row = logits.data.data() + i * static_cast<std::size_t>(n_classes);
      int best = 0;
      for (int k = 1; k < n_classes; ++k) {
        if (row[k] > row[best]) best = k;
      }
      if (best == labels[i]) ++correct;
    }
  }
  EvalMetrics m;
  m.loss = loss_sum / static_cast<double>(items.size());
  m.accuracy = static_cast<double>(correct) / static_cast<double>(items.size());
  return m;
}

EmbedderCheckpoint snapshot(const EmbedderConfig& c, int n_classes, long step,
                            const ParamMap& params,
                            const std::vector<const stimgen::LabeledItem*>& train_items) {
  const EvalMetrics m = eval_metrics(params, c.image_size, train_items);
  EmbedderCheckpoint ckpt;
  ckpt.step = step;
  ckpt.image_size = c.image_size;
  ckpt.feature_dim = c.feature_dim;
  ckpt.conv1_channels = c.conv1_channels;
  ckpt.conv2_channels = c.conv2_channels;
  ckpt.n_classes = n_classes;
  ckpt.train_accuracy = m.accuracy;
  ckpt.train_loss = m.loss;
  ckpt.params = params;
  return ckpt;
}

}  // namespace

std::vector<EmbedderCheckpoint> train_embedder(const stimgen::LabeledDataset& dataset,
                                               const EmbedderConfig& config) {
  check_config(config);
  if (dataset.items.empty()) throw ContractError("train_embedder: dataset is empty");
  if (dataset.n_classes < 2) throw ContractError("train_embedder: need at least 2 classes");

  std::vector<const stimgen::LabeledItem*> train_items;
  for (const auto& item : dataset.items) {
    if (!item.heldout) train_items.push_back(&item);
  }
  if (train_items.empty()) throw ContractError("train_embedder: training slice is empty");

  Rng rng(config.seed);
  Rng init_rng = rng.fork("init");
  Rng batch_rng = rng.fork("batches");

  ParamMap params = init_params(config, dataset.n_classes, init_rng);
  Optimizer opt = config.optimizer == OptimizerKind::SGD
                      ? Optimizer::sgd(config.learning_rate)
                      : Optimizer::rmsprop(config.learning_rate, config.rms_decay, config.rms_eps);

  std::vector<EmbedderCheckpoint> out;
  out.push_back(snapshot(config, dataset.n_classes, 0, params, train_items));

  std::vector<int> order(train_items.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();  // force a shuffle on first use

  for (long step = 1; step <= config.steps; ++step) {
    std::vector<const stimgen::Stimulus*> images;
    std::vector<int> labels;
    images.reserve(static_cast<std::size_t>(config.batch_size));
    for (int k = 0; k < config.batch_size; ++k) {
      if (cursor >= order.size()) {
        batch_rng.shuffle(order);
        cursor = 0;
      }
      const auto* item = train_items[static_cast<std::size_t>(order[cursor++])];
      images.push_back(&item->stim);
      labels.push_back(item->label);
    }

    try {
      Graph g;
      const auto fwd = build_forward(g, params, batch_tensor(images, config.image_size), true);
      const NodeId loss = g.cross_entropy(fwd.logits, labels);
      const GradMap grads = g.forward_backward(loss);
      opt.step(params, grads);
    } catch (const NumericError& e) {
      throw TrainingError("train_embedder: diverged at step " + std::to_string(step) + ": " +
                          e.what());
    }

    if (step % config.checkpoint_interval == 0) {
      out.push_back(snapshot(config, dataset.n_classes, step, params, train_items));
    }
  }
  return out;
}

std::vector<std::vector<double>> embed_batch(const EmbedderCheckpoint& ckpt,
                                             const std::vector<const stimgen::Stimulus*>& images) {
  std::vector<std::vector<double>> out;
  out.reserve(images.size());
  constexpr std::size_t kChunk = 64;
  for (std::size_t begin = 0; begin < images.size(); begin += kChunk) {
    const std::size_t end = std::min(images.size(), begin + kChunk);
    const std::vector<const stimgen::Stimulus*> chunk(images.begin() + static_cast<std::ptrdiff_t>(begin),
                                                      images.begin() + static_cast<std::ptrdiff_t>(end));
    Graph g;
    const auto fwd = build_forward(g, ckpt.params, batch_tensor(chunk, ckpt.image_size), false);
    const Tensor& feats = g.value(fwd.features);
    const auto dim = static_cast<std::size_t>(ckpt.feature_dim);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      out.emplace_back(feats.data.begin() + static_cast<std::ptrdiff_t>(i * dim),
                       feats.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
    }
  }
  return out;
}

std::vector<double> embed(const EmbedderCheckpoint& ckpt, const stimgen::Stimulus& image) {
  return embed_batch(ckpt, {&image})[0];
}

std::vector<double> classify_logits(const EmbedderCheckpoint& ckpt,
                                    const stimgen::Stimulus& image) {
  Graph g;
  const auto fwd = build_forward(g, ckpt.params, batch_tensor({&image}, ckpt.image_size), false);
  return g.value(fwd.logits).data;
}

double classify_accuracy(const EmbedderCheckpoint& ckpt, const stimgen::LabeledDataset& dataset) {
  if (dataset.items.empty()) throw ContractError("classify_accuracy: dataset is empty");
  if (dataset.n_classes != ckpt.n_classes) {
    throw ContractError("classify_accuracy: dataset has " + std::to_string(dataset.n_classes) +
                        " classes, model was trained with " + std::to_string(ckpt.n_classes));
  }
  std::vector<const stimgen::LabeledItem*> items;
  for (const auto& item : dataset.items) items.push_back(&item);
  return eval_metrics(ckpt.params, ckpt.image_size, items).accuracy;
}

void save_checkpoint(const std::string& path, const EmbedderCheckpoint& ckpt) {
  ParamMap full = ckpt.params;
  full["meta.step"] = Tensor::scalar(static_cast<double>(ckpt.step));
  full["meta.image_size"] = Tensor::scalar(ckpt.image_size);
  full["meta.feature_dim"] = Tensor::scalar(ckpt.feature_dim);
  full["meta.conv1_channels"] = Tensor::scalar(ckpt.conv1_channels);
  full["meta.conv2_channels"] = Tensor::scalar(ckpt.conv2_channels);
  full["meta.n_classes"] = Tensor::scalar(ckpt.n_classes);
  full["meta.train_accuracy"] = Tensor::scalar(ckpt.train_accuracy);
  full["meta.train_loss"] = Tensor::scalar(ckpt.train_loss);
  diffcore::checkpoint_save(path, full);
}

EmbedderCheckpoint load_checkpoint(const std::string& path) {
  ParamMap full = diffcore::checkpoint_load(path);
  auto take = [&](const char* name) {
    auto it = full.find(name);
    if (it == full.end()) {
      throw ContractError("load_checkpoint: '" + path + "' lacks entry '" + name + "'");
    }
    const double v = it->second.data.at(0);
    full.erase(it);
    return v;
  };
  EmbedderCheckpoint ckpt;
  ckpt.step = static_cast<long>(take("meta.step"));
  ckpt.image_size = static_cast<int>(take("meta.image_size"));
  ckpt.feature_dim = static_cast<int>(take("meta.feature_dim"));
  ckpt.conv1_channels = static_cast<int>(take("meta.conv1_channels"));
  ckpt.conv2_channels = static_cast<int>(take("meta.conv2_channels"));
  ckpt.n_classes = static_cast<int>(take("meta.n_classes"));
  ckpt.train_accuracy = take("meta.train_accuracy");
  ckpt.train_loss = take("meta.train_loss");
  ckpt.params = std::move(full);
  return ckpt;
}

}  // namespace embedder
