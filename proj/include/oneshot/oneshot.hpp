#pragma once

#include <functional>
#include <vector>

namespace oneshot {

// One support example: an embedding and a one-hot label over the episode's
// label space.
struct SupportItem {
  std::vector<double> embedding;
  std::vector<double> label_onehot;
};

struct SupportSet {
  std::vector<SupportItem> items;
  int k() const { return static_cast<int>(items.size()); }
};

// Index of the single 1 in a one-hot vector; rejects anything else.
int onehot_index(const std::vector<double>& onehot);

enum class DistanceKind { EUCLIDEAN, COSINE_DISTANCE };

// Squared Euclidean distance, or cosine distance 1 - cos(a, b). Both are
// order-reversing in similarity, so argmin works for either.
double distance(const std::vector<double>& a, const std::vector<double>& b, DistanceKind kind);

struct NnResult {
  int label = 0;
  int index = 0;  // argmin support position
};

// Nearest-neighbour rule: the probe takes the label of the closest support
// item; ties break to the lowest index.
NnResult nn_classify(const std::vector<double>& probe, const SupportSet& support,
                     DistanceKind distance);

// Argmax over a predictive distribution (must sum to 1 within 1e-9);
// ties break to the lowest label.
int one_shot_label(const std::vector<double>& distribution);

// A one-shot evaluation episode: exactly one support item per class, plus
// probes with ground-truth labels.
struct EvalEpisode {
  SupportSet support;
  std::vector<std::vector<double>> probe_embeddings;
  std::vector<int> probe_labels;
};

// Any model exposing P(y | probe, S) as a distribution over labels.
using Classifier =
    std::function<std::vector<double>(const std::vector<double>&, const SupportSet&)>;

// Fraction of probes labeled correctly across all episodes.
double episode_accuracy(const Classifier& classifier, const std::vector<EvalEpisode>& episodes);

}  // namespace oneshot
