#include "oneshot/oneshot.hpp"

#include <cmath>
#include <set>
#include <string>

#include "diffcore/errors.hpp"

namespace oneshot {

using diffcore::ContractError;
using diffcore::NumericError;

int onehot_index(const std::vector<double>& onehot) {
  int idx = -1;
  for (std::size_t i = 0; i < onehot.size(); ++i) {
    if (onehot[i] == 1.0) {
      if (idx >= 0) throw ContractError("onehot_index: more than one 1");
      idx = static_cast<int>(i);
    } else if (onehot[i] != 0.0) {
      throw ContractError("onehot_index: entries must be 0 or 1");
    }
  }
  if (idx < 0) throw ContractError("onehot_index: no 1 present");
  return idx;
}

namespace {

double euclidean_sq(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine distance: zero-norm embedding");
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double distance(const std::vector<double>& a, const std::vector<double>& b, DistanceKind kind) {
  if (a.size() != b.size()) throw ContractError("distance: length mismatch");
  if (a.empty()) throw ContractError("distance: empty vectors");
  return kind == DistanceKind::EUCLIDEAN ? euclidean_sq(a, b) : cosine_distance(a, b);
}

NnResult nn_classify(const std::vector<double>& probe, const SupportSet& support,
                     DistanceKind distance) {
  if (support.items.empty()) throw ContractError("nn_classify: empty support set");
  if (probe.empty()) throw ContractError("nn_classify: empty probe embedding");

  NnResult best;
  double best_d = 0.0;
  for (int i = 0; i < support.k(); ++i) {
    const auto& item = support.items[static_cast<std::size_t>(i)];
    if (item.embedding.size() != probe.size()) {
      throw ContractError("nn_classify: support item " + std::to_string(i) +
                          " embedding length mismatch");
    }
    const double d = distance == DistanceKind::EUCLIDEAN ? euclidean_sq(probe, item.embedding)
                                                         : cosine_distance(probe, item.embedding);
    if (i == 0 || d < best_d) {  // strict <: ties keep the lowest index
      best_d = d;
      best.index = i;
      best.label = onehot_index(item.label_onehot);
    }
  }
  return best;
}

int one_shot_label(const std::vector<double>& distribution) {
  if (distribution.empty()) throw ContractError("one_shot_label: empty distribution");
  double sum = 0.0;
  for (double p : distribution) sum += p;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ContractError("one_shot_label: distribution sums to " + std::to_string(sum));
  }
  int best = 0;
  for (std::size_t i = 1; i < distribution.size(); ++i) {
    if (distribution[i] > distribution[best]) best = static_cast<int>(i);
  }
  return best;
}

double episode_accuracy(const Classifier& classifier, const std::vector<EvalEpisode>& episodes) {
  if (episodes.empty()) throw ContractError("episode_accuracy: no episodes");
  long total = 0, correct = 0;
  for (const auto& ep : episodes) {
    std::set<int> classes;
    for (const auto& item : ep.support.items) {
      if (!classes.insert(onehot_index(item.label_onehot)).second) {
        throw ContractError("episode_accuracy: duplicate class in a one-shot support set");
      }
    }
    if (ep.probe_embeddings.size() != ep.probe_labels.size()) {
      throw ContractError("episode_accuracy: probe/label count mismatch");
    }
    for (std::size_t i = 0; i < ep.probe_embeddings.size(); ++i) {
      const auto dist = classifier(ep.probe_embeddings[i], ep.support);
      if (one_shot_label(dist) == ep.probe_labels[i]) ++correct;
      ++total;
    }
  }
  if (total == 0) throw ContractError("episode_accuracy: episodes contain no probes");
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace oneshot
