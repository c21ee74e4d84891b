#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "corpus/corpus.hpp"
#include "embedder/embedder.hpp"
#include "matchnet/matchnet.hpp"
#include "oneshot/oneshot.hpp"
#include "stimgen/stimgen.hpp"

namespace bias {

enum class Choice { SHAPE_MATCH, COLOR_MATCH };

struct ProbeOutcome {
  int triple_id = 0;
  Choice chosen = Choice::SHAPE_MATCH;
  // Preference gap between the two support items (distance or probability
  // units). Exactly 0 flags a tie, which is counted as SHAPE_MATCH.
  double margin = 0.0;
};

// Preference scores for a two-item support set, aligned with the argument
// order; higher wins. The support is a set: scorers are expected to be
// equivariant under swapping the two items (the nearest-neighbour scorer is
// exactly so; the matching classifier only up to its order-sensitive
// context embedding).
using PairScorer = std::function<std::array<double, 2>(
    const stimgen::Stimulus& probe, const stimgen::Stimulus& a, const stimgen::Stimulus& b)>;

// Nearest-neighbour preference over embedder features (negated distance).
// The checkpoint must outlive the scorer.
PairScorer ib_scorer(const embedder::EmbedderCheckpoint& ckpt, oneshot::DistanceKind distance);

// Matching-classifier preference: the predictive distribution over the two
// support labels. The model must outlive the scorer.
PairScorer mn_scorer(const matchnet::MatchNetModel& model);

// Scores the triple with support {shape match, color match}; ties go to
// SHAPE_MATCH with margin 0. Numeric failures are rethrown naming the
// triple.
ProbeOutcome probe_once(const PairScorer& scorer, const stimgen::ProbeTriple& triple);

std::vector<ProbeOutcome> probe_all(const PairScorer& scorer,
                                    const std::vector<stimgen::ProbeTriple>& triples);

// B_s: the proportion of probes assigned the shape-match label.
double measure_bias(const std::vector<ProbeOutcome>& outcomes);

struct ProbeDataset {
  std::string name;  // becomes the record's dataset column
  std::vector<stimgen::ProbeTriple> triples;
};

struct SweepConfig {
  int n_embedder_seeds = 5;
  int mn_seeds_per_embedder = 3;
  // Base hyperparameters; seed job s trains with embedder.seed + s, and its
  // matching classifiers with (embedder.seed + s) * 100 + m.
  embedder::EmbedderConfig embedder;
  matchnet::MatchNetConfig mn;
  stimgen::DatasetMode world_mode = stimgen::DatasetMode::BY_SHAPE;
  int world_classes = 10;
  int world_per_class = 100;
  std::uint64_t world_seed = 424242;
  // Trailing world classes reserved for one-shot evaluation; matching
  // classifiers train on the remaining classes.
  int mn_holdout_classes = 2;
  int mn_eval_episodes = 100;  // per matching-classifier checkpoint
  std::vector<ProbeDataset> probe_datasets;
  oneshot::DistanceKind distance = oneshot::DistanceKind::COSINE_DISTANCE;
  int jobs = 1;
};

// The full population experiment. For every embedder seed: train, then at
// every checkpoint record B_s on each probe dataset plus held-out-split
// classification accuracy; then train mn_seeds_per_embedder matching
// classifiers on the frozen final checkpoint, recording B_s and held-out
// one-shot episode accuracy at each of their checkpoints. Seeds run
// concurrently up to `jobs`; records keep a deterministic order. When
// `records_path` is nonempty, completed seeds are flushed there as they
// finish (and before any failure propagates).
std::vector<corpus::BiasRecord> run_sweep(const SweepConfig& config,
                                          const std::string& records_path = "");

// End-of-training (ib_bias, mn_bias) pairs, one per matching classifier and
// probe dataset, each paired with the embedder of its own seed lineage.
std::vector<std::pair<double, double>> pair_mn_ib(const std::vector<corpus::BiasRecord>& records);

}  // namespace bias
