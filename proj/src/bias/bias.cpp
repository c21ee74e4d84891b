#include "bias/bias.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <tuple>

#include "diffcore/errors.hpp"
#include "diffcore/rng.hpp"

namespace bias {

using diffcore::ContractError;
using diffcore::NumericError;

namespace {

ProbeOutcome outcome_from_scores(int triple_id, double shape_score, double color_score) {
  ProbeOutcome out;
  out.triple_id = triple_id;
  if (shape_score >= color_score) {
    out.chosen = Choice::SHAPE_MATCH;  // ties land here with margin exactly 0
    out.margin = shape_score - color_score;
  } else {
    out.chosen = Choice::COLOR_MATCH;
    out.margin = color_score - shape_score;
  }
  return out;
}

struct TripleFeatures {
  std::vector<double> probe;
  std::vector<double> shape_match;
  std::vector<double> color_match;
};

// Frozen-embedder features for every triple, computed in one batch.
std::vector<TripleFeatures> embed_triples(const embedder::EmbedderCheckpoint& ckpt,
                                          const std::vector<stimgen::ProbeTriple>& triples) {
  std::vector<const stimgen::Stimulus*> images;
  images.reserve(triples.size() * 3);
  for (const auto& t : triples) {
    images.push_back(&t.probe);
    images.push_back(&t.shape_match);
    images.push_back(&t.color_match);
  }
  auto feats = embedder::embed_batch(ckpt, images);
  std::vector<TripleFeatures> out(triples.size());
  for (std::size_t i = 0; i < triples.size(); ++i) {
    out[i].probe = std::move(feats[3 * i]);
    out[i].shape_match = std::move(feats[3 * i + 1]);
    out[i].color_match = std::move(feats[3 * i + 2]);
  }
  return out;
}

double ib_bias_on_features(const std::vector<TripleFeatures>& feats,
                           const std::vector<stimgen::ProbeTriple>& triples,
                           oneshot::DistanceKind kind) {
  std::vector<ProbeOutcome> outcomes;
  outcomes.reserve(triples.size());
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const double ds = oneshot::distance(feats[i].probe, feats[i].shape_match, kind);
    const double dc = oneshot::distance(feats[i].probe, feats[i].color_match, kind);
    outcomes.push_back(outcome_from_scores(triples[i].triple_id, -ds, -dc));
  }
  return measure_bias(outcomes);
}

double mn_bias_on_features(const matchnet::MatchNetModel& model,
                           const std::vector<TripleFeatures>& feats,
                           const std::vector<stimgen::ProbeTriple>& triples) {
  std::vector<ProbeOutcome> outcomes;
  outcomes.reserve(triples.size());
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const auto p = matchnet::mn_predict_features(
        model, feats[i].probe, {feats[i].shape_match, feats[i].color_match}, {0, 1}, 2);
    outcomes.push_back(outcome_from_scores(triples[i].triple_id, p[0], p[1]));
  }
  return measure_bias(outcomes);
}

// Fraction of eval-episode probes the model labels correctly, on
// precomputed features.
double mn_eval_accuracy(const matchnet::MatchNetModel& model,
                        const std::vector<std::vector<double>>& table,
                        const std::vector<matchnet::Episode>& episodes) {
  long correct = 0;
  long total = 0;
  for (const auto& ep : episodes) {
    std::vector<std::vector<double>> sup;
    sup.reserve(ep.support_items.size());
    for (int idx : ep.support_items) sup.push_back(table[static_cast<std::size_t>(idx)]);
    const int way = static_cast<int>(ep.support_items.size());
    for (std::size_t b = 0; b < ep.probe_items.size(); ++b) {
      const auto p = matchnet::mn_predict_features(
          model, table[static_cast<std::size_t>(ep.probe_items[b])], sup, ep.permutation, way);
      if (oneshot::one_shot_label(p) == ep.permutation[b]) ++correct;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

void validate(const SweepConfig& cfg) {
  if (cfg.n_embedder_seeds < 1 || cfg.mn_seeds_per_embedder < 1)
    throw ContractError("run_sweep: seed counts must be at least 1");
  if (cfg.mn_seeds_per_embedder > 99)
    throw ContractError("run_sweep: at most 99 matching classifiers per embedder "
                        "(seed lineage packs the index into two decimal digits)");
  if (cfg.probe_datasets.empty()) throw ContractError("run_sweep: no probe datasets");
  for (const auto& pd : cfg.probe_datasets) {
    if (pd.name.empty()) throw ContractError("run_sweep: probe dataset without a name");
    if (pd.triples.empty())
      throw ContractError("run_sweep: probe dataset '" + pd.name + "' is empty");
  }
  for (std::size_t i = 0; i < cfg.probe_datasets.size(); ++i)
    for (std::size_t j = i + 1; j < cfg.probe_datasets.size(); ++j)
      if (cfg.probe_datasets[i].name == cfg.probe_datasets[j].name)
        throw ContractError("run_sweep: duplicate probe dataset name '" +
                            cfg.probe_datasets[i].name + "'");
  if (cfg.mn_holdout_classes < cfg.mn.way)
    throw ContractError("run_sweep: mn_holdout_classes must cover an evaluation episode");
  if (cfg.world_classes - cfg.mn_holdout_classes < cfg.mn.way)
    throw ContractError("run_sweep: too few world classes left for matching training");
  if (cfg.mn_eval_episodes < 1) throw ContractError("run_sweep: mn_eval_episodes must be >= 1");
  if (cfg.jobs < 1) throw ContractError("run_sweep: jobs must be >= 1");
}

}  // namespace

PairScorer ib_scorer(const embedder::EmbedderCheckpoint& ckpt, oneshot::DistanceKind kind) {
  const auto* c = &ckpt;
  return [c, kind](const stimgen::Stimulus& probe, const stimgen::Stimulus& a,
                   const stimgen::Stimulus& b) -> std::array<double, 2> {
    const auto feats = embedder::embed_batch(*c, {&probe, &a, &b});
    return {-oneshot::distance(feats[0], feats[1], kind),
            -oneshot::distance(feats[0], feats[2], kind)};
  };
}

PairScorer mn_scorer(const matchnet::MatchNetModel& model) {
  const auto* m = &model;
  return [m](const stimgen::Stimulus& probe, const stimgen::Stimulus& a,
             const stimgen::Stimulus& b) -> std::array<double, 2> {
    const auto p = matchnet::mn_predict(*m, probe, {a, b}, {0, 1}, 2);
    return {p[0], p[1]};
  };
}

ProbeOutcome probe_once(const PairScorer& scorer, const stimgen::ProbeTriple& triple) {
  try {
    const auto s = scorer(triple.probe, triple.shape_match, triple.color_match);
    return outcome_from_scores(triple.triple_id, s[0], s[1]);
  } catch (const NumericError& err) {
    throw NumericError("probe_once: triple " + std::to_string(triple.triple_id) + ": " +
                       err.what());
  }
}

std::vector<ProbeOutcome> probe_all(const PairScorer& scorer,
                                    const std::vector<stimgen::ProbeTriple>& triples) {
  std::vector<ProbeOutcome> out;
  out.reserve(triples.size());
  for (const auto& t : triples) out.push_back(probe_once(scorer, t));
  return out;
}

double measure_bias(const std::vector<ProbeOutcome>& outcomes) {
  if (outcomes.empty()) throw ContractError("measure_bias: no outcomes");
  long shape = 0;
  for (const auto& o : outcomes)
    if (o.chosen == Choice::SHAPE_MATCH) ++shape;
  return static_cast<double>(shape) / static_cast<double>(outcomes.size());
}

std::vector<corpus::BiasRecord> run_sweep(const SweepConfig& cfg,
                                          const std::string& records_path) {
  validate(cfg);

  const auto world = stimgen::generate_dataset(cfg.world_mode, cfg.world_classes,
                                               cfg.world_per_class, cfg.world_seed,
                                               cfg.embedder.image_size);
  const auto heldout_items = stimgen::heldout_split(world);
  const int mn_train_classes = cfg.world_classes - cfg.mn_holdout_classes;
  const auto mn_train = stimgen::class_subset(world, 0, mn_train_classes);
  const auto mn_eval = stimgen::class_subset(world, mn_train_classes, cfg.mn_holdout_classes);

  auto run_seed = [&](int s) {
    std::vector<corpus::BiasRecord> recs;

    embedder::EmbedderConfig ecfg = cfg.embedder;
    ecfg.seed = cfg.embedder.seed + static_cast<std::uint64_t>(s);
    const long eseed = static_cast<long>(ecfg.seed);
    auto ckpts = embedder::train_embedder(world, ecfg);

    for (const auto& ck : ckpts) {
      const double acc = embedder::classify_accuracy(ck, heldout_items);
      for (const auto& pd : cfg.probe_datasets) {
        const double b = ib_bias_on_features(embed_triples(ck, pd.triples), pd.triples,
                                             cfg.distance);
        recs.push_back({corpus::ModelKind::IB, eseed, ck.step, pd.name, b, acc});
      }
    }

    const auto base =
        std::make_shared<const embedder::EmbedderCheckpoint>(std::move(ckpts.back()));

    // Probe-triple and eval-class features are frozen across every matching
    // classifier built on this embedder; compute them once.
    std::vector<std::vector<TripleFeatures>> triple_feats;
    triple_feats.reserve(cfg.probe_datasets.size());
    for (const auto& pd : cfg.probe_datasets)
      triple_feats.push_back(embed_triples(*base, pd.triples));
    const auto eval_table = matchnet::base_features(*base, mn_eval);
    auto eval_rng = diffcore::Rng(ecfg.seed).fork("mn_eval");
    std::vector<matchnet::Episode> eval_episodes;
    eval_episodes.reserve(static_cast<std::size_t>(cfg.mn_eval_episodes));
    for (int i = 0; i < cfg.mn_eval_episodes; ++i)
      eval_episodes.push_back(matchnet::sample_episode(mn_eval, cfg.mn.way, eval_rng));

    for (int m = 0; m < cfg.mn_seeds_per_embedder; ++m) {
      matchnet::MatchNetConfig mcfg = cfg.mn;
      mcfg.seed = ecfg.seed * 100 + static_cast<std::uint64_t>(m);
      const auto run = matchnet::train_matchnet(base, mn_train, mcfg);
      for (const auto& model : run.checkpoints) {
        const double acc = mn_eval_accuracy(model, eval_table, eval_episodes);
        for (std::size_t d = 0; d < cfg.probe_datasets.size(); ++d) {
          const double b = mn_bias_on_features(model, triple_feats[d],
                                               cfg.probe_datasets[d].triples);
          recs.push_back({corpus::ModelKind::MN, static_cast<long>(mcfg.seed),
                          model.episodes_trained, cfg.probe_datasets[d].name, b, acc});
        }
      }
    }
    return recs;
  };

  const int n = cfg.n_embedder_seeds;
  const int n_jobs = std::min(cfg.jobs, n);

  std::vector<std::vector<corpus::BiasRecord>> results(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<char> done(static_cast<std::size_t>(n), 0);
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<int> next{0};

  auto worker = [&] {
    for (;;) {
      const int s = next.fetch_add(1);
      if (s >= n) return;
      std::vector<corpus::BiasRecord> recs;
      std::exception_ptr err;
      try {
        recs = run_seed(s);
      } catch (...) {
        err = std::current_exception();
      }
      {
        std::lock_guard<std::mutex> lk(mu);
        results[static_cast<std::size_t>(s)] = std::move(recs);
        errors[static_cast<std::size_t>(s)] = err;
        done[static_cast<std::size_t>(s)] = 1;
      }
      cv.notify_all();
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_jobs));
  for (int j = 0; j < n_jobs; ++j) pool.emplace_back(worker);

  // Collect in seed order, flushing completed prefixes so a late failure
  // still leaves every finished seed on disk.
  std::vector<corpus::BiasRecord> all;
  std::exception_ptr first_error;
  for (int s = 0; s < n && !first_error; ++s) {
    {
      std::unique_lock<std::mutex> lk(mu);
      cv.wait(lk, [&] { return done[static_cast<std::size_t>(s)] != 0; });
      if (errors[static_cast<std::size_t>(s)]) {
        first_error = errors[static_cast<std::size_t>(s)];
        break;
      }
      auto& recs = results[static_cast<std::size_t>(s)];
      all.insert(all.end(), recs.begin(), recs.end());
      recs.clear();
    }
    if (!records_path.empty()) {
      try {
        corpus::records_write(records_path, all);
      } catch (...) {
        first_error = std::current_exception();
      }
    }
  }

  if (first_error) next.store(n);  // stop handing out new seeds
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return all;
}

std::vector<std::pair<double, double>> pair_mn_ib(
    const std::vector<corpus::BiasRecord>& records) {
  // Final-step bias per (kind, seed, dataset).
  std::map<std::tuple<int, long, std::string>, std::pair<long, double>> final_bias;
  bool any_ib = false, any_mn = false;
  for (const auto& r : records) {
    const int kind = r.model_kind == corpus::ModelKind::IB ? 0 : 1;
    (kind == 0 ? any_ib : any_mn) = true;
    const auto key = std::make_tuple(kind, r.seed, r.dataset);
    auto it = final_bias.find(key);
    if (it == final_bias.end() || r.step >= it->second.first)
      final_bias[key] = {r.step, r.bias};
  }
  if (!any_ib || !any_mn)
    throw ContractError("pair_mn_ib: records must contain both model kinds");

  std::vector<std::pair<double, double>> out;
  std::string missing;
  for (const auto& [key, step_bias] : final_bias) {
    const auto& [kind, seed, dataset] = key;
    if (kind != 1) continue;
    const long embedder_seed = seed / 100;  // lineage: embedder_seed * 100 + index
    const auto it = final_bias.find(std::make_tuple(0, embedder_seed, dataset));
    if (it == final_bias.end()) {
      if (!missing.empty()) missing += ", ";
      missing += std::to_string(seed) + " (embedder " + std::to_string(embedder_seed) +
                 ", dataset '" + dataset + "')";
      continue;
    }
    out.push_back({it->second.second, step_bias.second});
  }
  if (!missing.empty())
    throw ContractError("pair_mn_ib: no IB counterpart for MN seeds: " + missing);
  return out;
}

}  // namespace bias
