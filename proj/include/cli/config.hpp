#pragma once

#include <cstdint>
#include <string>

#include "embedder/embedder.hpp"
#include "matchnet/matchnet.hpp"
#include "oneshot/oneshot.hpp"
#include "stimgen/stimgen.hpp"

namespace cli {

// Every tunable of the pipeline, bound to a config file in a flat TOML
// subset: [section] headers over scalar `key = value` lines (quoted
// strings, integers, floats, booleans; `#` comments). Unknown keys are
// rejected and every value is range-checked at load, so a typo cannot
// silently fall back to a default.
struct RunConfig {
  // [world] — the labeled training world.
  stimgen::DatasetMode world_mode = stimgen::DatasetMode::BY_SHAPE;
  int world_classes = 10;
  int world_per_class = 100;
  int image_size = 32;
  std::uint64_t world_seed = 424242;

  // [probe] — match-to-sample triples: synthesized, or an existing manifest.
  std::string probe_source = "synthetic";  // "synthetic" or a manifest path
  int probe_triples = 50;
  int probe_datasets = 1;  // synthetic probe sets per sweep (seeds seed+i)
  std::uint64_t probe_seed = 7;

  // [embedder] — image_size is taken from [world].
  embedder::EmbedderConfig embedder;

  // [matchnet]
  matchnet::MatchNetConfig mn;

  // [sweep]
  int sweep_embedder_seeds = 5;
  int sweep_mn_seeds = 3;
  int sweep_holdout_classes = 2;  // trailing classes kept for one-shot eval
  int sweep_eval_episodes = 100;
  oneshot::DistanceKind sweep_distance = oneshot::DistanceKind::COSINE_DISTANCE;
  int sweep_jobs = 1;

  // [output] — default directory for artifacts when --out is omitted.
  std::string out_dir = "out";
};

// Parses config text. Throws ContractError naming the offending line or key
// on syntax errors, unknown or duplicate keys, type mismatches, and
// out-of-range values. Empty text yields the defaults above.
RunConfig parse_config(const std::string& text);

// parse_config over a file's bytes; an unreadable file is a ContractError.
RunConfig load_config(const std::string& path);

}  // namespace cli
