#include "bias/bias.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <vector>

#include "doctest.h"

#include "diffcore/errors.hpp"
#include "diffcore/rng.hpp"
#include "embedder/embedder.hpp"
#include "matchnet/matchnet.hpp"
#include "oneshot/oneshot.hpp"
#include "stimgen/stimgen.hpp"

namespace {

const stimgen::LabeledDataset& small_world() {
  static const stimgen::LabeledDataset ds =
      stimgen::generate_dataset(stimgen::DatasetMode::BY_SHAPE, 4, 20, 90, 32);
  return ds;
}

const embedder::EmbedderCheckpoint& small_base() {
  static const embedder::EmbedderCheckpoint ckpt = [] {
    embedder::EmbedderConfig cfg;
    cfg.steps = 40;
    cfg.batch_size = 16;
    cfg.checkpoint_interval = 20;
    cfg.seed = 77;
    auto ckpts = embedder::train_embedder(small_world(), cfg);
    return std::move(ckpts.back());
  }();
  return ckpt;
}

const std::vector<stimgen::ProbeTriple>& ten_triples() {
  static const std::vector<stimgen::ProbeTriple> triples = stimgen::make_probe_triples(10, 5);
  return triples;
}

// A probe triple whose images are irrelevant because the scorer under test
// ignores them.
stimgen::ProbeTriple dummy_triple(int id) {
  auto triples = stimgen::make_probe_triples(1, 1);
  triples[0].triple_id = id;
  return triples[0];
}

bias::PairScorer fixed_scorer(double shape_score, double color_score) {
  return [shape_score, color_score](const stimgen::Stimulus&, const stimgen::Stimulus&,
                                    const stimgen::Stimulus&) -> std::array<double, 2> {
    return {shape_score, color_score};
  };
}

}  // namespace

TEST_CASE("probe outcomes follow the preference scores") {
  using bias::Choice;
  SUBCASE("nearest-neighbour geometry") {
    // probe (1,0); shape match (0.99,0); color match (0,1): shape wins under
    // both distances.
    const std::vector<double> p = {1.0, 0.0}, s = {0.99, 0.0}, c = {0.0, 1.0};
    for (auto kind : {oneshot::DistanceKind::EUCLIDEAN, oneshot::DistanceKind::COSINE_DISTANCE}) {
      const auto scorer = fixed_scorer(-oneshot::distance(p, s, kind),
                                       -oneshot::distance(p, c, kind));
      const auto out = bias::probe_once(scorer, dummy_triple(0));
      CHECK(out.chosen == Choice::SHAPE_MATCH);
      CHECK(out.margin > 0.0);
    }
  }
  SUBCASE("color preference flips the outcome") {
    const auto out = bias::probe_once(fixed_scorer(0.2, 0.9), dummy_triple(3));
    CHECK(out.chosen == Choice::COLOR_MATCH);
    CHECK(out.margin == doctest::Approx(0.7));
    CHECK(out.triple_id == 3);
  }
  SUBCASE("exact ties go to the shape match with margin zero") {
    const auto out = bias::probe_once(fixed_scorer(0.5, 0.5), dummy_triple(7));
    CHECK(out.chosen == Choice::SHAPE_MATCH);
    CHECK(out.margin == 0.0);
  }
  SUBCASE("numeric failures name the triple") {
    const bias::PairScorer bad = [](const stimgen::Stimulus&, const stimgen::Stimulus&,
                                    const stimgen::Stimulus&) -> std::array<double, 2> {
      throw diffcore::NumericError("zero-norm embedding");
    };
    CHECK_THROWS_WITH_AS(bias::probe_once(bad, dummy_triple(42)),
                         doctest::Contains("triple 42"), diffcore::NumericError);
  }
}

TEST_CASE("four-triple nearest-neighbour oracle") {
  // Hand-built embeddings per triple id; outcomes must match a brute-force
  // distance comparison done independently.
  diffcore::Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<std::array<std::vector<double>, 3>> emb(4);
    for (auto& e : emb)
      for (auto& v : e) {
        v.resize(6);
        for (auto& x : v) x = rng.normal();
      }
    for (auto kind : {oneshot::DistanceKind::EUCLIDEAN, oneshot::DistanceKind::COSINE_DISTANCE}) {
      std::vector<bias::ProbeOutcome> outcomes;
      for (int id = 0; id < 4; ++id) {
        const auto& [p, s, c] = emb[static_cast<std::size_t>(id)];
        const auto scorer =
            fixed_scorer(-oneshot::distance(p, s, kind), -oneshot::distance(p, c, kind));
        outcomes.push_back(bias::probe_once(scorer, dummy_triple(id)));
        // Brute force: pick the smaller distance directly.
        const bool shape_wins =
            oneshot::distance(p, s, kind) <= oneshot::distance(p, c, kind);
        CHECK((outcomes.back().chosen == bias::Choice::SHAPE_MATCH) == shape_wins);
      }
      const double b = bias::measure_bias(outcomes);
      long shape_count = 0;
      for (const auto& o : outcomes)
        if (o.chosen == bias::Choice::SHAPE_MATCH) ++shape_count;
      CHECK(b == doctest::Approx(static_cast<double>(shape_count) / 4.0));
    }
  }
}

TEST_CASE("bias measurement is a plain proportion") {
  using bias::Choice;
  using bias::ProbeOutcome;
  auto o = [](Choice c) { return ProbeOutcome{0, c, 0.1}; };
  CHECK(bias::measure_bias({o(Choice::SHAPE_MATCH), o(Choice::SHAPE_MATCH),
                            o(Choice::COLOR_MATCH), o(Choice::SHAPE_MATCH)}) ==
        doctest::Approx(0.75));
  CHECK(bias::measure_bias({o(Choice::COLOR_MATCH), o(Choice::COLOR_MATCH)}) == 0.0);
  CHECK_THROWS_AS(bias::measure_bias({}), diffcore::ContractError);

  diffcore::Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ProbeOutcome> outcomes;
    long shape = 0;
    const int n = 1 + rng.uniform_int(40);
    for (int i = 0; i < n; ++i) {
      const bool s = rng.uniform() < 0.5;
      shape += s ? 1 : 0;
      outcomes.push_back(o(s ? Choice::SHAPE_MATCH : Choice::COLOR_MATCH));
    }
    CHECK(bias::measure_bias(outcomes) ==
          doctest::Approx(static_cast<double>(shape) / n).epsilon(1e-15));
  }
}

TEST_CASE("nearest-neighbour probing is invariant to support order") {
  const auto scorer = bias::ib_scorer(small_base(), oneshot::DistanceKind::COSINE_DISTANCE);
  for (const auto& t : ten_triples()) {
    const auto fwd = scorer(t.probe, t.shape_match, t.color_match);
    const auto rev = scorer(t.probe, t.color_match, t.shape_match);
    CHECK(fwd[0] == rev[1]);
    CHECK(fwd[1] == rev[0]);
  }
}

TEST_CASE("relabeling the support complements the measured bias") {
  for (auto kind : {oneshot::DistanceKind::EUCLIDEAN, oneshot::DistanceKind::COSINE_DISTANCE}) {
    const auto scorer = bias::ib_scorer(small_base(), kind);
    const auto outcomes = bias::probe_all(scorer, ten_triples());
    for (const auto& o : outcomes) CHECK(o.margin > 0.0);  // tie-free, so exact

    const bias::PairScorer swapped = [&](const stimgen::Stimulus& p, const stimgen::Stimulus& a,
                                         const stimgen::Stimulus& b) {
      const auto s = scorer(p, a, b);
      return std::array<double, 2>{s[1], s[0]};
    };
    const double b = bias::measure_bias(outcomes);
    const double b_swapped = bias::measure_bias(bias::probe_all(swapped, ten_triples()));
    CHECK(b + b_swapped == 1.0);
  }
}

TEST_CASE("zero-weight matching classifier reproduces the cosine nearest neighbour") {
  auto base = std::make_shared<const embedder::EmbedderCheckpoint>(small_base());
  auto zero_mn = matchnet::init_matchnet(base, 2, 0);
  for (auto& [name, tensor] : zero_mn.params)
    std::fill(tensor.data.begin(), tensor.data.end(), 0.0);

  const auto ib = bias::probe_all(
      bias::ib_scorer(small_base(), oneshot::DistanceKind::COSINE_DISTANCE), ten_triples());
  const auto mn = bias::probe_all(bias::mn_scorer(zero_mn), ten_triples());
  REQUIRE(ib.size() == mn.size());
  for (std::size_t i = 0; i < ib.size(); ++i) CHECK(ib[i].chosen == mn[i].chosen);
  CHECK(bias::measure_bias(ib) == bias::measure_bias(mn));
}

TEST_CASE("a small sweep is deterministic and correctly shaped") {
  const auto dir = std::filesystem::temp_directory_path() / "biaslab_test_sweep";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  bias::SweepConfig cfg;
  cfg.n_embedder_seeds = 2;
  cfg.mn_seeds_per_embedder = 1;
  cfg.embedder.steps = 20;
  cfg.embedder.checkpoint_interval = 10;
  cfg.embedder.batch_size = 16;
  cfg.embedder.seed = 50;
  cfg.mn.episodes = 20;
  cfg.mn.checkpoint_interval = 10;
  cfg.world_mode = stimgen::DatasetMode::BY_SHAPE;
  cfg.world_classes = 4;
  cfg.world_per_class = 20;
  cfg.world_seed = 90;
  cfg.mn_holdout_classes = 2;
  cfg.mn_eval_episodes = 5;
  cfg.probe_datasets.push_back({"triples", ten_triples()});
  cfg.jobs = 2;

  const auto path_a = (dir / "records_a.csv").string();
  const auto records = bias::run_sweep(cfg, path_a);

  // 2 seeds x 3 checkpoints x 1 dataset for each model kind.
  CHECK(records.size() == 12);
  long ib_count = 0, mn_count = 0;
  for (const auto& r : records) {
    CHECK(r.bias >= 0.0);
    CHECK(r.bias <= 1.0);
    CHECK(r.accuracy >= 0.0);
    CHECK(r.accuracy <= 1.0);
    CHECK(r.dataset == "triples");
    if (r.model_kind == corpus::ModelKind::IB) {
      ++ib_count;
      CHECK((r.seed == 50 || r.seed == 51));
    } else {
      ++mn_count;
      CHECK((r.seed == 5000 || r.seed == 5100));
    }
  }
  CHECK(ib_count == 6);
  CHECK(mn_count == 6);

  // The flushed file holds exactly the returned records.
  const auto from_disk = corpus::records_read(path_a);
  REQUIRE(from_disk.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(from_disk[i].seed == records[i].seed);
    CHECK(from_disk[i].step == records[i].step);
    CHECK(from_disk[i].bias == records[i].bias);
    CHECK(from_disk[i].accuracy == records[i].accuracy);
  }

  // Rerunning with one job produces byte-identical output.
  cfg.jobs = 1;
  const auto path_b = (dir / "records_b.csv").string();
  bias::run_sweep(cfg, path_b);
  std::ifstream fa(path_a, std::ios::binary), fb(path_b, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
  const std::string bytes_b((std::istreambuf_iterator<char>(fb)), {});
  CHECK(bytes_a == bytes_b);
  CHECK(!bytes_a.empty());

  // Pairing: one pair per matching classifier, lineage respected.
  const auto pairs = bias::pair_mn_ib(records);
  REQUIRE(pairs.size() == 2);
  for (const auto& [ib_b, mn_b] : pairs) {
    CHECK(ib_b >= 0.0);
    CHECK(ib_b <= 1.0);
    CHECK(mn_b >= 0.0);
    CHECK(mn_b <= 1.0);
  }
}

TEST_CASE("sweep configuration is validated") {
  bias::SweepConfig cfg;
  cfg.probe_datasets.push_back({"t", ten_triples()});
  cfg.n_embedder_seeds = 0;
  CHECK_THROWS_AS(bias::run_sweep(cfg), diffcore::ContractError);
  cfg.n_embedder_seeds = 1;
  cfg.mn_seeds_per_embedder = 100;
  CHECK_THROWS_AS(bias::run_sweep(cfg), diffcore::ContractError);
  cfg.mn_seeds_per_embedder = 1;
  cfg.probe_datasets.clear();
  CHECK_THROWS_AS(bias::run_sweep(cfg), diffcore::ContractError);
  cfg.probe_datasets.push_back({"t", ten_triples()});
  cfg.probe_datasets.push_back({"t", ten_triples()});
  CHECK_THROWS_AS(bias::run_sweep(cfg), diffcore::ContractError);
  cfg.probe_datasets.pop_back();
  cfg.mn_holdout_classes = 1;  // cannot host a 2-way evaluation episode
  CHECK_THROWS_AS(bias::run_sweep(cfg), diffcore::ContractError);
}

TEST_CASE("pairing requires both model kinds and matching lineage") {
  using corpus::BiasRecord;
  using corpus::ModelKind;
  std::vector<BiasRecord> records = {
      {ModelKind::IB, 0, 0, "t", 0.5, 0.3},   {ModelKind::IB, 0, 100, "t", 0.9, 0.8},
      {ModelKind::IB, 1, 100, "t", 0.7, 0.9}, {ModelKind::MN, 1, 50, "t", 0.85, 0.7},
      {ModelKind::MN, 1, 25, "t", 0.2, 0.6},  {ModelKind::MN, 102, 50, "t", 0.65, 0.7},
  };
  const auto pairs = bias::pair_mn_ib(records);
  REQUIRE(pairs.size() == 2);
  // MN seed 1 -> embedder 0 at its final step (bias 0.9, not 0.5).
  CHECK(pairs[0].first == doctest::Approx(0.9));
  CHECK(pairs[0].second == doctest::Approx(0.85));  // final MN step 50, not 25
  // MN seed 102 -> embedder 1.
  CHECK(pairs[1].first == doctest::Approx(0.7));
  CHECK(pairs[1].second == doctest::Approx(0.65));

  CHECK_THROWS_AS(bias::pair_mn_ib({records[0]}), diffcore::ContractError);
  std::vector<BiasRecord> orphan = {
      {ModelKind::IB, 0, 0, "t", 0.5, 0.3},
      {ModelKind::MN, 900, 50, "t", 0.8, 0.7},  // embedder seed 9 never ran
  };
  CHECK_THROWS_WITH_AS(bias::pair_mn_ib(orphan), doctest::Contains("900"),
                       diffcore::ContractError);
}
