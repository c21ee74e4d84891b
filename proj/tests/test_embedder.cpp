#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "diffcore/errors.hpp"
#include "embedder/embedder.hpp"
#include "stimgen/stimgen.hpp"

using namespace embedder;
using diffcore::ContractError;

namespace {

// Small world + short budget: enough to show learning without slowing the
// unit suite down. The full-budget claims live in the acceptance suite.
EmbedderConfig tiny_config() {
  EmbedderConfig c;
  c.steps = 60;
  c.batch_size = 16;
  c.checkpoint_interval = 30;
  c.seed = 5;
  return c;
}

const stimgen::LabeledDataset& tiny_world() {
  static const stimgen::LabeledDataset ds =
      stimgen::generate_dataset(stimgen::DatasetMode::BY_SHAPE, 4, 25, 17);
  return ds;
}

}  // namespace

TEST_CASE("training produces checkpoints at step 0 and every interval") {
  const auto ckpts = train_embedder(tiny_world(), tiny_config());
  REQUIRE(ckpts.size() == 3);
  CHECK(ckpts[0].step == 0);
  CHECK(ckpts[1].step == 30);
  CHECK(ckpts[2].step == 60);
  for (const auto& c : ckpts) {
    CHECK(c.n_classes == 4);
    CHECK(c.feature_dim == 64);
    CHECK(c.train_accuracy >= 0.0);
    CHECK(c.train_accuracy <= 1.0);
  }
}

TEST_CASE("training is bit-deterministic in (dataset, config)") {
  const auto a = train_embedder(tiny_world(), tiny_config());
  const auto b = train_embedder(tiny_world(), tiny_config());
  REQUIRE(a.size() == b.size());
  for (const auto& [name, t] : a.back().params) {
    CHECK(t.data == b.back().params.at(name).data);
  }
  CHECK(a.back().train_accuracy == b.back().train_accuracy);
}

TEST_CASE("loss falls and accuracy rises over a short budget") {
  const auto ckpts = train_embedder(tiny_world(), tiny_config());
  CHECK(ckpts.back().train_loss < ckpts.front().train_loss);
  CHECK(ckpts.back().train_accuracy > ckpts.front().train_accuracy);
}

TEST_CASE("different seeds give different parameters") {
  EmbedderConfig c2 = tiny_config();
  c2.seed = 6;
  const auto a = train_embedder(tiny_world(), tiny_config());
  const auto b = train_embedder(tiny_world(), c2);
  CHECK(a.back().params.at("conv1.w").data != b.back().params.at("conv1.w").data);
}

TEST_CASE("embed: 64-dim, deterministic, finite on an all-zero image") {
  const auto ckpts = train_embedder(tiny_world(), tiny_config());
  const auto& ckpt = ckpts.back();

  const stimgen::Stimulus s = stimgen::render_stimulus({0, 0, 0, 9}, 32);
  const auto f1 = embed(ckpt, s);
  const auto f2 = embed(ckpt, s);
  CHECK(f1.size() == 64);
  CHECK(f1 == f2);

  stimgen::Stimulus zero;
  zero.width = 32;
  zero.height = 32;
  zero.image.assign(32 * 32 * 3, 0);
  for (double v : embed(ckpt, zero)) CHECK(std::isfinite(v));

  stimgen::Stimulus wrong;
  wrong.width = 16;
  wrong.height = 16;
  wrong.image.assign(16 * 16 * 3, 0);
  CHECK_THROWS_AS(embed(ckpt, wrong), ContractError);
}

TEST_CASE("features feed the softmax head: head weights reproduce logits exactly") {
  const auto ckpts = train_embedder(tiny_world(), tiny_config());
  const auto& ckpt = ckpts.back();
  const stimgen::Stimulus s = stimgen::render_stimulus({2, 3, 1, 4}, 32);
  const auto feats = embed(ckpt, s);
  const auto logits = classify_logits(ckpt, s);
  REQUIRE(logits.size() == static_cast<std::size_t>(ckpt.n_classes));

  const auto& hw = ckpt.params.at("head.w");
  const auto& hb = ckpt.params.at("head.b");
  for (int j = 0; j < ckpt.n_classes; ++j) {
    // same accumulation order as the network: products first, bias last
    double acc = 0.0;
    for (int i = 0; i < ckpt.feature_dim; ++i) {
      acc += feats[static_cast<std::size_t>(i)] *
             hw.data[static_cast<std::size_t>(i) * ckpt.n_classes + j];
    }
    acc += hb.data[static_cast<std::size_t>(j)];
    CHECK(logits[static_cast<std::size_t>(j)] == acc);  // bit-exact
  }
}

TEST_CASE("checkpointed training accuracy equals classify_accuracy on the same slice") {
  const auto ckpts = train_embedder(tiny_world(), tiny_config());
  const auto train = stimgen::train_split(tiny_world());
  for (const auto& ckpt : ckpts) {
    CHECK(classify_accuracy(ckpt, train) == doctest::Approx(ckpt.train_accuracy).epsilon(1e-12));
  }
}

TEST_CASE("untrained model on balanced classes scores near chance") {
  EmbedderConfig c = tiny_config();
  c.steps = 1;
  c.checkpoint_interval = 1;
  const auto ckpts = train_embedder(tiny_world(), c);
  // 4 balanced classes: chance 0.25; wide band for init luck
  CHECK(ckpts[0].train_accuracy <= 0.6);
}

TEST_CASE("classify_accuracy rejects label-space and empty-set misuse") {
  const auto ckpts = train_embedder(tiny_world(), tiny_config());
  const auto other = stimgen::generate_dataset(stimgen::DatasetMode::BY_SHAPE, 5, 4, 1);
  CHECK_THROWS_AS(classify_accuracy(ckpts.back(), other), ContractError);
  stimgen::LabeledDataset empty;
  empty.n_classes = 4;
  CHECK_THROWS_AS(classify_accuracy(ckpts.back(), empty), ContractError);
}

TEST_CASE("checkpoint files round-trip through the parameter codec") {
  namespace fs = std::filesystem;
  const auto ckpts = train_embedder(tiny_world(), tiny_config());
  const auto& ckpt = ckpts.back();
  const fs::path path = fs::temp_directory_path() / "embedder_ckpt_test.spck";
  save_checkpoint(path.string(), ckpt);
  const EmbedderCheckpoint back = load_checkpoint(path.string());
  CHECK(back.step == ckpt.step);
  CHECK(back.n_classes == ckpt.n_classes);
  CHECK(back.feature_dim == ckpt.feature_dim);
  CHECK(back.train_accuracy == ckpt.train_accuracy);
  CHECK(back.train_loss == ckpt.train_loss);
  REQUIRE(back.params.size() == ckpt.params.size());
  for (const auto& [name, t] : ckpt.params) CHECK(back.params.at(name).data == t.data);

  // loaded checkpoint embeds identically
  const stimgen::Stimulus s = stimgen::render_stimulus({1, 1, 1, 1}, 32);
  CHECK(embed(back, s) == embed(ckpt, s));
  fs::remove(path);
}

TEST_CASE("config validation") {
  EmbedderConfig c = tiny_config();
  c.checkpoint_interval = 7;  // does not divide 60
  CHECK_THROWS_AS(train_embedder(tiny_world(), c), ContractError);
  c = tiny_config();
  c.steps = 0;
  CHECK_THROWS_AS(train_embedder(tiny_world(), c), ContractError);
  stimgen::LabeledDataset empty;
  empty.n_classes = 4;
  CHECK_THROWS_AS(train_embedder(empty, tiny_config()), ContractError);
}
