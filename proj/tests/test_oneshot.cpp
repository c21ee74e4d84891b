#include <doctest.h>

#include <cmath>

#include "diffcore/errors.hpp"
#include "diffcore/rng.hpp"
#include "oneshot/oneshot.hpp"

using namespace oneshot;
using diffcore::ContractError;
using diffcore::NumericError;
using diffcore::Rng;

namespace {

SupportSet two_axis_support() {
  SupportSet s;
  s.items.push_back({{1.0, 0.0}, {1.0, 0.0}});  // class 0 at x-axis
  s.items.push_back({{0.0, 1.0}, {0.0, 1.0}});  // class 1 at y-axis
  return s;
}

std::vector<double> random_vec(Rng& rng, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

TEST_CASE("nearest neighbour picks the closer support item") {
  const SupportSet s = two_axis_support();
  CHECK(nn_classify({0.9, 0.1}, s, DistanceKind::EUCLIDEAN).label == 0);
  CHECK(nn_classify({0.9, 0.1}, s, DistanceKind::COSINE_DISTANCE).label == 0);
  CHECK(nn_classify({0.1, 0.9}, s, DistanceKind::EUCLIDEAN).label == 1);
}

TEST_CASE("equidistant probe takes the lowest-index label") {
  const SupportSet s = two_axis_support();
  const NnResult r = nn_classify({0.5, 0.5}, s, DistanceKind::EUCLIDEAN);
  CHECK(r.label == 0);
  CHECK(r.index == 0);
  CHECK(nn_classify({0.5, 0.5}, s, DistanceKind::COSINE_DISTANCE).label == 0);
}

TEST_CASE("nn_classify rejects misuse; cosine rejects zero norms") {
  SupportSet empty;
  CHECK_THROWS_AS(nn_classify({1.0}, empty, DistanceKind::EUCLIDEAN), ContractError);

  SupportSet bad = two_axis_support();
  bad.items[1].embedding = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(nn_classify({1.0, 0.0}, bad, DistanceKind::EUCLIDEAN), ContractError);

  SupportSet zero = two_axis_support();
  zero.items[0].embedding = {0.0, 0.0};
  CHECK_THROWS_AS(nn_classify({1.0, 0.0}, zero, DistanceKind::COSINE_DISTANCE), NumericError);
}

TEST_CASE("nn_classify agrees with an independent brute-force scan") {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    Rng tr = rng.fork(trial);
    const int k = 2 + tr.uniform_int(6);
    const int dim = 2 + tr.uniform_int(5);
    SupportSet s;
    for (int i = 0; i < k; ++i) {
      std::vector<double> onehot(static_cast<std::size_t>(k), 0.0);
      onehot[static_cast<std::size_t>(i)] = 1.0;
      s.items.push_back({random_vec(tr, dim), onehot});
    }
    const auto probe = random_vec(tr, dim);

    // oracle: recompute distances directly
    int oracle = 0;
    double best = 1e300;
    for (int i = 0; i < k; ++i) {
      double d = 0.0;
      for (int j = 0; j < dim; ++j) {
        const double diff = probe[static_cast<std::size_t>(j)] -
                            s.items[static_cast<std::size_t>(i)].embedding[static_cast<std::size_t>(j)];
        d += diff * diff;
      }
      d = std::sqrt(d);
      if (d < best) {
        best = d;
        oracle = i;
      }
    }
    CHECK(nn_classify(probe, s, DistanceKind::EUCLIDEAN).index == oracle);
  }
}

TEST_CASE("euclidean nn is invariant to a common rotation of all embeddings") {
  Rng rng(79);
  for (int trial = 0; trial < 50; ++trial) {
    Rng tr = rng.fork(trial);
    const int dim = 4;
    SupportSet s;
    for (int i = 0; i < 5; ++i) {
      std::vector<double> onehot(5, 0.0);
      onehot[static_cast<std::size_t>(i)] = 1.0;
      s.items.push_back({random_vec(tr, dim), onehot});
    }
    const auto probe = random_vec(tr, dim);
    const NnResult before = nn_classify(probe, s, DistanceKind::EUCLIDEAN);

    // compose random Givens rotations: orthogonal by construction
    auto rotate = [&](std::vector<double> v, int a, int b, double c, double sn) {
      const double va = v[static_cast<std::size_t>(a)], vb = v[static_cast<std::size_t>(b)];
      v[static_cast<std::size_t>(a)] = c * va - sn * vb;
      v[static_cast<std::size_t>(b)] = sn * va + c * vb;
      return v;
    };
    auto probe_r = probe;
    auto s_r = s;
    for (int g = 0; g < 6; ++g) {
      const int a = tr.uniform_int(dim);
      int b = tr.uniform_int(dim - 1);
      if (b >= a) ++b;
      const double theta = tr.uniform(0.0, 6.28318);
      const double c = std::cos(theta), sn = std::sin(theta);
      probe_r = rotate(probe_r, a, b, c, sn);
      for (auto& item : s_r.items) item.embedding = rotate(item.embedding, a, b, c, sn);
    }
    CHECK(nn_classify(probe_r, s_r, DistanceKind::EUCLIDEAN).index == before.index);
  }
}

TEST_CASE("one_shot_label argmax and tie rule") {
  CHECK(one_shot_label({0.7, 0.3}) == 0);
  CHECK(one_shot_label({0.5, 0.5}) == 0);
  CHECK(one_shot_label({0.2, 0.3, 0.5}) == 2);
  CHECK_THROWS_AS(one_shot_label({0.7, 0.7}), ContractError);
  CHECK_THROWS_AS(one_shot_label({}), ContractError);
}

TEST_CASE("one_shot_label is invariant to monotone rescaling of the distribution") {
  Rng rng(81);
  for (int trial = 0; trial < 100; ++trial) {
    Rng tr = rng.fork(trial);
    std::vector<double> p(4);
    double sum = 0.0;
    for (double& v : p) {
      v = tr.uniform(0.01, 1.0);
      sum += v;
    }
    for (double& v : p) v /= sum;

    auto transform = [&](double (*f)(double)) {
      std::vector<double> q(p.size());
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        q[i] = f(p[i]);
        s += q[i];
      }
      for (double& v : q) v /= s;
      return q;
    };
    const int base = one_shot_label(p);
    CHECK(one_shot_label(transform([](double x) { return x * x; })) == base);
    CHECK(one_shot_label(transform([](double x) { return std::sqrt(x); })) == base);
    CHECK(one_shot_label(transform([](double x) { return std::exp(x); })) == base);
  }
}

TEST_CASE("episode accuracy over perfect and constant classifiers") {
  // two 2-way episodes, two probes each
  std::vector<EvalEpisode> eps;
  for (int e = 0; e < 2; ++e) {
    EvalEpisode ep;
    ep.support.items.push_back({{1.0, 0.0}, {1.0, 0.0}});
    ep.support.items.push_back({{0.0, 1.0}, {0.0, 1.0}});
    ep.probe_embeddings = {{1.0, 0.1}, {0.1, 1.0}};
    ep.probe_labels = {0, 1};
    eps.push_back(ep);
  }

  const Classifier perfect = [](const std::vector<double>& probe, const SupportSet& s) {
    const int label = nn_classify(probe, s, DistanceKind::EUCLIDEAN).label;
    std::vector<double> out(s.items.size(), 0.0);
    out[static_cast<std::size_t>(label)] = 1.0;
    return out;
  };
  CHECK(episode_accuracy(perfect, eps) == 1.0);

  const Classifier always_zero = [](const std::vector<double>&, const SupportSet& s) {
    std::vector<double> out(s.items.size(), 0.0);
    out[0] = 1.0;
    return out;
  };
  // truth is balanced (half the probes are class 0) -> exactly 0.5
  CHECK(episode_accuracy(always_zero, eps) == 0.5);

  CHECK_THROWS_AS(episode_accuracy(perfect, {}), ContractError);

  EvalEpisode dup;
  dup.support.items.push_back({{1.0, 0.0}, {1.0, 0.0}});
  dup.support.items.push_back({{0.0, 1.0}, {1.0, 0.0}});  // class 0 twice
  dup.probe_embeddings = {{1.0, 0.0}};
  dup.probe_labels = {0};
  CHECK_THROWS_AS(episode_accuracy(perfect, {dup}), ContractError);
}

TEST_CASE("onehot_index validation") {
  CHECK(onehot_index({0.0, 1.0, 0.0}) == 1);
  CHECK_THROWS_AS(onehot_index({0.0, 0.0}), ContractError);
  CHECK_THROWS_AS(onehot_index({1.0, 1.0}), ContractError);
  CHECK_THROWS_AS(onehot_index({0.5, 0.5}), ContractError);
}
