#include "stats/stats.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"

#include "diffcore/errors.hpp"
#include "diffcore/rng.hpp"

namespace {

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double area = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i)
    area += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return area;
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / static_cast<double>(n - 1);
  return out;
}

}  // namespace

TEST_CASE("mean and sample standard deviation") {
  auto [m1, s1] = stats::mean_std({1.0, 1.0, 1.0});
  CHECK(m1 == doctest::Approx(1.0));
  CHECK(s1 == doctest::Approx(0.0));
  auto [m2, s2] = stats::mean_std({0.0, 2.0});
  CHECK(m2 == doctest::Approx(1.0));
  CHECK(s2 == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(stats::mean_std({}), diffcore::ContractError);
  CHECK_THROWS_AS(stats::mean_std({3.0}), diffcore::ContractError);
}

TEST_CASE("pearson correlation basics and oracle value") {
  const std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};
  std::vector<double> doubled;
  for (double x : xs) doubled.push_back(2.0 * x);
  CHECK(stats::pearson(xs, doubled) == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> negated;
  for (double x : xs) negated.push_back(-x);
  CHECK(stats::pearson(xs, negated) == doctest::Approx(-1.0).epsilon(1e-12));

  // Hand-computed: cov = 1/2·... -> 0.8660254037844387
  CHECK(stats::pearson({1.0, 2.0, 3.0}, {1.0, 2.0, 2.0}) ==
        doctest::Approx(0.8660254037844387).epsilon(1e-12));

  CHECK_THROWS_AS(stats::pearson({1.0, 2.0}, {1.0, 2.0}), diffcore::ContractError);
  CHECK_THROWS_AS(stats::pearson({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), diffcore::ContractError);
  CHECK_THROWS_AS(stats::pearson({1.0, 2.0, 3.0}, {1.0, 2.0}), diffcore::ContractError);
}

TEST_CASE("pearson is invariant to increasing affine maps") {
  diffcore::Rng rng(9);
  std::vector<double> xs, ys;
  for (int i = 0; i < 25; ++i) {
    xs.push_back(rng.normal());
    ys.push_back(rng.normal() + 0.3 * xs.back());
  }
  const double base = stats::pearson(xs, ys);
  std::vector<double> mapped;
  for (double x : xs) mapped.push_back(3.7 * x - 11.0);
  CHECK(stats::pearson(mapped, ys) == doctest::Approx(base).epsilon(1e-12));
  mapped.clear();
  for (double y : ys) mapped.push_back(0.02 * y + 5.0);
  CHECK(stats::pearson(xs, mapped) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("correlation t-test matches precomputed values") {
  const auto a = stats::corr_t_test(0.15, 15);
  CHECK(a.rho == doctest::Approx(0.15));
  CHECK(a.df == 13);
  CHECK(a.t == doctest::Approx(0.5470216966198781).epsilon(1e-12));
  CHECK(a.p_one_tail == doctest::Approx(0.2968151013712941).epsilon(1e-10));

  const auto b = stats::corr_t_test(-0.06, 15);
  CHECK(b.t == doctest::Approx(-0.21672353060844546).epsilon(1e-12));
  CHECK(b.p_one_tail == doctest::Approx(0.41589390084225825).epsilon(1e-10));

  const auto c = stats::corr_t_test(0.0, 8);
  CHECK(c.t == 0.0);
  CHECK(c.p_one_tail == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(stats::corr_t_test(1.0, 15), diffcore::ContractError);
  CHECK_THROWS_AS(stats::corr_t_test(0.5, 2), diffcore::ContractError);
}

TEST_CASE("paired t-test handles ties, zero means, and degenerate input") {
  const auto same = stats::paired_t_test({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0});
  CHECK(same.t == 0.0);
  CHECK(same.p_two_tail == doctest::Approx(1.0));

  const auto zero_mean = stats::paired_t_test({1.0, 2.0, 3.0}, {3.0, 2.0, 1.0});
  CHECK(zero_mean.t == doctest::Approx(0.0));
  CHECK(zero_mean.p_two_tail == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(zero_mean.df == 2);

  CHECK_THROWS_AS(stats::paired_t_test({1.0, 2.0, 3.0}, {0.0, 1.0, 2.0}),
                  diffcore::NumericError);
  CHECK_THROWS_AS(stats::paired_t_test({1.0}, {2.0}), diffcore::ContractError);
  CHECK_THROWS_AS(stats::paired_t_test({1.0, 2.0}, {2.0}), diffcore::ContractError);

  // A real two-sided case against the CDF it is built from.
  const auto r = stats::paired_t_test({1.0, 2.0, 3.0, 5.0}, {0.5, 1.0, 2.5, 4.0});
  CHECK(r.p_two_tail ==
        doctest::Approx(2.0 * (1.0 - stats::student_t_cdf(std::abs(r.t), 3))).epsilon(1e-12));
}

TEST_CASE("Student-t CDF matches closed forms and precomputed points") {
  CHECK(stats::student_t_cdf(0.0, 13) == 0.5);
  CHECK(stats::student_t_cdf(1.0, 1) == doctest::Approx(0.75).epsilon(1e-10));
  CHECK(stats::student_t_cdf(0.547, 13) == doctest::Approx(0.7031776579615558).epsilon(1e-10));
  CHECK(stats::student_t_cdf(0.25, 13) == doctest::Approx(0.5967527413377458).epsilon(1e-10));
  CHECK(stats::student_t_cdf(1.5, 7) == doctest::Approx(0.911350756505015).epsilon(1e-10));
  CHECK(stats::student_t_cdf(3.0, 2) == doctest::Approx(0.9522670168666455).epsilon(1e-10));
  CHECK(stats::student_t_cdf(0.9, 40) == doctest::Approx(0.813246561322997).epsilon(1e-10));
  CHECK_THROWS_AS(stats::student_t_cdf(1.0, 0), diffcore::ContractError);
}

TEST_CASE("Student-t CDF symmetry and monotonicity over a grid") {
  for (int df : {1, 2, 5, 13, 40}) {
    double last = -1.0;
    for (double t = -6.0; t <= 6.0; t += 0.25) {
      const double up = stats::student_t_cdf(t, df);
      const double down = stats::student_t_cdf(-t, df);
      CHECK(std::abs(up + down - 1.0) < 1e-10);
      CHECK(up > last);
      last = up;
    }
  }
}

TEST_CASE("kernel density estimation") {
  SUBCASE("single value reproduces the Gaussian kernel") {
    const double v = 0.3, h = 0.2;
    const auto est = stats::kde({v}, linspace(-1.0, 1.5, 101), h);
    for (std::size_t j = 0; j < est.grid.size(); ++j) {
      const double z = (est.grid[j] - v) / h;
      const double pdf = std::exp(-0.5 * z * z) / (h * std::sqrt(2.0 * 3.141592653589793));
      CHECK(est.density[j] == doctest::Approx(pdf).epsilon(1e-12));
    }
  }
  SUBCASE("symmetric samples give a symmetric density") {
    const std::vector<double> vals = {0.2, 0.8, 0.35, 0.65, 0.5};
    const auto grid = linspace(0.0, 1.0, 201);
    const auto est = stats::kde(vals, grid);
    const std::size_t n = est.density.size();
    for (std::size_t j = 0; j < n; ++j)
      CHECK(est.density[j] == doctest::Approx(est.density[n - 1 - j]).epsilon(1e-12));
  }
  SUBCASE("density integrates to one on a wide grid") {
    diffcore::Rng rng(4);
    std::vector<double> vals;
    for (int i = 0; i < 400; ++i) vals.push_back(0.5 + 0.05 * rng.normal());
    const auto probe = stats::kde(vals, {0.5});
    const double h = probe.bandwidth;
    double lo = vals[0], hi = vals[0];
    for (double v : vals) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const auto est = stats::kde(vals, linspace(lo - 6.0 * h, hi + 6.0 * h, 2001));
    for (double d : est.density) CHECK(d >= 0.0);
    CHECK(trapezoid(est.grid, est.density) == doctest::Approx(1.0).epsilon(0.01));
  }
  SUBCASE("default bandwidth follows the n^(-1/5) rule with a floor") {
    const auto wide = stats::kde({0.0, 10.0, 20.0, 30.0}, {0.0});
    double mean = 15.0;
    double ss = 0.0;
    for (double v : {0.0, 10.0, 20.0, 30.0}) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / 3.0);
    CHECK(wide.bandwidth == doctest::Approx(1.06 * sd * std::pow(4.0, -0.2)).epsilon(1e-12));
    const auto tight = stats::kde({0.5, 0.5, 0.5}, {0.5});
    CHECK(tight.bandwidth == 0.01);  // degenerate sample hits the floor
  }
  SUBCASE("peak of a large normal sample sits near the mean") {
    diffcore::Rng rng(11);
    std::vector<double> vals;
    for (int i = 0; i < 10000; ++i) vals.push_back(rng.normal());
    const auto est = stats::kde(vals, linspace(-4.0, 4.0, 801));
    std::size_t peak = 0;
    for (std::size_t j = 1; j < est.density.size(); ++j)
      if (est.density[j] > est.density[peak]) peak = j;
    CHECK(std::abs(est.grid[peak]) < 0.1);
  }
  SUBCASE("misuse is rejected") {
    CHECK_THROWS_AS(stats::kde({}, {0.0}), diffcore::ContractError);
    CHECK_THROWS_AS(stats::kde({1.0}, {1.0, 0.0}), diffcore::ContractError);
    CHECK_THROWS_AS(stats::kde({1.0}, {0.0}, 0.0), diffcore::ContractError);
  }
}
