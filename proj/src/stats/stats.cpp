#include "stats/stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "diffcore/errors.hpp"

namespace stats {

using diffcore::ContractError;
using diffcore::NumericError;

namespace {

// Continued fraction for the regularized incomplete beta function
// (modified Lentz method).
double beta_cf(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kTol = 1e-12;
  constexpr int kMaxIter = 300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kTol) return h;
  }
  throw NumericError("incomplete beta: continued fraction did not converge");
}

// I_x(a, b), with the symmetry split keeping the continued fraction in its
// fast-converging region.
double reg_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double sample_std(const std::vector<double>& xs, double mean) {
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (static_cast<double>(xs.size()) - 1.0));
}

}  // namespace

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.size() < 2)
    throw ContractError("mean_std: need at least 2 values, got " + std::to_string(xs.size()));
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  return {mean, sample_std(xs, mean)};
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw ContractError("pearson: length mismatch");
  const std::size_t n = xs.size();
  if (n < 3) throw ContractError("pearson: need at least 3 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw ContractError("pearson: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

CorrTestResult corr_t_test(double rho, int n) {
  if (n < 3) throw ContractError("corr_t_test: need n >= 3");
  if (!(std::abs(rho) < 1.0))
    throw ContractError("corr_t_test: |rho| must be strictly below 1");
  CorrTestResult r;
  r.rho = rho;
  r.df = n - 2;
  r.t = rho * std::sqrt(static_cast<double>(n - 2)) / std::sqrt(1.0 - rho * rho);
  r.p_one_tail = rho >= 0.0 ? 1.0 - student_t_cdf(r.t, r.df) : student_t_cdf(r.t, r.df);
  return r;
}

PairedTResult paired_t_test(const std::vector<double>& as, const std::vector<double>& bs) {
  if (as.size() != bs.size()) throw ContractError("paired_t_test: length mismatch");
  const std::size_t n = as.size();
  if (n < 2) throw ContractError("paired_t_test: need at least 2 pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = as[i] - bs[i];
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(n);
  const double sd = sample_std(d, mean);

  PairedTResult r;
  r.df = static_cast<int>(n) - 1;
  if (sd == 0.0) {
    if (mean != 0.0)
      throw NumericError("paired_t_test: constant nonzero difference (zero variance)");
    r.t = 0.0;
    r.p_two_tail = 1.0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p_two_tail = 2.0 * (1.0 - student_t_cdf(std::abs(r.t), r.df));
  return r;
}

double student_t_cdf(double t, int df) {
  if (df < 1) throw ContractError("student_t_cdf: df must be >= 1");
  if (t == 0.0) return 0.5;
  const double v = static_cast<double>(df);
  const double x = v / (v + t * t);
  const double half_tail = 0.5 * reg_incomplete_beta(v / 2.0, 0.5, x);
  return t > 0.0 ? 1.0 - half_tail : half_tail;
}

DensityEstimate kde(const std::vector<double>& values, const std::vector<double>& grid,
                    std::optional<double> bandwidth) {
  if (values.empty()) throw ContractError("kde: empty sample");
  for (std::size_t j = 1; j < grid.size(); ++j)
    if (grid[j] < grid[j - 1]) throw ContractError("kde: grid must be sorted ascending");

  double h;
  if (bandwidth) {
    if (*bandwidth <= 0.0) throw ContractError("kde: bandwidth must be positive");
    h = *bandwidth;
  } else {
    double sd = 0.0;
    if (values.size() >= 2) {
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(values.size());
      sd = sample_std(values, mean);
    }
    h = std::max(0.01, 1.06 * sd * std::pow(static_cast<double>(values.size()), -0.2));
  }

  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  DensityEstimate est;
  est.grid = grid;
  est.bandwidth = h;
  est.density.resize(grid.size());
  const double scale = kInvSqrt2Pi / (h * static_cast<double>(values.size()));
  for (std::size_t j = 0; j < grid.size(); ++j) {
    double sum = 0.0;
    for (double v : values) {
      const double z = (grid[j] - v) / h;
      sum += std::exp(-0.5 * z * z);
    }
    est.density[j] = scale * sum;
  }
  return est;
}

}  // namespace stats
