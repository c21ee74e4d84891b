#pragma once

#include <optional>
#include <utility>
#include <vector>

namespace stats {

// (mean, sample standard deviation with n-1 denominator). Requires n >= 2.
std::pair<double, double> mean_std(const std::vector<double>& xs);

// Pearson correlation. Requires equal lengths n >= 3 and nonzero variance
// in both arguments.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

struct CorrTestResult {
  double rho = 0.0;
  double t = 0.0;
  int df = 0;  // n - 2
  double p_one_tail = 0.5;
};

// t = rho * sqrt(n-2) / sqrt(1-rho^2). The one-tailed p follows the sign of
// rho: P(T >= t) for rho >= 0, P(T <= t) for rho < 0. Requires n >= 3 and
// |rho| < 1.
CorrTestResult corr_t_test(double rho, int n);

struct PairedTResult {
  double t = 0.0;
  int df = 0;  // n - 1
  double p_two_tail = 1.0;
};

// Paired t-test on the differences as[i] - bs[i]. Identical inputs give
// t = 0, p = 1; a constant nonzero difference is degenerate.
PairedTResult paired_t_test(const std::vector<double>& as, const std::vector<double>& bs);

// Student-t CDF via the regularized incomplete beta function. df >= 1.
double student_t_cdf(double t, int df);

struct DensityEstimate {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
};

// Gaussian kernel density estimate on a sorted grid. Default bandwidth is
// Silverman's rule 1.06 * std * n^(-1/5), floored at 0.01.
DensityEstimate kde(const std::vector<double>& values, const std::vector<double>& grid,
                    std::optional<double> bandwidth = std::nullopt);

}  // namespace stats
