#ifndef GCM_INFERENCE_HPP
#define GCM_INFERENCE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gcm/types.hpp"

namespace gcm {

// Standard normal CDF and survival function via erfc, accurate into the far
// tail where the thresholds live.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// Max-statistic test of the global null "every mean-curve coefficient is
// zero". The maximum of the squared studentized statistics, recentred by
// 2 log p - log log p, follows a Gumbel law in the limit; the cutoff q_alpha
// is that law's upper-alpha quantile.
struct GlobalTestReport {
  double statistic = 0.0;  // max of squared statistics
  double threshold = 0.0;  // 2 log p - log log p + q_alpha
  double q_alpha = 0.0;
  long p_tilde = 0;  // number of tested hypotheses
  bool reject = false;
  // Derived from the same limit law; approximate by construction.
  double approx_p_value = 1.0;
};

inline GlobalTestReport global_test(const Eigen::MatrixXd& statistics, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ValidationError("global_test: alpha must lie in (0, 1)");
  const long p_tilde = static_cast<long>(statistics.size());
  if (static_cast<double>(p_tilde) <= std::exp(1.0))
    throw DimensionError("global_test: needs more than e hypotheses, got " +
                         std::to_string(p_tilde));

  GlobalTestReport report;
  report.p_tilde = p_tilde;
  report.statistic = statistics.array().square().maxCoeff();
  report.q_alpha = -std::log(3.14159265358979323846) - 2.0 * std::log(-std::log1p(-alpha));
  const double lp = std::log(static_cast<double>(p_tilde));
  report.threshold = 2.0 * lp - std::log(lp) + report.q_alpha;
  report.reject = report.statistic >= report.threshold;
  const double phi = report.statistic - 2.0 * lp + std::log(lp);
  report.approx_p_value =
      -std::expm1(-std::exp(-phi / 2.0) / std::sqrt(3.14159265358979323846));
  return report;
}

// Thresholding result for the per-coefficient tests. tau_hat is the smallest
// threshold whose estimated false discovery proportion stays below the target
// level; when no threshold in [0, t_cap] qualifies, the conservative fallback
// sqrt(2 log p) is used.
struct MultipleTestReport {
  double tau_hat = 0.0;
  double t_cap = 0.0;  // sqrt(2 log p - 2 log log p)
  bool fallback_used = false;
  std::vector<std::pair<int, int>> rejections;        // (region, coefficient)
  std::vector<std::pair<double, double>> fdp_curve;   // (tau, estimated FDP)
  long p_tilde = 0;
  double alpha = 0.0;
};

// Estimated FDP at threshold tau: the expected null exceedances
// 2(1 - Phi(tau)) p over the rejection count at tau. The search runs over the
// observed |J| breakpoints (plus zero); between breakpoints the estimate only
// falls, so its infimum over the continuum is attained at a breakpoint when
// the rejection count is evaluated with the same >= rule used for rejecting.
inline MultipleTestReport multiple_test(const Eigen::MatrixXd& statistics, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ValidationError("multiple_test: alpha must lie in (0, 1)");
  const long p_tilde = static_cast<long>(statistics.size());
  if (static_cast<double>(p_tilde) <= std::exp(1.0))
    throw DimensionError("multiple_test: needs more than e hypotheses, got " +
                         std::to_string(p_tilde));

  MultipleTestReport report;
  report.p_tilde = p_tilde;
  report.alpha = alpha;
  const double lp = std::log(static_cast<double>(p_tilde));
  report.t_cap = std::sqrt(2.0 * lp - 2.0 * std::log(lp));

  std::vector<double> magnitudes;
  magnitudes.reserve(static_cast<std::size_t>(p_tilde));
  for (long k = 0; k < p_tilde; ++k) magnitudes.push_back(std::abs(statistics(k)));
  std::sort(magnitudes.begin(), magnitudes.end());

  auto count_at_least = [&](double tau) {
    return static_cast<long>(magnitudes.end() -
                             std::lower_bound(magnitudes.begin(), magnitudes.end(), tau));
  };
  auto fdp_at = [&](double tau) {
    const long rejected = count_at_least(tau);
    return 2.0 * normal_sf(tau) * static_cast<double>(p_tilde) /
           static_cast<double>(std::max<long>(rejected, 1));
  };

  std::vector<double> candidates;
  candidates.push_back(0.0);
  for (double value : magnitudes)
    if (value <= report.t_cap && (candidates.empty() || value != candidates.back()))
      candidates.push_back(value);

  bool found = false;
  for (double tau : candidates) {
    const double fdp = fdp_at(tau);
    report.fdp_curve.emplace_back(tau, fdp);
    if (!found && fdp <= alpha) {
      report.tau_hat = tau;
      found = true;
    }
  }
  if (!found) {
    report.fallback_used = true;
    report.tau_hat = std::sqrt(2.0 * lp);
  }

  for (int r = 0; r < statistics.rows(); ++r)
    for (int j = 0; j < statistics.cols(); ++j)
      if (std::abs(statistics(r, j)) >= report.tau_hat) report.rejections.emplace_back(r, j);
  return report;
}

}  // namespace gcm

#endif  // GCM_INFERENCE_HPP
