#ifndef GCM_STUDY_HPP
#define GCM_STUDY_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gcm/estimation.hpp"
#include "gcm/gls.hpp"
#include "gcm/inference.hpp"
#include "gcm/parallel.hpp"
#include "gcm/rng.hpp"
#include "gcm/simulation.hpp"
#include "gcm/types.hpp"

namespace gcm {

enum class StudyKind { bias, global, fdr };

inline const char* to_string(StudyKind k) {
  switch (k) {
    case StudyKind::bias: return "bias";
    case StudyKind::global: return "global";
    default: return "fdr";
  }
}

struct StudyConfig {
  SimulationConfig sim;
  StudyKind kind = StudyKind::global;
  int n_reps = 100;
  double alpha = 0.05;
  int n_threads = 1;
};

// Monte-Carlo summary of one simulation cell. The bias entries are the mean
// and standard deviation of the pooled entrywise errors; rejection_rate is
// the empirical size (omega = 0) or power of the global test; the fdr fields
// average the per-replication false discovery proportion and true positive
// proportion of the thresholding procedure.
struct StudyReport {
  StudyConfig config;
  double cov_bias_mean = 0.0, cov_bias_sd = 0.0;
  double coef_bias_mean = 0.0, coef_bias_sd = 0.0;
  double rejection_rate = 0.0;
  double empirical_fdr = 0.0, empirical_power = 0.0;
  int failed_reps = 0;
  std::vector<std::string> failure_messages;
};

namespace detail {

struct RepOutcome {
  bool failed = false;
  std::string error;
  double cov_n = 0.0, cov_sum = 0.0, cov_sumsq = 0.0;
  double coef_n = 0.0, coef_sum = 0.0, coef_sumsq = 0.0;
  bool reject = false;
  double fdp = 0.0, tpp = 0.0;
};

// Entrywise error of the assembled per-region covariance against the truth,
// accumulated over the block-diagonal support (the only entries either
// matrix can populate).
inline void accumulate_covariance_bias(const CovarianceComponents& estimate,
                                       const CovarianceComponents& truth,
                                       const GrowthBasis& basis, RepOutcome& out) {
  const int R = static_cast<int>(truth.sigma_R.rows());
  const Eigen::Matrix2d zeta_delta = estimate.sigma_zeta - truth.sigma_zeta;
  for (std::size_t i = 0; i < basis.per_subject.size(); ++i) {
    const Eigen::MatrixXd& g = basis.per_subject[i];
    const Eigen::MatrixXd base_delta = g * zeta_delta * g.transpose();
    for (int r = 0; r < R; ++r) {
      const Eigen::MatrixXd block_delta =
          base_delta + estimate.sigma_R(r, r) * estimate.sigma_T - truth.sigma_R(r, r) * truth.sigma_T;
      out.cov_n += static_cast<double>(block_delta.size());
      out.cov_sum += block_delta.sum();
      out.cov_sumsq += block_delta.array().square().sum();
    }
  }
}

inline void finalize_moments(double n, double sum, double sumsq, double& mean, double& sd) {
  if (n <= 0.0) {
    mean = sd = 0.0;
    return;
  }
  mean = sum / n;
  const double variance = std::max(0.0, sumsq / n - mean * mean);
  sd = std::sqrt(variance);
}

}  // namespace detail

// Largest entrywise error of the assembled per-region covariance over all
// regions and subject blocks.
inline double max_covariance_error(const CovarianceComponents& estimate,
                                   const CovarianceComponents& truth, const GrowthBasis& basis) {
  const int R = static_cast<int>(truth.sigma_R.rows());
  const Eigen::Matrix2d zeta_delta = estimate.sigma_zeta - truth.sigma_zeta;
  double worst = 0.0;
  for (const auto& g : basis.per_subject) {
    const Eigen::MatrixXd base_delta = g * zeta_delta * g.transpose();
    for (int r = 0; r < R; ++r) {
      const Eigen::MatrixXd block_delta =
          base_delta + estimate.sigma_R(r, r) * estimate.sigma_T - truth.sigma_R(r, r) * truth.sigma_T;
      worst = std::max(worst, max_abs(block_delta));
    }
  }
  return worst;
}

// Runs n_reps independent replications of a simulation cell. The truth is
// drawn once from a reserved stream of the root seed; replication k always
// uses stream k, so reports are identical for any thread count and any
// scheduling of the replications.
inline StudyReport run_replication_study(const StudyConfig& config) {
  config.sim.validate();
  if (config.n_reps < 1) throw ValidationError("study: n_reps must be at least 1");
  if (config.kind != StudyKind::bias && !(config.alpha > 0.0 && config.alpha < 1.0))
    throw ValidationError("study: alpha must lie in (0, 1)");

  Rng truth_rng = Rng::substream(config.sim.seed, 0xffffffffffffffffULL);
  const GroundTruth truth = make_truth(config.sim, truth_rng);
  const auto& nonzero_mask = truth.eta_nonzero;
  const long n_nonzero = nonzero_mask.count();

  std::vector<detail::RepOutcome> outcomes(config.n_reps);
  parallel_for(static_cast<std::size_t>(config.n_reps), config.n_threads, [&](std::size_t rep) {
    detail::RepOutcome& out = outcomes[rep];
    try {
      Rng rng = Rng::substream(config.sim.seed, rep);
      const GrowthCurveDataset data = sample_dataset(config.sim, truth, rng);
      const CovarianceComponents components = estimate_all(data);
      const DesignMatrix design = build_design(data);
      const FitResult fit = gls_fit(data, design, components);

      switch (config.kind) {
        case StudyKind::bias: {
          const GrowthBasis basis = build_growth_basis(data);
          detail::accumulate_covariance_bias(components, truth.components, basis, out);
          const int eta = fit.coefficients.eta_size();
          const Eigen::MatrixXd delta =
              fit.coefficients.per_region.leftCols(eta) -
              truth.coefficients.per_region.leftCols(eta);
          out.coef_n = static_cast<double>(delta.size());
          out.coef_sum = delta.sum();
          out.coef_sumsq = delta.array().square().sum();
          break;
        }
        case StudyKind::global:
          out.reject = global_test(fit.statistics, config.alpha).reject;
          break;
        case StudyKind::fdr: {
          const MultipleTestReport report = multiple_test(fit.statistics, config.alpha);
          long false_positive = 0, true_positive = 0;
          for (const auto& [r, j] : report.rejections)
            (nonzero_mask(r, j) ? true_positive : false_positive) += 1;
          const long rejected = static_cast<long>(report.rejections.size());
          out.fdp = static_cast<double>(false_positive) / static_cast<double>(std::max<long>(rejected, 1));
          out.tpp = static_cast<double>(true_positive) / static_cast<double>(std::max<long>(n_nonzero, 1));
          break;
        }
      }
    } catch (const std::exception& e) {
      out.failed = true;
      out.error = e.what();
    }
  });

  StudyReport report;
  report.config = config;
  double cov_n = 0.0, cov_sum = 0.0, cov_sumsq = 0.0;
  double coef_n = 0.0, coef_sum = 0.0, coef_sumsq = 0.0;
  double rejects = 0.0, fdp_sum = 0.0, tpp_sum = 0.0;
  int ok = 0;
  for (const auto& out : outcomes) {
    if (out.failed) {
      ++report.failed_reps;
      if (report.failure_messages.size() < 5) report.failure_messages.push_back(out.error);
      continue;
    }
    ++ok;
    cov_n += out.cov_n;
    cov_sum += out.cov_sum;
    cov_sumsq += out.cov_sumsq;
    coef_n += out.coef_n;
    coef_sum += out.coef_sum;
    coef_sumsq += out.coef_sumsq;
    rejects += out.reject ? 1.0 : 0.0;
    fdp_sum += out.fdp;
    tpp_sum += out.tpp;
  }
  if (ok == 0) throw NumericError("study: every replication failed; first error: " +
                                  (report.failure_messages.empty() ? std::string("unknown")
                                                                   : report.failure_messages.front()));

  detail::finalize_moments(cov_n, cov_sum, cov_sumsq, report.cov_bias_mean, report.cov_bias_sd);
  detail::finalize_moments(coef_n, coef_sum, coef_sumsq, report.coef_bias_mean,
                           report.coef_bias_sd);
  report.rejection_rate = rejects / static_cast<double>(ok);
  report.empirical_fdr = fdp_sum / static_cast<double>(ok);
  report.empirical_power = tpp_sum / static_cast<double>(ok);
  return report;
}

}  // namespace gcm

#endif  // GCM_STUDY_HPP
