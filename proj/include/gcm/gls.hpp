#ifndef GCM_GLS_HPP
#define GCM_GLS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "gcm/covariance.hpp"
#include "gcm/dataset.hpp"
#include "gcm/design.hpp"
#include "gcm/estimation.hpp"
#include "gcm/parallel.hpp"
#include "gcm/types.hpp"

namespace gcm {

// Per-region generalized least squares output. statistics(r, j) holds the
// studentized coefficient J_{r,j} = beta_j / se_j over the mean-curve block
// j < 2p+2; the time-variant effects are estimated but never tested.
struct FitResult {
  CoefficientMatrix coefficients;
  Eigen::MatrixXd precision_diagonals;  // R x (2p+2+q), diag of (X' S^-1 X)^-1
  Eigen::MatrixXd statistics;           // R x (2p+2)
};

inline constexpr double kConditionLimit = 1e12;

// Weighted least squares with the block-diagonal per-region covariance:
//   beta^(r) = (X' S_r^-1 X)^-1 X' S_r^-1 y_r.
// All solves go through the T x T Cholesky factors of the subject blocks;
// the NT x NT covariance never exists in memory. Regions are independent and
// run data-parallel.
inline FitResult gls_fit(const GrowthCurveDataset& data, const DesignMatrix& design,
                         const CovarianceComponents& components, int n_threads = 1,
                         Diagnostics* diag = nullptr) {
  data.validate();
  const int N = data.n_subjects;
  const int T = data.n_times;
  const int R = data.n_regions;
  const int m = data.coefficient_count();
  if (design.rows.rows() != static_cast<long>(N) * T || design.rows.cols() != m)
    throw DimensionError("gls_fit: design does not match the dataset");
  if (m > N * T)
    throw DimensionError("gls_fit: " + std::to_string(m) + " coefficients exceed the " +
                         std::to_string(N * T) + " observations");
  if (components.sigma_R.rows() != R || components.sigma_T.rows() != T)
    throw DimensionError("gls_fit: covariance components do not match the dataset");

  const GrowthBasis basis = build_growth_basis(data);
  const int eta = 2 * data.n_static + 2;

  FitResult fit;
  fit.coefficients.per_region.resize(R, m);
  fit.coefficients.n_static = data.n_static;
  fit.coefficients.n_dynamic = data.n_dynamic;
  fit.precision_diagonals.resize(R, m);
  fit.statistics.resize(R, eta);

  std::vector<Diagnostics> region_diag(diag ? R : 0);

  parallel_for(static_cast<std::size_t>(R), n_threads, [&](std::size_t ri) {
    const int r = static_cast<int>(ri);
    const RegionCovariance cov = assemble_region_covariance(
        components, basis, r, diag ? &region_diag[ri] : nullptr);

    Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < N; ++i) {
      const auto x_i = design.subject_block(i);
      const Eigen::MatrixXd weighted = cov.factors[i].solve(x_i);  // T x m
      normal.noalias() += x_i.transpose() * weighted;
      rhs.noalias() += weighted.transpose() * data.responses[i].row(r).transpose();
    }
    symmetrize(normal);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(normal);
    if (es.info() != Eigen::Success)
      throw NumericError("gls_fit: eigendecomposition of the normal equations failed, region " +
                         std::to_string(r));
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > kConditionLimit)
      throw NumericError("gls_fit: normal equations singular or ill-conditioned for region " +
                         std::to_string(r) + " (condition number " +
                         std::to_string(lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity()) +
                         ")");
    const Eigen::MatrixXd inverse = es.eigenvectors() *
                                    es.eigenvalues().cwiseInverse().asDiagonal() *
                                    es.eigenvectors().transpose();

    fit.coefficients.per_region.row(r) = (inverse * rhs).transpose();
    fit.precision_diagonals.row(r) = inverse.diagonal().transpose();
    for (int j = 0; j < eta; ++j)
      fit.statistics(r, j) =
          fit.coefficients.per_region(r, j) / std::sqrt(fit.precision_diagonals(r, j));
  });

  if (diag)
    for (const auto& d : region_diag) diag->merge(d);
  return fit;
}

// Recomputes the studentized statistics from a fit; matches fit.statistics.
inline Eigen::MatrixXd test_statistics(const FitResult& fit) {
  const int R = fit.coefficients.n_regions();
  const int eta = fit.coefficients.eta_size();
  Eigen::MatrixXd stats(R, eta);
  for (int r = 0; r < R; ++r)
    for (int j = 0; j < eta; ++j) {
      const double variance = fit.precision_diagonals(r, j);
      if (!(variance > 0.0))
        throw NumericError("test_statistics: non-positive variance for region " +
                           std::to_string(r) + ", coefficient " + std::to_string(j));
      stats(r, j) = fit.coefficients.per_region(r, j) / std::sqrt(variance);
    }
  return stats;
}

}  // namespace gcm

#endif  // GCM_GLS_HPP
