#ifndef GCM_COVARIANCE_HPP
#define GCM_COVARIANCE_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "gcm/design.hpp"
#include "gcm/types.hpp"

namespace gcm {

inline void symmetrize(Eigen::MatrixXd& a) {
  a = (0.5 * (a + a.transpose())).eval();
}

inline double max_abs(const Eigen::MatrixXd& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

// Clamps the eigenvalues of a symmetric matrix at `floor`. The matrix is left
// untouched when no eigenvalue is below the floor, so applying the repair
// twice gives the same bits as applying it once. Returns true when modified.
inline bool repair_psd(Eigen::MatrixXd& a, double floor = 0.0) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success)
    throw NumericError("repair_psd: eigendecomposition failed");
  if (es.eigenvalues().minCoeff() >= floor) return false;
  const Eigen::VectorXd clamped = es.eigenvalues().cwiseMax(floor);
  a = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
  symmetrize(a);
  return true;
}

// The separable pieces of the error law: spatial covariance across the R
// responses, temporal covariance across the T visits (trace-normalized to T
// for identifiability), the 2x2 covariance of per-subject intercept/slope
// departures, and kappa = tr(sigma_R) / R.
struct CovarianceComponents {
  Eigen::MatrixXd sigma_R;     // R x R
  Eigen::MatrixXd sigma_T;     // T x T
  Eigen::Matrix2d sigma_zeta;  // 2 x 2
  double kappa = 0.0;

  void validate() const {
    if (sigma_R.rows() != sigma_R.cols() || sigma_T.rows() != sigma_T.cols())
      throw DimensionError("covariance components must be square");
    if (max_abs(sigma_R - sigma_R.transpose()) > 1e-12 * std::max(1.0, max_abs(sigma_R)))
      throw NumericError("sigma_R is not symmetric");
    if (max_abs(sigma_T - sigma_T.transpose()) > 1e-12 * std::max(1.0, max_abs(sigma_T)))
      throw NumericError("sigma_T is not symmetric");
    if (std::abs(sigma_zeta(0, 1) - sigma_zeta(1, 0)) > 1e-12)
      throw NumericError("sigma_zeta is not symmetric");
    const double T = static_cast<double>(sigma_T.rows());
    if (std::abs(sigma_T.trace() - T) > 1e-8 * std::max(1.0, T))
      throw NumericError("sigma_T trace must equal T, got " + std::to_string(sigma_T.trace()));
    if (std::abs(kappa - sigma_R.trace() / static_cast<double>(sigma_R.rows())) > 1e-8)
      throw NumericError("kappa must equal tr(sigma_R)/R");
  }
};

// The error covariance of one response variable across all subjects and
// times. It is block diagonal with one T x T block per subject,
//   block_i = G_i sigma_zeta G_i' + [sigma_R]_{rr} sigma_T,
// and is stored that way; the full NT x NT matrix is never materialized.
// Blocks are kept alongside their Cholesky factors.
struct RegionCovariance {
  int region = -1;
  std::vector<Eigen::MatrixXd> blocks;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> factors;

  Eigen::MatrixXd block_inverse(int i) const {
    const auto T = blocks[i].rows();
    return factors[i].solve(Eigen::MatrixXd::Identity(T, T));
  }

  double log_det() const {
    double value = 0.0;
    for (const auto& llt : factors)
      value += 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return value;
  }
};

inline RegionCovariance assemble_region_covariance(const CovarianceComponents& components,
                                                   const GrowthBasis& basis, int r,
                                                   Diagnostics* diag = nullptr) {
  const int R = static_cast<int>(components.sigma_R.rows());
  if (r < 0 || r >= R)
    throw DimensionError("assemble_region_covariance: region index " + std::to_string(r) +
                         " out of range");
  const double srr = components.sigma_R(r, r);
  if (!(srr > 0.0))
    throw NumericError("assemble_region_covariance: [sigma_R]_{" + std::to_string(r) + "," +
                       std::to_string(r) + "} = " + std::to_string(srr) + " is not positive");
  if (!components.sigma_T.allFinite() || !components.sigma_zeta.allFinite())
    throw NumericError("assemble_region_covariance: non-finite covariance component");

  RegionCovariance cov;
  cov.region = r;
  cov.blocks.reserve(basis.per_subject.size());
  cov.factors.reserve(basis.per_subject.size());
  const Eigen::MatrixXd scaled_temporal = srr * components.sigma_T;
  for (std::size_t i = 0; i < basis.per_subject.size(); ++i) {
    const Eigen::MatrixXd& g = basis.per_subject[i];
    Eigen::MatrixXd block = g * components.sigma_zeta * g.transpose() + scaled_temporal;
    symmetrize(block);
    if (!block.allFinite())
      throw NumericError("assemble_region_covariance: non-finite block for subject " +
                         std::to_string(i) + " (region " + std::to_string(r) + ")");
    Eigen::LLT<Eigen::MatrixXd> llt(block);
    if (llt.info() != Eigen::Success) {
      // Small samples can push a block slightly indefinite; nudge the
      // spectrum to a tiny positive floor and retry.
      const double floor = 1e-10 * std::max(1.0, max_abs(block));
      repair_psd(block, floor);
      if (diag) {
        ++diag->psd_repairs;
        diag->note("region " + std::to_string(r) + ", subject " + std::to_string(i) +
                   ": covariance block repaired to be positive definite");
      }
      llt.compute(block);
      if (llt.info() != Eigen::Success)
        throw NumericError("assemble_region_covariance: block for subject " + std::to_string(i) +
                           " (region " + std::to_string(r) + ") is not positive definite");
    }
    cov.blocks.push_back(std::move(block));
    cov.factors.push_back(std::move(llt));
  }
  return cov;
}

}  // namespace gcm

#endif  // GCM_COVARIANCE_HPP
