#ifndef GCM_DATASET_HPP
#define GCM_DATASET_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "gcm/types.hpp"

namespace gcm {

// Longitudinal multi-response data: N subjects, R response variables, and T
// visits per subject. Each subject i carries an R x T response matrix
// y_{i,r,t}, a vector of visit times g_{i,t}, p time-invariant covariates x_i
// and q time-variant covariates z_{i,t}. All types in this module are
// immutable after construction and safe to share across threads.
struct GrowthCurveDataset {
  int n_subjects = 0;  // N
  int n_regions = 0;   // R
  int n_times = 0;     // T
  int n_static = 0;    // p
  int n_dynamic = 0;   // q

  std::vector<Eigen::MatrixXd> responses;           // N matrices, R x T
  Eigen::MatrixXd time_values;                      // N x T
  Eigen::MatrixXd static_covariates;                // N x p
  std::vector<Eigen::MatrixXd> dynamic_covariates;  // N matrices, T x q

  // Optional labels; filled by ingestion, defaulted when absent.
  std::vector<std::string> subject_ids;
  std::vector<std::string> region_names;
  std::vector<std::string> static_names;
  std::vector<std::string> dynamic_names;

  int coefficient_count() const { return 2 * n_static + n_dynamic + 2; }

  // Checks the shape and content invariants, throwing on the first violation.
  // T >= 3 is required downstream (the temporal-variance decomposition needs
  // a direction orthogonal to the per-subject growth basis), and each
  // subject's time values must not be (numerically) constant, otherwise the
  // intercept and slope columns of the growth basis are collinear.
  void validate() const {
    if (n_subjects <= 0 || n_regions <= 0 || n_times <= 0 || n_static < 0 || n_dynamic < 0)
      throw DimensionError("dataset: N, R, T must be positive and p, q non-negative");
    if (n_times < 3)
      throw DimensionError("dataset: at least 3 time points per subject are required, got T=" +
                           std::to_string(n_times));
    if (static_cast<int>(responses.size()) != n_subjects)
      throw DimensionError("dataset: responses holds " + std::to_string(responses.size()) +
                           " subjects, expected " + std::to_string(n_subjects));
    if (time_values.rows() != n_subjects || time_values.cols() != n_times)
      throw DimensionError("dataset: time_values must be N x T");
    if (static_covariates.rows() != n_subjects || static_covariates.cols() != n_static)
      throw DimensionError("dataset: static_covariates must be N x p");
    if (static_cast<int>(dynamic_covariates.size()) != n_subjects)
      throw DimensionError("dataset: dynamic_covariates holds " +
                           std::to_string(dynamic_covariates.size()) + " subjects, expected " +
                           std::to_string(n_subjects));
    for (int i = 0; i < n_subjects; ++i) {
      if (responses[i].rows() != n_regions || responses[i].cols() != n_times)
        throw DimensionError("dataset: responses[" + std::to_string(i) + "] must be R x T");
      if (dynamic_covariates[i].rows() != n_times || dynamic_covariates[i].cols() != n_dynamic)
        throw DimensionError("dataset: dynamic_covariates[" + std::to_string(i) +
                             "] must be T x q");
      if (!responses[i].allFinite())
        throw NumericError("dataset: non-finite response for subject " + std::to_string(i));
      if (!dynamic_covariates[i].allFinite())
        throw NumericError("dataset: non-finite dynamic covariate for subject " +
                           std::to_string(i));
    }
    if (!time_values.allFinite()) throw NumericError("dataset: non-finite time value");
    if (!static_covariates.allFinite())
      throw NumericError("dataset: non-finite static covariate");
    for (int i = 0; i < n_subjects; ++i) {
      const auto g = time_values.row(i);
      const double spread = g.maxCoeff() - g.minCoeff();
      const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
      if (spread <= 1e-8 * scale)
        throw ValidationError("dataset: time values of subject " + subject_label(i) +
                              " are (numerically) constant; growth basis is rank deficient");
    }
  }

  std::string subject_label(int i) const {
    if (i >= 0 && i < static_cast<int>(subject_ids.size())) return subject_ids[i];
    return std::to_string(i);
  }
};

// Removes the cross-subject mean from every (region, time) cell:
// y_{i,r,t} - mean_i y_{i,r,t}. Subjects are the independent sampling unit,
// so this is the centering all moment estimators build on.
inline std::vector<Eigen::MatrixXd> center_responses(const GrowthCurveDataset& data) {
  if (data.n_subjects < 2)
    throw DimensionError("center_responses: at least 2 subjects required, got N=" +
                         std::to_string(data.n_subjects));
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(data.n_regions, data.n_times);
  for (const auto& y : data.responses) mean += y;
  mean /= static_cast<double>(data.n_subjects);

  std::vector<Eigen::MatrixXd> centered;
  centered.reserve(data.responses.size());
  for (const auto& y : data.responses) centered.push_back(y - mean);
  return centered;
}

}  // namespace gcm

#endif  // GCM_DATASET_HPP
