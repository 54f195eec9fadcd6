#ifndef GCM_DESIGN_HPP
#define GCM_DESIGN_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "gcm/dataset.hpp"
#include "gcm/types.hpp"

namespace gcm {

// One design row per (subject, time), subject-major. Column layout is fixed
// as (1, g, x, g*x, z), so the tested mean-curve coefficients occupy the
// leading 2p+2 columns of every coefficient vector.
struct DesignMatrix {
  Eigen::MatrixXd rows;  // NT x (2p+2+q)
  int n_subjects = 0;
  int n_times = 0;

  Eigen::Block<const Eigen::MatrixXd> subject_block(int i) const {
    return rows.middleRows(i * n_times, n_times);
  }
};

// Per-subject growth basis G_i = [1, g_i]: the intercept/slope directions the
// random departures act along.
struct GrowthBasis {
  std::vector<Eigen::MatrixXd> per_subject;  // N matrices, T x 2
};

// Fills one subject's T design rows: (1, g_t, x, g_t * x, z_t).
inline void fill_subject_design(const Eigen::RowVectorXd& g, const Eigen::RowVectorXd& x,
                                const Eigen::MatrixXd& z, Eigen::Ref<Eigen::MatrixXd> out) {
  const int T = static_cast<int>(g.size());
  const int p = static_cast<int>(x.size());
  const int q = static_cast<int>(z.cols());
  for (int t = 0; t < T; ++t) {
    out(t, 0) = 1.0;
    out(t, 1) = g(t);
    out.row(t).segment(2, p) = x;
    out.row(t).segment(2 + p, p) = g(t) * x;
    out.row(t).segment(2 + 2 * p, q) = z.row(t);
  }
}

inline DesignMatrix build_design(const GrowthCurveDataset& data) {
  data.validate();
  const int m = data.coefficient_count();
  DesignMatrix design;
  design.n_subjects = data.n_subjects;
  design.n_times = data.n_times;
  design.rows.resize(data.n_subjects * data.n_times, m);
  for (int i = 0; i < data.n_subjects; ++i) {
    fill_subject_design(data.time_values.row(i), data.static_covariates.row(i),
                        data.dynamic_covariates[i],
                        design.rows.middleRows(i * data.n_times, data.n_times));
  }
  return design;
}

inline GrowthBasis build_growth_basis(const GrowthCurveDataset& data) {
  data.validate();
  GrowthBasis basis;
  basis.per_subject.reserve(data.n_subjects);
  for (int i = 0; i < data.n_subjects; ++i) {
    Eigen::MatrixXd g(data.n_times, 2);
    g.col(0).setOnes();
    g.col(1) = data.time_values.row(i).transpose();
    basis.per_subject.push_back(std::move(g));
  }
  return basis;
}

// Per-region coefficient vectors beta^(r), stored as rows. The first 2p+2
// entries of each row are the mean-curve block eta_r = (mu_0, mu_1, gamma_0,
// gamma_1); the trailing q entries are the time-variant effects xi_r.
struct CoefficientMatrix {
  Eigen::MatrixXd per_region;  // R x (2p+2+q)
  int n_static = 0;            // p
  int n_dynamic = 0;           // q

  int n_regions() const { return static_cast<int>(per_region.rows()); }
  int eta_size() const { return 2 * n_static + 2; }

  Eigen::RowVectorXd eta(int r) const { return per_region.row(r).head(eta_size()); }
  Eigen::RowVectorXd xi(int r) const { return per_region.row(r).tail(n_dynamic); }
};

}  // namespace gcm

#endif  // GCM_DESIGN_HPP
