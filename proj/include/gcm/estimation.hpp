#ifndef GCM_ESTIMATION_HPP
#define GCM_ESTIMATION_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gcm/covariance.hpp"
#include "gcm/dataset.hpp"
#include "gcm/design.hpp"
#include "gcm/types.hpp"

namespace gcm {

// Moment estimators for the separable covariance structure. The error law
// couples responses across regions and times, so none of the usual
// i.i.d. sample covariances apply directly; instead the pieces are recovered
// in sequence from three pooled second-moment statistics of the centered
// responses:
//
//   sigma1        R x R   per-subject spatial variance averaged over times
//   sigma2(r1,r2) T x T   cross-region temporal covariance for a region pair
//   sigma3        T x T   per-subject temporal variance averaged over regions
//
// sigma1 identifies the off-diagonal of the spatial covariance; the strongest
// region pairs of sigma2, each divided by its spatial entry, identify the
// temporal covariance; directions orthogonal (resp. dual) to the growth basis
// applied to sigma3 identify kappa and the random-departure covariance; and
// the sigma1 diagonal minus the pooled departure contribution identifies the
// spatial diagonal.

struct PooledSpatialMoments {
  Eigen::MatrixXd sigma1;                    // R x R
  std::vector<Eigen::MatrixXd> per_subject;  // optional, kept on request
};

struct SpatialOffdiagEstimate {
  PooledSpatialMoments moments;
  Eigen::MatrixXd offdiag;  // R x R with zero diagonal
};

// Ordered set of region pairs used to pool the temporal covariance.
// noise_scale is a robust estimate of the sampling noise of a null
// off-diagonal entry (most pairs are weak, so the median magnitude over all
// pairs is a noise quantile); the temporal pooling uses it to recognize
// selected pairs that are indistinguishable from noise.
struct PairSet {
  std::vector<std::pair<int, int>> pairs;  // (r1, r2) with r1 < r2
  Eigen::VectorXd offdiag_values;          // |values| non-increasing
  int K = 0;
  double noise_scale = 0.0;
};

struct AnnihilatorVectors {
  std::vector<Eigen::VectorXd> u;   // unit vectors with u' G_i = (0, 0)
  std::vector<Eigen::VectorXd> v1;  // v1' G_i = (1, 0), minimal norm
  std::vector<Eigen::VectorXd> v2;  // v2' G_i = (0, 1), minimal norm
};

struct TemporalMoments {
  std::vector<Eigen::MatrixXd> sigma3;  // N matrices, T x T
};

inline SpatialOffdiagEstimate estimate_spatial_offdiag(
    const std::vector<Eigen::MatrixXd>& centered, bool keep_per_subject = false) {
  if (centered.size() < 2)
    throw DimensionError("estimate_spatial_offdiag: at least 2 subjects required");
  const int R = static_cast<int>(centered.front().rows());
  const int T = static_cast<int>(centered.front().cols());

  SpatialOffdiagEstimate out;
  out.moments.sigma1 = Eigen::MatrixXd::Zero(R, R);
  for (const auto& y : centered) {
    Eigen::MatrixXd s = (y * y.transpose()) / static_cast<double>(T);
    out.moments.sigma1 += s;
    if (keep_per_subject) out.moments.per_subject.push_back(std::move(s));
  }
  out.moments.sigma1 /= static_cast<double>(centered.size());
  symmetrize(out.moments.sigma1);
  if (!out.moments.sigma1.allFinite())
    throw NumericError("estimate_spatial_offdiag: non-finite pooled moment");

  out.offdiag = out.moments.sigma1;
  out.offdiag.diagonal().setZero();
  return out;
}

// The K pairs with the largest |offdiag| entries, ties broken
// lexicographically by (r1, r2).
inline PairSet select_top_pairs(const Eigen::MatrixXd& offdiag, int K) {
  const int R = static_cast<int>(offdiag.rows());
  const long available = static_cast<long>(R) * (R - 1) / 2;
  if (K <= 0 || K > available)
    throw DimensionError("select_top_pairs: K=" + std::to_string(K) + " exceeds the " +
                         std::to_string(available) + " available pairs");

  struct Entry {
    int r1, r2;
    double value;
  };
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(available));
  for (int r1 = 0; r1 < R; ++r1)
    for (int r2 = r1 + 1; r2 < R; ++r2) entries.push_back({r1, r2, offdiag(r1, r2)});
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    const double aa = std::abs(a.value), bb = std::abs(b.value);
    if (aa != bb) return aa > bb;
    if (a.r1 != b.r1) return a.r1 < b.r1;
    return a.r2 < b.r2;
  });

  PairSet set;
  set.K = K;
  set.pairs.reserve(K);
  set.offdiag_values.resize(K);
  for (int k = 0; k < K; ++k) {
    set.pairs.emplace_back(entries[k].r1, entries[k].r2);
    set.offdiag_values(k) = entries[k].value;
  }

  std::vector<double> magnitudes(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) magnitudes[k] = std::abs(entries[k].value);
  std::nth_element(magnitudes.begin(), magnitudes.begin() + magnitudes.size() / 2,
                   magnitudes.end());
  // median |N(0, s)| = 0.674 s
  set.noise_scale = magnitudes[magnitudes.size() / 2] / 0.674489750196082;
  return set;
}

// Cross-region temporal covariance for one pair.
inline Eigen::MatrixXd pair_temporal_moment(const std::vector<Eigen::MatrixXd>& centered, int r1,
                                            int r2) {
  const int T = static_cast<int>(centered.front().cols());
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(T, T);
  for (const auto& y : centered) s.noalias() += y.row(r1).transpose() * y.row(r2);
  return s / static_cast<double>(centered.size());
}

// Pooled spatial moment of responses projected onto the orthogonal
// complement of each subject's growth basis. The projection wipes the
// random-departure content (and the per-subject mean lines) out of every
// row, so this statistic sees the spatial covariance with far less noise
// than the raw pooled moment; its scale is attenuated by the projection,
// tr(P_i sigma_T) / T per subject on average.
inline Eigen::MatrixXd projected_spatial_moment(const std::vector<Eigen::MatrixXd>& centered,
                                                const GrowthBasis& basis) {
  if (centered.size() != basis.per_subject.size())
    throw DimensionError("projected_spatial_moment: centered data and basis disagree on N");
  const int R = static_cast<int>(centered.front().rows());
  const int T = static_cast<int>(centered.front().cols());
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(R, R);
  for (std::size_t i = 0; i < centered.size(); ++i) {
    const Eigen::MatrixXd& g = basis.per_subject[i];
    const Eigen::MatrixXd projector =
        Eigen::MatrixXd::Identity(T, T) - g * (g.transpose() * g).inverse() * g.transpose();
    const Eigen::MatrixXd projected = centered[i] * projector;
    pooled.noalias() += projected * projected.transpose();
  }
  pooled /= static_cast<double>(centered.size()) * T;
  symmetrize(pooled);
  if (!pooled.allFinite())
    throw NumericError("projected_spatial_moment: non-finite statistic");
  return pooled;
}

// Off-diagonal part of the projected moment; shared scale, zero diagonal.
// Used to rank region pairs for the temporal pooling.
inline Eigen::MatrixXd projected_spatial_offdiag(const std::vector<Eigen::MatrixXd>& centered,
                                                 const GrowthBasis& basis) {
  Eigen::MatrixXd pooled = projected_spatial_moment(centered, basis);
  pooled.diagonal().setZero();
  return pooled;
}

// Average trace attenuation of the projection: (NT)^-1 sum_i tr(P_i M).
inline double projected_trace_factor(const GrowthBasis& basis, const Eigen::MatrixXd& m) {
  const int T = static_cast<int>(m.rows());
  double factor = 0.0;
  for (const auto& g : basis.per_subject) {
    const Eigen::MatrixXd projector =
        Eigen::MatrixXd::Identity(T, T) - g * (g.transpose() * g).inverse() * g.transpose();
    factor += (projector * m).trace();
  }
  return factor / (static_cast<double>(basis.per_subject.size()) * T);
}

// Pooled temporal covariance over the selected pairs: each pair contributes
// sigma2(r1,r2) / offdiag(r1,r2), weighted by |offdiag(r1,r2)| so that the
// noisiest ratios (weakly correlated pairs) carry the least weight,
//   sigma_T = sum_S w_k sign(v_k) sigma2_k / sum_S w_k sign(v_k) v_k,
//   w_k = |ranking value of pair k|.
// The per-pair moment noise is roughly pair-independent while the signal
// scales with |v_k|, so magnitude-proportional weights minimize the pooled
// variance. Since tr(sigma2_k) = T v_k identically, the result has trace T
// up to floating point whenever the ranking values and denominators agree in
// sign.
//
// Two floors guard the pool. Pairs below the hard floor (relative to the
// median selected magnitude) are dropped with a warning; all pairs below it
// is an error. Pairs below the noise floor (a multiple of the null-entry
// noise scale) are also dropped: entries of that size are selected on
// sampling noise rather than signal, and conditionally on being selected
// their ratios carry a trace-aligned distortion that starves the directions
// orthogonal to the growth basis, which the later steps depend on. At least
// the three strongest hard-floor survivors are always kept; if no pair
// clears the noise floor at all, the signal is too weak to rank pairs and
// every hard-floor survivor is kept instead.
inline Eigen::MatrixXd estimate_temporal(const std::vector<Eigen::MatrixXd>& centered,
                                         const PairSet& pairs, Diagnostics* diag = nullptr,
                                         const Eigen::MatrixXd* denominators = nullptr) {
  const int T = static_cast<int>(centered.front().cols());
  const int n_pairs = static_cast<int>(pairs.pairs.size());
  std::vector<double> magnitudes(n_pairs);
  for (int k = 0; k < n_pairs; ++k) magnitudes[k] = std::abs(pairs.offdiag_values(k));
  std::vector<double> sorted = magnitudes;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double hard_floor = std::max(1e-3 * median, 1e-8);
  const double noise_floor = std::max(hard_floor, 5.0 * pairs.noise_scale);

  int n_eligible = 0, n_strong = 0;
  for (double magnitude : magnitudes) {
    if (magnitude >= hard_floor) ++n_eligible;
    if (magnitude >= noise_floor) ++n_strong;
  }
  if (n_eligible == 0)
    throw NumericError("estimate_temporal: every selected pair fell below the spatial floor");
  int n_keep;  // pairs are ordered by |value|, so the kept set is a prefix
  if (n_strong == 0) {
    n_keep = n_eligible;
    if (noise_floor > hard_floor && diag)
      diag->note("temporal pooling: no pair clears the noise floor " +
                 std::to_string(noise_floor) + "; keeping all pairs above the hard floor");
  } else {
    n_keep = std::max(n_strong, std::min(3, n_eligible));
  }

  Eigen::MatrixXd weighted_sum = Eigen::MatrixXd::Zero(T, T);
  double weight_sum = 0.0;
  int kept = 0;
  for (int k = 0; k < n_pairs && kept < n_keep; ++k) {
    if (magnitudes[k] < hard_floor) continue;
    const double sign = pairs.offdiag_values(k) >= 0.0 ? 1.0 : -1.0;
    const auto [r1, r2] = pairs.pairs[k];
    const double weight = magnitudes[k];
    weighted_sum += weight * sign * pair_temporal_moment(centered, r1, r2);
    weight_sum += weight * sign * (denominators ? (*denominators)(r1, r2) : pairs.offdiag_values(k));
    ++kept;
  }
  if (diag && kept < n_pairs) {
    diag->dropped_pairs += n_pairs - kept;
    diag->note("temporal pooling: kept the " + std::to_string(kept) + " strongest of " +
               std::to_string(n_pairs) + " selected pairs (noise floor " +
               std::to_string(noise_floor) + ")");
  }
  if (!(weight_sum > 0.0))
    throw NumericError("estimate_temporal: pooled spatial weight is not positive");

  Eigen::MatrixXd sigma_T = weighted_sum / weight_sum;
  symmetrize(sigma_T);
  if (!sigma_T.allFinite()) throw NumericError("estimate_temporal: non-finite estimate");
  return sigma_T;
}

inline TemporalMoments temporal_moments(const std::vector<Eigen::MatrixXd>& centered) {
  const int R = static_cast<int>(centered.front().rows());
  TemporalMoments tm;
  tm.sigma3.reserve(centered.size());
  for (const auto& y : centered) {
    Eigen::MatrixXd s = (y.transpose() * y) / static_cast<double>(R);
    symmetrize(s);
    tm.sigma3.push_back(std::move(s));
  }
  return tm;
}

// Orthogonal complement and dual vectors of each growth basis. u_i is built
// from a fixed-order Gram-Schmidt pass over [G_i | I_T] (the last accepted
// null direction), which makes the choice reproducible; v_{i,j} is the
// minimal-norm solution of v' G_i = e_j'.
inline AnnihilatorVectors compute_annihilators(const GrowthBasis& basis) {
  AnnihilatorVectors ann;
  const std::size_t n = basis.per_subject.size();
  ann.u.reserve(n);
  ann.v1.reserve(n);
  ann.v2.reserve(n);

  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::MatrixXd& g = basis.per_subject[i];
    const int T = static_cast<int>(g.rows());
    if (T < 3)
      throw DimensionError("compute_annihilators: T >= 3 required, subject " + std::to_string(i));

    // Modified Gram-Schmidt over [g_0, g_1, e_0, ..., e_{T-1}] with one
    // reorthogonalization pass.
    std::vector<Eigen::VectorXd> q;
    q.reserve(T);
    int basis_rank = 0;
    auto push_column = [&](const Eigen::VectorXd& col) {
      Eigen::VectorXd w = col;
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& qi : q) w -= qi.dot(w) * qi;
      const double scale = std::max(col.norm(), 1.0);
      if (w.norm() > 1e-10 * scale) {
        q.push_back(w / w.norm());
        return true;
      }
      return false;
    };
    for (int c = 0; c < 2; ++c)
      if (push_column(g.col(c))) ++basis_rank;
    if (basis_rank < 2)
      throw ValidationError("compute_annihilators: growth basis of subject " + std::to_string(i) +
                            " is rank deficient (time values proportional to a constant)");
    for (int c = 0; c < T && static_cast<int>(q.size()) < T; ++c)
      push_column(Eigen::VectorXd::Unit(T, c));
    if (static_cast<int>(q.size()) != T)
      throw NumericError("compute_annihilators: could not complete orthonormal basis, subject " +
                         std::to_string(i));

    Eigen::VectorXd u = q.back();
    const double residual = (u.transpose() * g).cwiseAbs().maxCoeff();
    if (residual > 1e-10 * std::max(1.0, max_abs(g)))
      throw NumericError("compute_annihilators: annihilator residual " + std::to_string(residual) +
                         " too large for subject " + std::to_string(i));

    const Eigen::Matrix2d gram = g.transpose() * g;
    const Eigen::Matrix2d gram_inv = gram.inverse();
    if (!gram_inv.allFinite())
      throw NumericError("compute_annihilators: singular gram matrix for subject " +
                         std::to_string(i));
    const Eigen::MatrixXd dual = g * gram_inv;  // T x 2

    ann.u.push_back(std::move(u));
    ann.v1.push_back(dual.col(0));
    ann.v2.push_back(dual.col(1));
  }
  return ann;
}

// kappa = tr(sigma_R) / R, recovered by projecting the per-subject temporal
// moments onto the directions the growth basis cannot reach.
inline double estimate_kappa(const TemporalMoments& moments, const Eigen::MatrixXd& sigma_T,
                             const AnnihilatorVectors& ann) {
  if (moments.sigma3.size() != ann.u.size())
    throw DimensionError("estimate_kappa: moments and annihilators disagree on N");
  double numerator = 0.0, denominator = 0.0;
  for (std::size_t i = 0; i < ann.u.size(); ++i) {
    const Eigen::VectorXd& u = ann.u[i];
    numerator += u.dot(moments.sigma3[i] * u);
    denominator += u.dot(sigma_T * u);
  }
  if (!(denominator > 0.0))
    throw NumericError(
        "estimate_kappa: non-positive denominator (temporal estimate not positive along the "
        "annihilator directions)");
  return numerator / denominator;
}

// Random-departure covariance, extracted entrywise through the dual vectors
// and repaired to be positive semidefinite.
inline Eigen::Matrix2d estimate_zeta(const TemporalMoments& moments,
                                     const Eigen::MatrixXd& sigma_T, double kappa,
                                     const AnnihilatorVectors& ann, Diagnostics* diag = nullptr) {
  if (!std::isfinite(kappa)) throw NumericError("estimate_zeta: kappa is not finite");
  const std::size_t n = moments.sigma3.size();
  if (n != ann.v1.size())
    throw DimensionError("estimate_zeta: moments and annihilators disagree on N");

  Eigen::Matrix2d zeta = Eigen::Matrix2d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd* v[2] = {&ann.v1[i], &ann.v2[i]};
    for (int j1 = 0; j1 < 2; ++j1)
      for (int j2 = 0; j2 < 2; ++j2)
        zeta(j1, j2) +=
            v[j1]->dot(moments.sigma3[i] * (*v[j2])) - kappa * v[j1]->dot(sigma_T * (*v[j2]));
  }
  zeta /= static_cast<double>(n);
  zeta = (0.5 * (zeta + zeta.transpose())).eval();

  Eigen::MatrixXd repaired = zeta;
  if (repair_psd(repaired, 0.0) && diag) {
    ++diag->psd_repairs;
    diag->note("random-departure covariance repaired: negative eigenvalue clamped to zero");
  }
  return repaired;
}

inline constexpr double kVarianceFloor = 1e-6;

// Diagonal of the spatial covariance: sigma1 diagonal minus the pooled
// departure level tr(sigma1)/R - kappa, floored at a small positive value so
// the per-region covariance stays invertible.
inline Eigen::VectorXd estimate_spatial_diag(const PooledSpatialMoments& moments, double kappa,
                                             Diagnostics* diag = nullptr) {
  const int R = static_cast<int>(moments.sigma1.rows());
  const double level = moments.sigma1.trace() / static_cast<double>(R) - kappa;
  Eigen::VectorXd out(R);
  for (int r = 0; r < R; ++r) {
    const double value = moments.sigma1(r, r) - level;
    if (value < kVarianceFloor) {
      out(r) = kVarianceFloor;
      if (diag) {
        ++diag->floored_variances;
        diag->note("spatial variance of region " + std::to_string(r) + " floored: " +
                   std::to_string(value) + " -> " + std::to_string(kVarianceFloor));
      }
    } else {
      out(r) = value;
    }
  }
  return out;
}

struct EstimationOptions {
  int K = 0;  // number of region pairs pooled for the temporal estimate; 0 means R
};

// True when at least one selected pair separates from the null-entry noise
// (same floors as the temporal pooling).
inline bool pairs_carry_signal(const PairSet& pairs) {
  std::vector<double> magnitudes(pairs.offdiag_values.size());
  for (int k = 0; k < pairs.offdiag_values.size(); ++k)
    magnitudes[k] = std::abs(pairs.offdiag_values(k));
  std::vector<double> sorted = magnitudes;
  std::sort(sorted.begin(), sorted.end());
  const double hard_floor = std::max(1e-3 * sorted[sorted.size() / 2], 1e-8);
  const double noise_floor = std::max(hard_floor, 5.0 * pairs.noise_scale);
  for (double magnitude : magnitudes)
    if (magnitude >= noise_floor) return true;
  return false;
}

namespace detail {
template <typename F>
auto run_step(const char* label, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw NumericError(std::string(label) + ": " + e.what());
  }
}
}  // namespace detail

// Full covariance decomposition. The raw temporal estimate is rescaled to
// trace T, with the factor absorbed into the spatial diagonal and kappa, so
// the assembled per-region covariance is unchanged by the normalization.
inline CovarianceComponents estimate_all(const GrowthCurveDataset& data,
                                         const EstimationOptions& options = {},
                                         Diagnostics* diag = nullptr) {
  data.validate();
  const int R = data.n_regions;
  const int T = data.n_times;

  const auto centered = detail::run_step("covariance step 0 (centering)",
                                         [&] { return center_responses(data); });
  const auto basis = build_growth_basis(data);

  auto spatial = detail::run_step("covariance step 1 (spatial off-diagonal)",
                                  [&] { return estimate_spatial_offdiag(centered); });
  const int K = options.K > 0 ? options.K : R;
  // Pairs are ranked (and floored) on the growth-basis-annihilated statistic,
  // which sees through the random-departure noise; the pooled estimate itself
  // divides by the step-1 entries so its scale matches the other steps. When
  // no pair separates from noise even on the annihilated ranking (no usable
  // spatial correlation), fall back to ranking on the step-1 entries
  // themselves: with no signal the annihilated weights would only imprint
  // the projector's shape on the pool.
  const Eigen::MatrixXd annihilated = detail::run_step(
      "covariance step 2 (pair ranking)",
      [&] { return projected_spatial_moment(centered, basis); });
  Eigen::MatrixXd ranking = annihilated;
  ranking.diagonal().setZero();
  auto pairs = detail::run_step("covariance step 2 (pair selection)",
                                [&] { return select_top_pairs(ranking, K); });
  Eigen::MatrixXd sigma_T_raw;
  if (pairs_carry_signal(pairs)) {
    sigma_T_raw = detail::run_step(
        "covariance step 2 (temporal)",
        [&] { return estimate_temporal(centered, pairs, diag, &spatial.offdiag); });
  } else {
    if (diag)
      diag->note(
          "pair ranking: no pair separates from noise on the annihilated statistic; ranking on "
          "the pooled spatial moment instead");
    pairs = detail::run_step("covariance step 2 (pair selection, fallback)",
                             [&] { return select_top_pairs(spatial.offdiag, K); });
    sigma_T_raw = detail::run_step("covariance step 2 (temporal)",
                                   [&] { return estimate_temporal(centered, pairs, diag); });
  }

  const auto moments3 = temporal_moments(centered);
  const auto ann = detail::run_step("covariance step 3 (annihilators)",
                                    [&] { return compute_annihilators(basis); });
  const double kappa_raw = detail::run_step(
      "covariance step 3 (kappa)", [&] { return estimate_kappa(moments3, sigma_T_raw, ann); });
  const Eigen::Matrix2d zeta =
      detail::run_step("covariance step 3 (random departures)",
                       [&] { return estimate_zeta(moments3, sigma_T_raw, kappa_raw, ann, diag); });
  // The spatial diagonal comes from the annihilated moment rather than from
  // the sigma1 diagonal minus the pooled departure level: the projection
  // removes the departure content before squaring, which roughly halves the
  // per-region error of the variances that calibrate every test statistic.
  // Dividing by the average trace attenuation puts it on the same raw scale
  // as the temporal estimate.
  const double attenuation = projected_trace_factor(basis, sigma_T_raw);
  if (!(attenuation > 0.0))
    throw NumericError("covariance step 4 (spatial diagonal): non-positive trace attenuation");
  const Eigen::VectorXd diag_raw = annihilated.diagonal() / attenuation;

  const double trace_raw = sigma_T_raw.trace();
  if (!(trace_raw > 0.0))
    throw NumericError("covariance step 2 (temporal): estimate has non-positive trace " +
                       std::to_string(trace_raw));
  const double scale = static_cast<double>(T) / trace_raw;

  CovarianceComponents components;
  components.sigma_T = scale * sigma_T_raw;
  components.sigma_zeta = zeta;
  components.sigma_R = spatial.offdiag;
  for (int r = 0; r < R; ++r) {
    double value = diag_raw(r) / scale;
    if (value < kVarianceFloor) {
      value = kVarianceFloor;
      if (diag) ++diag->floored_variances;
    }
    components.sigma_R(r, r) = value;
  }
  components.kappa = components.sigma_R.trace() / static_cast<double>(R);
  return components;
}

}  // namespace gcm

#endif  // GCM_ESTIMATION_HPP
