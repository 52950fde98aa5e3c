#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "branchmoments/expsum.hpp"
#include "branchmoments/model.hpp"

namespace branchmoments {

/// Unordered mature pairs (m, n), m < n, in lexicographic order.
std::vector<std::pair<std::size_t, std::size_t>> mature_pairs(std::size_t num_matures);

/// Index of (m, n), m <= n, in the packed upper triangle of an M x M matrix.
inline std::size_t packed_index(std::size_t m, std::size_t n, std::size_t num_matures) {
  if (m > n) std::swap(m, n);
  return m * num_matures - m * (m + 1) / 2 + n;
}

/// First and second derivatives of the pseudo-generating functions at s = 1:
/// first(i, j) = du_i/ds_j and second[i](j, k) = d2u_i/ds_j ds_k. Built from the
/// reaction list (offspring = e_parent + delta), so they do not depend on the
/// closed-form cascade.
struct KappaTables {
  Eigen::MatrixXd first;
  std::vector<Eigen::MatrixXd> second;
};

KappaTables kappa_tables(const ModelTopology& topology, const Params& params);

struct MomentOptions {
  /// Use the HSC covariance forcing 2 * kappa_{0,00} M_m M_n for m != n instead of
  /// kappa_{0,00} M_m M_n. Off by default; the ODE oracle rejects it.
  bool doubled_hsc_cross_term = false;
};

/// Closed-form conditional moments for every source compartment i:
/// M(m, i) = E[X_m(t) | X(0) = e_i] and U(m, n, i) = E[X_m (X_n - 1{m=n}) | X(0) = e_i].
class MomentSet {
 public:
  MomentSet(std::size_t num_compartments, std::size_t num_matures);

  const ExpSum& M(std::size_t m, std::size_t source) const { return mean_[m * compartments_ + source]; }
  const ExpSum& U(std::size_t m, std::size_t n, std::size_t source) const {
    return second_[packed_index(m, n, matures_) * compartments_ + source];
  }
  ExpSum& M(std::size_t m, std::size_t source) { return mean_[m * compartments_ + source]; }
  ExpSum& U(std::size_t m, std::size_t n, std::size_t source) {
    return second_[packed_index(m, n, matures_) * compartments_ + source];
  }

  std::size_t num_compartments() const { return compartments_; }
  std::size_t num_matures() const { return matures_; }

  KappaTables kappas;

 private:
  std::size_t compartments_;
  std::size_t matures_;
  std::vector<ExpSum> mean_;
  std::vector<ExpSum> second_;
};

/// Solves the mean and second factorial moment systems by the integrating-factor
/// cascade matures -> progenitors -> HSC.
MomentSet build_moment_set(const ModelTopology& topology, const Params& params, const MomentOptions& options = {});

/// Moments of the mature counts of one lineage, marginalized over the initial distribution.
struct LatentMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  /// E[X_m^2] = sum_k pi_k (U_mm|k + M_m|k)
  Eigen::VectorXd second;
};

LatentMoments latent_moments(const MomentSet& mset, std::span<const double> pi, double t);

/// Moments of the sampled read counts (before PCR scaling, which cancels in correlations).
struct ObservedMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
  Eigen::MatrixXd cov;
  /// Row-major M x M; nullopt where a standard deviation is zero.
  std::vector<std::optional<double>> corr;
  std::size_t num_matures = 0;

  std::optional<double> correlation(std::size_t m, std::size_t n) const { return corr[m * num_matures + n]; }
};

/// Hypergeometric sampling of b_m cells out of B_m, with B_m treated as a known constant.
/// Throws DomainError when the latent moments overflowed.
ObservedMoments observed_moments(const LatentMoments& latent, std::span<const double> b, std::span<const double> B);

/// Table of correlations indexed by (unordered mature pair, observation time).
/// Cells may be undefined (nullopt).
struct CorrTable {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> times;
  std::vector<std::optional<double>> values;  // [pair * times.size() + j]

  CorrTable() = default;
  CorrTable(std::size_t num_matures, std::vector<double> obs_times);

  std::optional<double>& at(std::size_t pair, std::size_t j) { return values[pair * times.size() + j]; }
  const std::optional<double>& at(std::size_t pair, std::size_t j) const { return values[pair * times.size() + j]; }
};

/// Model-based read correlations psi_{mn,j}. B_per_time is J x M, row-major; b is
/// either one sample size per mature type or J x M.
CorrTable model_correlations(const ModelTopology& topology, const Params& params, std::span<const double> times,
                             std::span<const double> b, std::span<const double> B_per_time,
                             const MomentOptions& options = {});

/// Same, reusing an already built moment set.
CorrTable model_correlations(const MomentSet& mset, std::span<const double> pi, std::span<const double> times,
                             std::span<const double> b, std::span<const double> B_per_time);

}  // namespace branchmoments
