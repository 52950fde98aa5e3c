#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "branchmoments/model.hpp"

namespace branchmoments {

/// Numerical solution of the coupled moment ODE system, for cross-checking the
/// closed forms. Integrates
///   dM_{m|i}/dt  = sum_k kappa_ik M_{m|k}
///   dU_{mn|i}/dt = sum_k kappa_ik U_{mn|k} + sum_{j,k} kappa_{i,jk} M_{m|j} M_{n|k}
/// for all sources i with an adaptive Dormand-Prince 5(4) stepper.
struct OracleTables {
  std::vector<double> times;
  std::size_t num_compartments = 0;
  std::size_t num_matures = 0;
  /// mean[j][m * C + i]
  std::vector<std::vector<double>> mean;
  /// second[j][packed(m, n) * C + i]
  std::vector<std::vector<double>> second;

  double M(std::size_t j, std::size_t m, std::size_t source) const;
  double U(std::size_t j, std::size_t m, std::size_t n, std::size_t source) const;
};

struct OracleTolerances {
  double relative = 1e-11;
  double absolute = 1e-30;
  std::size_t max_steps = 2'000'000;
};

/// Throws DomainError on a non-increasing grid or when the step size underflows.
OracleTables ode_oracle(const ModelTopology& topology, const Params& params, std::span<const double> t_grid,
                        const OracleTolerances& tolerances = {});

/// Largest |closed - oracle| / max(|oracle|, floor) over every M and U entry.
double max_relative_error(const ModelTopology& topology, const Params& params, std::span<const double> t_grid,
                          double floor = 1e-18, const OracleTolerances& tolerances = {});

struct OracleSuiteReport {
  double max_rel_error = 0.0;
  std::string worst_case;
  std::size_t cases = 0;
  /// Draws with an exactly repeated rate.
  std::size_t coincident_cases = 0;
};

/// Random log-uniform rates in [1e-3, 50] for each named canonical model. The
/// first two draws per model force coincident rates (a mature death equal to its
/// progenitor's death, then the HSC net decay equal to a progenitor death).
OracleSuiteReport oracle_suite(const std::vector<std::string>& models, std::size_t draws, std::uint64_t seed,
                               std::span<const double> t_grid);

}  // namespace branchmoments
