#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "branchmoments/model.hpp"
#include "branchmoments/moments.hpp"
#include "branchmoments/simulator.hpp"

namespace branchmoments {

/// Pearson correlations across barcodes for every unordered type pair and time.
/// Cells where a column has zero variance are left undefined.
CorrTable empirical_correlations(const ReadDataset& data);

/// Correlation targets plus the sampling constants the model needs.
struct CorrData {
  CorrTable psi_hat;
  /// J x M
  std::vector<double> B;
  /// J x M
  std::vector<double> b;
};

CorrData correlation_data(const ReadDataset& data);

enum class Optimizer { NelderMead, Bfgs };

struct FitConfig {
  std::size_t n_restarts = 250;
  /// Free rates start log-uniform in [restart_lower, restart_upper]. A
  /// nonpositive upper bound means 100 x the largest fixed mature death rate
  /// (100 when none is fixed).
  double restart_lower = 1e-4;
  double restart_upper = 0.0;
  /// Free gamma entries start uniform in [-gamma_range, gamma_range].
  double gamma_range = 3.0;
  double barrier = 1e-6;
  bool growth_constraint = true;
  /// Multiplies the unordered-pair sum; 2 counts each pair once per ordering.
  double pair_factor = 2.0;
  double f_tol = 1e-10;
  double x_tol = 1e-8;
  std::size_t max_iterations = 4000;
  /// Initial simplex edge (log-rate / gamma units).
  double initial_step = 0.5;
  Optimizer optimizer = Optimizer::NelderMead;
  std::uint64_t seed = 1;
  /// Observation times left out of the loss.
  std::vector<double> exclude_times;
  /// Extra starting points tried before the random restarts.
  std::vector<Params> warm_starts;
};

/// Maps between the optimizer's unconstrained vector and Params. Free rates are
/// log-transformed. pi is either fully free (K-1 gammas), fully fixed, or fixed
/// only at the HSC entry with the remainder split over progenitors by |A|-1 gammas.
class ParameterCodec {
 public:
  ParameterCodec(const ModelTopology& topology, const Params& base, const ParamMask& mask);

  std::size_t size() const { return free_rates_.size() + gamma_size_; }
  Params decode(std::span<const double> x) const;
  std::vector<double> encode(const Params& params) const;
  /// Names of the optimized quantities in flat-layout terms (gammas are reported as pi entries).
  std::vector<std::string> free_names() const;
  /// Values reported for the free names: rates, then the pi entries the gammas control.
  std::vector<double> free_values(const Params& params) const;
  const std::vector<std::size_t>& free_rate_indices() const { return free_rates_; }
  std::size_t gamma_size() const { return gamma_size_; }

 private:
  ModelTopology topology_;
  Params base_;
  std::vector<std::size_t> free_rates_;
  enum class PiMode { Fixed, Free, HscFixed } pi_mode_;
  std::size_t gamma_size_ = 0;
};

struct LossOptions {
  double barrier = 1e-6;
  bool growth_constraint = true;
  double pair_factor = 2.0;
  std::vector<double> exclude_times;
};

/// Correlation loss for complete parameter sets. Returns +infinity when the
/// growth constraint is violated, the moments are not finite, or the model
/// leaves a correlation undefined where the data define it.
class CorrelationLoss {
 public:
  CorrelationLoss(const ModelTopology& topology, CorrData data, LossOptions options);

  double operator()(const Params& params) const;
  /// Model correlations on the data's time grid.
  CorrTable model_table(const Params& params) const;
  const CorrData& data() const { return data_; }
  const LossOptions& options() const { return options_; }

 private:
  ModelTopology topology_;
  CorrData data_;
  LossOptions options_;
  std::vector<bool> time_used_;
};

struct RestartRecord {
  std::vector<double> start;  // free values
  std::vector<double> end;
  double objective = std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  std::string status;
};

struct FitResult {
  Params theta_hat;
  double objective = std::numeric_limits<double>::infinity();
  std::size_t best_restart = 0;
  std::vector<std::string> free_names;
  std::vector<RestartRecord> restarts;
  CorrTable fitted_psi;
  CorrTable empirical_psi;
  std::vector<std::string> warnings;
};

/// Multi-restart minimization of the correlation loss. `base` supplies the fixed
/// values (and the pi used when pi is fixed). Restarts are independent and run
/// in parallel; restart r draws from Rng(config.seed, r). Throws DomainError if
/// every restart fails or nothing is free.
FitResult fit(const ModelTopology& topology, const CorrData& data, const FitConfig& config, const ParamMask& mask,
              const Params& base);

FitResult fit(const ModelTopology& topology, const ReadDataset& data, const FitConfig& config, const ParamMask& mask,
              const Params& base);

/// Loss of fixed parameters against a data set, with the config's loss options.
double evaluate_loss(const ModelTopology& topology, const Params& params, const CorrData& data, const FitConfig& config);

struct LocalResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  std::string status;
};

/// One local minimization from x0. The best objective seen never increases.
LocalResult minimize_local(const std::function<double(std::span<const double>)>& f, std::vector<double> x0,
                           const FitConfig& config);

}  // namespace branchmoments
