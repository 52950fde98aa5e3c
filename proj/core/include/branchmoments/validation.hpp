#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "branchmoments/estimator.hpp"

namespace branchmoments {

// --- bootstrap --------------------------------------------------------------

struct BootstrapConfig {
  std::size_t replicates = 200;
  std::uint64_t seed = 1;
  /// Redraw the hypergeometric blood sample for each resampled barcode. When
  /// false only barcodes are resampled.
  bool resample_reads = true;
  std::size_t restarts_per_replicate = 10;
};

struct BootstrapResult {
  std::vector<std::string> names;
  /// One row per replicate; empty rows mark failed refits.
  std::vector<std::vector<double>> replicates;
  std::vector<double> lower, median, upper;  // 2.5%, 50%, 97.5%
  std::size_t failed = 0;
  std::vector<std::string> warnings;
};

/// Percentile with linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);

/// Resamples barcodes with replacement and (optionally) redraws the read
/// sample, then refits warm-started at `theta_full`. Replicate r uses streams
/// derived from (config.seed, r), so the output does not depend on threading.
BootstrapResult bootstrap(const ModelTopology& topology, const ReadDataset& data, const FitConfig& fit_config,
                          const ParamMask& mask, const Params& base, const Params& theta_full,
                          const BootstrapConfig& config);

/// One bootstrap data set (exposed for testing).
ReadDataset bootstrap_dataset(const ReadDataset& data, std::uint64_t seed, std::size_t replicate, bool resample_reads);

// --- cross-validation -------------------------------------------------------

struct CVCandidate {
  std::string name;
  ModelTopology topology;
  ParamMask mask;
  Params base;
  /// Optional grouping of the data's cell types into the candidate's matures.
  std::vector<std::vector<std::size_t>> lumping;
};

struct CVConfig {
  std::size_t folds = 5;
  std::uint64_t seed = 1;
  /// Allow ranking candidates with different numbers of mature types.
  bool force = false;
};

struct CVResult {
  std::string name;
  std::vector<double> per_fold;
  double mean_objective = 0.0;
  std::size_t folds = 0;
  std::size_t num_matures = 0;
};

/// Random near-equal partition of N barcodes into K folds.
std::vector<std::size_t> fold_assignment(std::size_t n_barcodes, std::size_t folds, std::uint64_t seed);

/// For each candidate and fold: fit on the other folds, then evaluate the loss
/// of the training estimate against the held-out fold's correlations. Every
/// candidate sees the same partition.
std::vector<CVResult> cross_validate(const std::vector<CVCandidate>& candidates, const ReadDataset& data,
                                     const FitConfig& fit_config, const CVConfig& config);

// --- simulation study -------------------------------------------------------

struct StudySpec {
  ModelTopology generating;
  Params truth;
  ModelTopology fitted;
  ParamMask mask;
  /// Fixed values for the fitted model.
  Params fit_base;
  std::vector<std::vector<std::size_t>> lumping;
  std::size_t replicates = 20;
  std::size_t n_lineages = 2000;
  std::vector<double> obs_times;
  std::vector<double> sample_sizes;
  double read_filter_threshold = 0.0;
  FitConfig fit;
  std::uint64_t seed = 1;
};

struct ParamSummary {
  std::string name;
  /// NaN when the fitted model does not share the generating parameterization.
  double truth = 0.0;
  double median = 0.0, mad = 0.0, sd = 0.0;
  double median_rel_error = 0.0, mad_rel_error = 0.0, sd_rel_error = 0.0;
};

struct StudyResult {
  std::vector<std::string> names;
  std::vector<std::vector<double>> estimates;
  std::vector<double> objectives;
  std::vector<ParamSummary> summary;
  double objective_median = 0.0, objective_mad = 0.0, objective_sd = 0.0;
};

/// Default observation schedule, in model time units.
std::vector<double> default_obs_times();

/// "desk": 20 replicates, N = 2000, 50 restarts. "paper": 400, 20000, 250 (long-running).
void apply_profile(StudySpec& spec, const std::string& profile);

StudyResult simulation_study(const StudySpec& spec);

/// Median absolute deviation (unscaled).
double mad(std::vector<double> values);

/// Sums cell-type columns (reads, B and b) into groups.
ReadDataset lump_dataset(const ReadDataset& data, const std::vector<std::vector<std::size_t>>& groups,
                         const std::vector<std::string>& labels = {});

}  // namespace branchmoments
