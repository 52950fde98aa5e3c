#include "branchmoments/validation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "branchmoments/rng.hpp"

namespace branchmoments {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Substream tags keep the different random streams of this module apart.
constexpr std::uint64_t kBootstrapStream = 2;
constexpr std::uint64_t kFoldStream = 3;
constexpr std::uint64_t kStudySimStream = 4;
constexpr std::uint64_t kStudyFitStream = 5;

double median(std::vector<double> v) { return percentile(std::move(v), 0.5); }

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return kNaN;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - w) + values[hi] * w;
}

double mad(std::vector<double> values) {
  if (values.empty()) return kNaN;
  const double m = median(values);
  for (double& x : values) x = std::abs(x - m);
  return median(std::move(values));
}

ReadDataset bootstrap_dataset(const ReadDataset& data, std::uint64_t seed, std::size_t replicate,
                              bool resample_reads) {
  const std::size_t N = data.num_barcodes();
  if (N == 0) throw DomainError("bootstrap: empty data set");
  Rng rng(seed, replicate, kBootstrapStream);
  std::vector<std::size_t> pick(N);
  for (auto& p : pick) p = static_cast<std::size_t>(rng.below(N));
  ReadDataset out = data.subset(pick);
  if (!resample_reads) return out;

  const std::size_t J = data.num_times(), M = data.num_types();
  std::vector<std::int64_t> latent(N);
  for (std::size_t j = 0; j < J; ++j) {
    for (std::size_t m = 0; m < M; ++m) {
      // Reads are a scaled sample, so y * B / sum(y) estimates the barcode's
      // circulating count.
      double total = 0.0;
      for (std::size_t p = 0; p < N; ++p) total += static_cast<double>(data.read(p, j, m));
      const double B = data.B[j * M + m], b = data.b[j * M + m];
      std::int64_t pop = 0;
      for (std::size_t i = 0; i < N; ++i) {
        const double y = static_cast<double>(data.read(pick[i], j, m));
        latent[i] = total > 0.0 ? static_cast<std::int64_t>(std::nearbyint(y * B / total)) : 0;
        pop += latent[i];
      }
      const auto draws =
          std::min(pop, static_cast<std::int64_t>(std::nearbyint(b * static_cast<double>(pop) / B)));
      const auto sample = pop > 0 ? mvhypergeom_sample(latent, draws, rng) : std::vector<std::int64_t>(N, 0);
      for (std::size_t i = 0; i < N; ++i) out.read(i, j, m) = sample[i];
    }
  }
  return out;
}

BootstrapResult bootstrap(const ModelTopology& topology, const ReadDataset& data, const FitConfig& fit_config,
                          const ParamMask& mask, const Params& base, const Params& theta_full,
                          const BootstrapConfig& config) {
  if (config.replicates == 0) throw DomainError("bootstrap: replicates must be positive");
  ParameterCodec codec(topology, base, mask);
  BootstrapResult result;
  result.names = codec.free_names();
  result.replicates.resize(config.replicates);

  FitConfig fc = fit_config;
  fc.n_restarts = config.restarts_per_replicate;
  fc.warm_starts = {theta_full};
  // Replicates run one after another; the restarts inside each fit are parallel.
  for (std::size_t r = 0; r < config.replicates; ++r) {
    fc.seed = Rng(config.seed, r, kBootstrapStream + 100)();
    try {
      const ReadDataset boot = bootstrap_dataset(data, config.seed, r, config.resample_reads);
      const FitResult f = fit(topology, boot, fc, mask, base);
      result.replicates[r] = codec.free_values(f.theta_hat);
    } catch (const DomainError&) {
      ++result.failed;
    }
  }

  const std::size_t P = result.names.size();
  for (std::size_t k = 0; k < P; ++k) {
    std::vector<double> col;
    for (const auto& row : result.replicates)
      if (!row.empty()) col.push_back(row[k]);
    result.lower.push_back(percentile(col, 0.025));
    result.median.push_back(percentile(col, 0.5));
    result.upper.push_back(percentile(col, 0.975));
  }
  if (static_cast<double>(result.failed) > 0.05 * static_cast<double>(config.replicates))
    result.warnings.push_back(std::to_string(result.failed) + " of " + std::to_string(config.replicates) +
                              " bootstrap refits failed; intervals use the remaining replicates");
  return result;
}

std::vector<std::size_t> fold_assignment(std::size_t n_barcodes, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw DomainError("cross-validation needs at least 2 folds");
  if (n_barcodes < 5 * folds)
    throw DomainError("fold too small: " + std::to_string(n_barcodes) + " barcodes for " + std::to_string(folds) +
                      " folds (need at least 5 per fold)");
  std::vector<std::size_t> perm(n_barcodes);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed, 0, kFoldStream);
  for (std::size_t i = n_barcodes - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  std::vector<std::size_t> fold(n_barcodes);
  for (std::size_t i = 0; i < n_barcodes; ++i) fold[perm[i]] = i % folds;
  return fold;
}

std::vector<CVResult> cross_validate(const std::vector<CVCandidate>& candidates, const ReadDataset& data,
                                     const FitConfig& fit_config, const CVConfig& config) {
  if (candidates.empty()) throw DomainError("cross-validation needs at least one candidate");
  const auto fold = fold_assignment(data.num_barcodes(), config.folds, config.seed);
  const std::size_t m0 = candidates.front().topology.num_matures();
  if (!config.force) {
    for (const auto& c : candidates)
      if (c.topology.num_matures() != m0)
        throw DomainError("candidates have different numbers of mature types; their losses sum different numbers "
                          "of correlation terms and are not directly comparable (use force to rank anyway)");
  }

  std::vector<CVResult> out;
  for (const auto& cand : candidates) {
    const ReadDataset cdata = cand.lumping.empty() ? data : lump_dataset(data, cand.lumping, cand.topology.matures);
    if (cdata.num_types() != cand.topology.num_matures())
      throw DomainError("candidate '" + cand.name + "' has " + std::to_string(cand.topology.num_matures()) +
                        " mature types but the data have " + std::to_string(cdata.num_types()));
    CVResult res;
    res.name = cand.name;
    res.folds = config.folds;
    res.num_matures = cand.topology.num_matures();
    for (std::size_t k = 0; k < config.folds; ++k) {
      std::vector<std::size_t> train, test;
      for (std::size_t p = 0; p < fold.size(); ++p) (fold[p] == k ? test : train).push_back(p);
      const FitResult f = fit(cand.topology, cdata.subset(train), fit_config, cand.mask, cand.base);
      res.per_fold.push_back(
          evaluate_loss(cand.topology, f.theta_hat, correlation_data(cdata.subset(test)), fit_config));
    }
    res.mean_objective =
        std::accumulate(res.per_fold.begin(), res.per_fold.end(), 0.0) / static_cast<double>(res.per_fold.size());
    out.push_back(std::move(res));
  }
  return out;
}

std::vector<double> default_obs_times() { return {2, 3, 4.5, 6.5, 8, 10, 12.5, 15, 18, 21, 24}; }

void apply_profile(StudySpec& spec, const std::string& profile) {
  if (profile == "desk") {
    spec.replicates = 20;
    spec.n_lineages = 2000;
    spec.fit.n_restarts = 50;
  } else if (profile == "paper") {
    spec.replicates = 400;
    spec.n_lineages = 20000;
    spec.fit.n_restarts = 250;
  } else {
    throw DomainError("unknown study profile '" + profile + "' (expected desk or paper)");
  }
}

ReadDataset lump_dataset(const ReadDataset& data, const std::vector<std::vector<std::size_t>>& groups,
                         const std::vector<std::string>& labels) {
  const std::size_t M = data.num_types(), J = data.num_times(), N = data.num_barcodes();
  std::vector<int> seen(M, 0);
  for (const auto& g : groups) {
    if (g.empty()) throw DomainError("lumping: empty group");
    for (std::size_t m : g) {
      if (m >= M) throw DomainError("lumping: type index " + std::to_string(m) + " out of range");
      if (seen[m]++) throw DomainError("lumping: type '" + data.cell_types[m] + "' appears twice");
    }
  }
  if (!labels.empty() && labels.size() != groups.size())
    throw DomainError("lumping: " + std::to_string(labels.size()) + " labels for " + std::to_string(groups.size()) +
                      " groups");

  const std::size_t G = groups.size();
  ReadDataset out;
  out.barcode_ids = data.barcode_ids;
  out.times = data.times;
  for (std::size_t g = 0; g < G; ++g) {
    if (!labels.empty()) {
      out.cell_types.push_back(labels[g]);
      continue;
    }
    std::string name;
    for (std::size_t m : groups[g]) name += (name.empty() ? "" : "+") + data.cell_types[m];
    out.cell_types.push_back(name);
  }
  out.reads.assign(N * J * G, 0);
  out.B.assign(J * G, 0.0);
  out.b.assign(J * G, 0.0);
  for (std::size_t j = 0; j < J; ++j) {
    for (std::size_t g = 0; g < G; ++g) {
      for (std::size_t m : groups[g]) {
        out.B[j * G + g] += data.B[j * M + m];
        out.b[j * G + g] += data.b[j * M + m];
        for (std::size_t p = 0; p < N; ++p) out.read(p, j, g) += data.read(p, j, m);
      }
    }
  }
  return out;
}

StudyResult simulation_study(const StudySpec& spec) {
  if (spec.replicates == 0) throw DomainError("study: replicates must be positive");
  const ParameterCodec codec(spec.fitted, spec.fit_base, spec.mask);
  StudyResult result;
  result.names = codec.free_names();

  // Relative errors only make sense when the fitted model has the generating
  // model's parameters.
  std::vector<double> truth(result.names.size(), kNaN);
  const bool same_shape = spec.lumping.empty() && spec.generating.progenitors == spec.fitted.progenitors &&
                          spec.generating.matures == spec.fitted.matures && spec.generating.parent == spec.fitted.parent;
  if (same_shape) truth = codec.free_values(spec.truth);

  SimConfig sim;
  sim.n_lineages = spec.n_lineages;
  sim.obs_times = spec.obs_times.empty() ? default_obs_times() : spec.obs_times;
  sim.sample_sizes = spec.sample_sizes.empty() ? std::vector<double>(spec.generating.num_matures(), 1e4)
                                               : spec.sample_sizes;
  sim.read_filter_threshold = spec.read_filter_threshold;

  for (std::size_t r = 0; r < spec.replicates; ++r) {
    sim.seed = Rng(spec.seed, r, kStudySimStream)();
    ReadDataset data = simulate_dataset(spec.generating, spec.truth, sim);
    if (!spec.lumping.empty()) data = lump_dataset(data, spec.lumping, spec.fitted.matures);
    FitConfig fc = spec.fit;
    fc.seed = Rng(spec.seed, r, kStudyFitStream)();
    const FitResult f = fit(spec.fitted, data, fc, spec.mask, spec.fit_base);
    result.estimates.push_back(codec.free_values(f.theta_hat));
    result.objectives.push_back(f.objective);
  }

  for (std::size_t k = 0; k < result.names.size(); ++k) {
    std::vector<double> col, rel;
    for (const auto& row : result.estimates) {
      col.push_back(row[k]);
      rel.push_back((row[k] - truth[k]) / truth[k]);
    }
    ParamSummary s;
    s.name = result.names[k];
    s.truth = truth[k];
    s.median = median(col);
    s.mad = mad(col);
    s.sd = sample_sd(col);
    s.median_rel_error = same_shape ? median(rel) : kNaN;
    s.mad_rel_error = same_shape ? mad(rel) : kNaN;
    s.sd_rel_error = same_shape ? sample_sd(rel) : kNaN;
    result.summary.push_back(s);
  }
  result.objective_median = median(result.objectives);
  result.objective_mad = mad(result.objectives);
  result.objective_sd = sample_sd(result.objectives);
  return result;
}

}  // namespace branchmoments
