#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "branchmoments/model.hpp"
#include "branchmoments/rng.hpp"

namespace branchmoments {

/// Observed read counts y_m^p(t_j) with the CBC totals and sample sizes.
struct ReadDataset {
  std::vector<std::string> barcode_ids;
  std::vector<double> times;
  /// Mature labels, in model order.
  std::vector<std::string> cell_types;
  /// reads[(p * J + j) * M + m]
  std::vector<std::int64_t> reads;
  /// B[j * M + m]
  std::vector<double> B;
  /// b[j * M + m]
  std::vector<double> b;

  std::size_t num_barcodes() const { return barcode_ids.size(); }
  std::size_t num_times() const { return times.size(); }
  std::size_t num_types() const { return cell_types.size(); }
  std::int64_t read(std::size_t p, std::size_t j, std::size_t m) const {
    return reads[(p * times.size() + j) * cell_types.size() + m];
  }
  std::int64_t& read(std::size_t p, std::size_t j, std::size_t m) {
    return reads[(p * times.size() + j) * cell_types.size() + m];
  }

  /// Copy restricted to the given barcodes (in the given order, repeats allowed).
  ReadDataset subset(std::span<const std::size_t> barcodes) const;
};

enum class ReadFilter {
  /// keep a barcode if some single (type, time) cell reaches the threshold
  MaxCell,
  /// keep a barcode if at some time the reads summed over types reach the threshold
  SumOverTypes,
};

struct SimConfig {
  std::size_t n_lineages = 2000;
  std::vector<double> obs_times;
  std::uint64_t seed = 1;
  /// Initial distribution over (HSC, progenitors); empty means params.pi.
  std::vector<double> pi;
  /// b_m, one per mature type.
  std::vector<double> sample_sizes;
  /// d_m(t_j) as J x M row-major; empty means all ones.
  std::vector<double> pcr;
  double read_filter_threshold = 1000.0;
  ReadFilter filter = ReadFilter::MaxCell;
  std::uint64_t max_events = 10'000'000;
};

/// Gillespie direct-method simulator for one parameter set.
class LineageSimulator {
 public:
  LineageSimulator(const ModelTopology& topology, const Params& params, std::uint64_t max_events = 10'000'000);

  /// State at each observation time, J x C row-major, starting from one cell in
  /// init_compartment. Throws DomainError when the event guard trips.
  std::vector<std::int64_t> run(std::size_t init_compartment, std::span<const double> obs_times, Rng& rng) const;

  std::size_t num_compartments() const { return channels_.size(); }

 private:
  struct Channel {
    double rate;
    // Up to two compartments change per event.
    int first, first_delta, second, second_delta;
  };
  std::vector<std::vector<Channel>> channels_;
  std::vector<double> per_cell_total_;
  std::uint64_t max_events_;
};

std::vector<std::int64_t> simulate_lineage(const ModelTopology& topology, const Params& params,
                                           std::size_t init_compartment, std::span<const double> obs_times, Rng& rng);

/// Latent mature counts of N independent lineages.
struct LatentSample {
  std::size_t num_lineages = 0;
  std::size_t num_times = 0;
  std::size_t num_matures = 0;
  /// counts[(p * J + j) * M + m]
  std::vector<std::int64_t> counts;
  std::vector<std::size_t> initial;

  std::int64_t count(std::size_t p, std::size_t j, std::size_t m) const {
    return counts[(p * num_times + j) * num_matures + m];
  }
};

/// Lineage p uses Rng(seed, p), so results do not depend on the thread count.
LatentSample simulate_latent(const ModelTopology& topology, const Params& params, std::size_t n_lineages,
                             std::span<const double> obs_times, std::uint64_t seed, std::span<const double> pi = {},
                             std::uint64_t max_events = 10'000'000);

/// Univariate hypergeometric: successes among `draws` taken without replacement
/// from `population` items of which `successes` are marked.
std::int64_t hypergeometric_sample(std::int64_t successes, std::int64_t population, std::int64_t draws, Rng& rng);

/// Multivariate hypergeometric draw of `draws` items from the given class sizes,
/// by a chain of univariate draws. Throws DomainError if draws > sum.
std::vector<std::int64_t> mvhypergeom_sample(std::span<const std::int64_t> population, std::int64_t draws, Rng& rng);

/// Full observation pipeline: latent simulation, CBC totals, hypergeometric
/// sampling of b_m cells per (m, t_j), PCR scaling with round-half-to-even, and
/// the read filter. Deterministic given config.seed.
ReadDataset simulate_dataset(const ModelTopology& topology, const Params& params, const SimConfig& config);

/// Sampling and filtering stages applied to an existing latent sample.
ReadDataset observe(const ModelTopology& topology, const LatentSample& latent, std::span<const double> times,
                    const SimConfig& config);

bool passes_read_filter(const ReadDataset& data, std::size_t barcode, double threshold, ReadFilter filter);

}  // namespace branchmoments
