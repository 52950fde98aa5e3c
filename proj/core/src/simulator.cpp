#include "branchmoments/simulator.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numeric>
#include <sstream>

#include "branchmoments/parallel.hpp"

namespace branchmoments {

namespace {

void check_times(std::span<const double> times) {
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (!(times[j] >= 0.0) || (j > 0 && !(times[j] > times[j - 1]))) {
      throw DomainError("observation times must be nonnegative and strictly increasing");
    }
  }
}

double log_choose(std::int64_t n, std::int64_t k) {
  using boost::math::lgamma;
  return lgamma(static_cast<double>(n) + 1.0) - lgamma(static_cast<double>(k) + 1.0) -
         lgamma(static_cast<double>(n - k) + 1.0);
}

std::size_t draw_categorical(std::span<const double> weights, Rng& rng) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  // Rounding left u just above the last positive weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return 0;
}

}  // namespace

ReadDataset ReadDataset::subset(std::span<const std::size_t> barcodes) const {
  ReadDataset out;
  out.times = times;
  out.cell_types = cell_types;
  out.B = B;
  out.b = b;
  const std::size_t stride = times.size() * cell_types.size();
  out.reads.reserve(barcodes.size() * stride);
  for (std::size_t p : barcodes) {
    out.barcode_ids.push_back(barcode_ids.at(p));
    out.reads.insert(out.reads.end(), reads.begin() + static_cast<std::ptrdiff_t>(p * stride),
                     reads.begin() + static_cast<std::ptrdiff_t>((p + 1) * stride));
  }
  return out;
}

LineageSimulator::LineageSimulator(const ModelTopology& topology, const Params& params, std::uint64_t max_events)
    : channels_(topology.num_compartments()), per_cell_total_(topology.num_compartments(), 0.0), max_events_(max_events) {
  for (const auto& r : build_reactions(topology, params)) {
    if (r.rate_per_cell <= 0.0) continue;
    Channel ch{r.rate_per_cell, -1, 0, -1, 0};
    for (std::size_t c = 0; c < r.delta.size(); ++c) {
      if (r.delta[c] == 0) continue;
      if (ch.first < 0) {
        ch.first = static_cast<int>(c);
        ch.first_delta = r.delta[c];
      } else {
        ch.second = static_cast<int>(c);
        ch.second_delta = r.delta[c];
      }
    }
    channels_[r.parent].push_back(ch);
    per_cell_total_[r.parent] += r.rate_per_cell;
  }
}

std::vector<std::int64_t> LineageSimulator::run(std::size_t init_compartment, std::span<const double> obs_times,
                                                Rng& rng) const {
  const std::size_t C = channels_.size();
  if (init_compartment >= C) throw DomainError("initial compartment out of range");
  std::vector<std::int64_t> state(C, 0);
  state[init_compartment] = 1;
  std::vector<std::int64_t> out;
  out.reserve(obs_times.size() * C);

  double t = 0.0;
  std::size_t next_obs = 0;
  std::uint64_t events = 0;
  while (next_obs < obs_times.size()) {
    double total = 0.0;
    for (std::size_t c = 0; c < C; ++c) total += static_cast<double>(state[c]) * per_cell_total_[c];
    const double t_next = total > 0.0 ? t + rng.exponential(total) : HUGE_VAL;
    while (next_obs < obs_times.size() && obs_times[next_obs] < t_next) {
      out.insert(out.end(), state.begin(), state.end());
      ++next_obs;
    }
    if (next_obs == obs_times.size()) break;

    if (++events > max_events_) {
      std::ostringstream msg;
      msg << "lineage exceeded " << max_events_ << " events by t = " << t << " (counts:";
      for (auto v : state) msg << ' ' << v;
      msg << ")";
      throw DomainError(msg.str());
    }
    t = t_next;
    double u = rng.uniform() * total;
    std::size_t c = 0;
    for (; c + 1 < C; ++c) {
      const double w = static_cast<double>(state[c]) * per_cell_total_[c];
      if (u < w) break;
      u -= w;
    }
    while (c > 0 && (state[c] == 0 || channels_[c].empty())) --c;  // rounding fallback
    const auto& channels = channels_[c];
    double v = u / static_cast<double>(state[c]);
    std::size_t k = 0;
    for (; k + 1 < channels.size(); ++k) {
      if (v < channels[k].rate) break;
      v -= channels[k].rate;
    }
    const Channel& ch = channels[k];
    state[static_cast<std::size_t>(ch.first)] += ch.first_delta;
    if (ch.second >= 0) state[static_cast<std::size_t>(ch.second)] += ch.second_delta;
  }
  return out;
}

std::vector<std::int64_t> simulate_lineage(const ModelTopology& topology, const Params& params,
                                           std::size_t init_compartment, std::span<const double> obs_times, Rng& rng) {
  check_times(obs_times);
  if (init_compartment >= topology.num_initial()) throw DomainError("lineages start in the HSC or a progenitor");
  return LineageSimulator(topology, params).run(init_compartment, obs_times, rng);
}

LatentSample simulate_latent(const ModelTopology& topology, const Params& params, std::size_t n_lineages,
                             std::span<const double> obs_times, std::uint64_t seed, std::span<const double> pi,
                             std::uint64_t max_events) {
  check_times(obs_times);
  if (auto errors = validate_params(topology, params); !errors.empty()) throw DomainError(errors.front());
  const std::vector<double> weights = pi.empty() ? params.pi : std::vector<double>(pi.begin(), pi.end());
  if (weights.size() != topology.num_initial()) throw DomainError("pi must have one entry per initial compartment");

  const LineageSimulator sim(topology, params, max_events);
  LatentSample out;
  out.num_lineages = n_lineages;
  out.num_times = obs_times.size();
  out.num_matures = topology.num_matures();
  out.counts.assign(n_lineages * out.num_times * out.num_matures, 0);
  out.initial.assign(n_lineages, 0);
  const std::size_t C = topology.num_compartments();
  const std::size_t first_mature = topology.mature_compartment(0);
  parallel_for(n_lineages, [&](std::size_t p) {
    Rng rng(seed, p);
    const std::size_t init = draw_categorical(weights, rng);
    const auto states = sim.run(init, obs_times, rng);
    out.initial[p] = init;
    for (std::size_t j = 0; j < out.num_times; ++j) {
      for (std::size_t m = 0; m < out.num_matures; ++m) {
        out.counts[(p * out.num_times + j) * out.num_matures + m] = states[j * C + first_mature + m];
      }
    }
  });
  return out;
}

std::int64_t hypergeometric_sample(std::int64_t successes, std::int64_t population, std::int64_t draws, Rng& rng) {
  if (successes < 0 || draws < 0 || successes > population || draws > population) {
    throw DomainError("invalid hypergeometric arguments");
  }
  if (draws == 0 || successes == 0) return 0;
  if (draws == population) return successes;
  if (successes == population) return draws;

  const std::int64_t K = successes, N = population, n = draws;
  const std::int64_t lo = std::max<std::int64_t>(0, n - (N - K));
  const std::int64_t hi = std::min(K, n);
  const std::int64_t mode = std::clamp<std::int64_t>((n + 1) * (K + 1) / (N + 2), lo, hi);
  const double p_mode = std::exp(log_choose(K, mode) + log_choose(N - K, n - mode) - log_choose(N, n));

  // p(k+1)/p(k) = (K-k)(n-k) / ((k+1)(N-K-n+k+1))
  auto up_ratio = [&](std::int64_t k) {
    return static_cast<double>(K - k) * static_cast<double>(n - k) /
           (static_cast<double>(k + 1) * static_cast<double>(N - K - n + k + 1));
  };
  // Inversion over the fixed order mode, mode+1, mode-1, mode+2, ...
  for (;;) {
    double u = rng.uniform();
    u -= p_mode;
    if (u < 0.0) return mode;
    std::int64_t up = mode, down = mode;
    double p_up = p_mode, p_down = p_mode;
    while (up < hi || down > lo) {
      if (up < hi) {
        p_up *= up_ratio(up);
        ++up;
        u -= p_up;
        if (u < 0.0) return up;
      }
      if (down > lo) {
        p_down /= up_ratio(down - 1);
        --down;
        u -= p_down;
        if (u < 0.0) return down;
      }
    }
    // The computed probabilities summed to slightly less than one; draw again.
  }
}

std::vector<std::int64_t> mvhypergeom_sample(std::span<const std::int64_t> population, std::int64_t draws, Rng& rng) {
  std::int64_t remaining_total = 0;
  for (auto x : population) {
    if (x < 0) throw DomainError("negative class size");
    remaining_total += x;
  }
  if (draws < 0 || draws > remaining_total) throw DomainError("sample size exceeds population");
  std::vector<std::int64_t> out(population.size(), 0);
  std::int64_t remaining_draws = draws;
  for (std::size_t p = 0; p < population.size() && remaining_draws > 0; ++p) {
    if (population[p] == 0) continue;
    const std::int64_t k = hypergeometric_sample(population[p], remaining_total, remaining_draws, rng);
    out[p] = k;
    remaining_total -= population[p];
    remaining_draws -= k;
  }
  return out;
}

bool passes_read_filter(const ReadDataset& data, std::size_t barcode, double threshold, ReadFilter filter) {
  for (std::size_t j = 0; j < data.num_times(); ++j) {
    double sum = 0.0;
    for (std::size_t m = 0; m < data.num_types(); ++m) {
      const auto y = static_cast<double>(data.read(barcode, j, m));
      if (filter == ReadFilter::MaxCell && y >= threshold) return true;
      sum += y;
    }
    if (filter == ReadFilter::SumOverTypes && sum >= threshold) return true;
  }
  return false;
}

ReadDataset observe(const ModelTopology& topology, const LatentSample& latent, std::span<const double> times,
                    const SimConfig& config) {
  const std::size_t N = latent.num_lineages, J = latent.num_times, M = latent.num_matures;
  if (times.size() != J) throw DomainError("times do not match the latent sample");
  if (config.sample_sizes.size() != M) throw DomainError("sample_sizes must have one entry per mature type");
  if (!config.pcr.empty() && config.pcr.size() != J * M) throw DomainError("pcr constants must be J x M");

  ReadDataset full;
  full.times.assign(times.begin(), times.end());
  full.cell_types = topology.matures;
  full.B.assign(J * M, 0.0);
  full.b.assign(J * M, 0.0);
  full.reads.assign(N * J * M, 0);
  for (std::size_t p = 0; p < N; ++p) full.barcode_ids.push_back(std::to_string(p));

  for (std::size_t j = 0; j < J; ++j) {
    for (std::size_t m = 0; m < M; ++m) {
      std::int64_t total = 0;
      for (std::size_t p = 0; p < N; ++p) total += latent.count(p, j, m);
      full.B[j * M + m] = static_cast<double>(total);
      const double bm = config.sample_sizes[m];
      if (bm < 0.0 || bm != std::floor(bm)) throw DomainError("sample sizes must be nonnegative integers");
      full.b[j * M + m] = bm;
      if (bm > static_cast<double>(total)) {
        std::ostringstream msg;
        msg << "sample size " << bm << " exceeds CBC total " << total << " for cell type '" << topology.matures[m]
            << "' at time index " << j << " (t = " << times[j] << ")";
        throw DomainError(msg.str());
      }
    }
  }

  parallel_for(J * M, [&](std::size_t cell) {
    const std::size_t j = cell / M, m = cell % M;
    std::vector<std::int64_t> column(N);
    for (std::size_t p = 0; p < N; ++p) column[p] = latent.count(p, j, m);
    Rng rng(config.seed, cell, 1);
    const auto sampled = mvhypergeom_sample(column, static_cast<std::int64_t>(config.sample_sizes[m]), rng);
    const double d = config.pcr.empty() ? 1.0 : config.pcr[cell];
    for (std::size_t p = 0; p < N; ++p) {
      full.read(p, j, m) = static_cast<std::int64_t>(std::nearbyint(d * static_cast<double>(sampled[p])));
    }
  });

  std::vector<std::size_t> keep;
  for (std::size_t p = 0; p < N; ++p) {
    if (passes_read_filter(full, p, config.read_filter_threshold, config.filter)) keep.push_back(p);
  }
  if (keep.size() == N) return full;
  return full.subset(keep);
}

ReadDataset simulate_dataset(const ModelTopology& topology, const Params& params, const SimConfig& config) {
  const auto latent =
      simulate_latent(topology, params, config.n_lineages, config.obs_times, config.seed, config.pi, config.max_events);
  return observe(topology, latent, config.obs_times, config);
}

}  // namespace branchmoments
