#include "branchmoments/moments.hpp"

#include <cmath>

namespace branchmoments {

std::vector<std::pair<std::size_t, std::size_t>> mature_pairs(std::size_t num_matures) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t m = 0; m < num_matures; ++m) {
    for (std::size_t n = m + 1; n < num_matures; ++n) out.emplace_back(m, n);
  }
  return out;
}

KappaTables kappa_tables(const ModelTopology& topology, const Params& params) {
  const std::size_t C = topology.num_compartments();
  KappaTables k;
  k.first = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(C));
  k.second.assign(C, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(C)));
  // u_i(s) = sum_r rate_r * prod_j s_j^{o_rj} - (sum_r rate_r) * s_i over reactions r of parent i.
  for (const auto& r : build_reactions(topology, params)) {
    const auto i = static_cast<Eigen::Index>(r.parent);
    std::vector<int> offspring = r.delta;
    offspring[r.parent] += 1;
    k.first(i, i) -= r.rate_per_cell;
    for (std::size_t j = 0; j < C; ++j) {
      if (offspring[j] == 0) continue;
      const auto jj = static_cast<Eigen::Index>(j);
      k.first(i, jj) += r.rate_per_cell * offspring[j];
      for (std::size_t l = 0; l < C; ++l) {
        const int factor = (l == j) ? offspring[j] - 1 : offspring[l];
        if (factor != 0) k.second[r.parent](jj, static_cast<Eigen::Index>(l)) += r.rate_per_cell * offspring[j] * factor;
      }
    }
  }
  return k;
}

MomentSet::MomentSet(std::size_t num_compartments, std::size_t num_matures)
    : compartments_(num_compartments),
      matures_(num_matures),
      mean_(num_compartments * num_matures),
      second_(num_compartments * num_matures * (num_matures + 1) / 2) {}

MomentSet build_moment_set(const ModelTopology& topology, const Params& params, const MomentOptions& options) {
  const auto parent = topology.parent_indices();
  if (auto errors = validate_params(topology, params); !errors.empty()) throw DomainError(errors.front());

  const std::size_t M = topology.num_matures();
  MomentSet set(topology.num_compartments(), M);
  set.kappas = kappa_tables(topology, params);

  // lambda - sum nu, exact in double-double so every term sees the same rate.
  DoubleDouble kappa00(params.lambda);
  for (double nu : params.nu_prog) kappa00 = kappa00 - DoubleDouble(nu);
  const double kappa0_00 = 2.0 * params.lambda;

  // Matures only die: M_{m|m} = e^{-mu_m t}; U_{..|m} = 0.
  for (std::size_t m = 0; m < M; ++m) {
    set.M(m, topology.mature_compartment(m)) = ExpSum::exponential(-params.mu_mat[m]);
  }

  // Progenitor sources.
  for (std::size_t m = 0; m < M; ++m) {
    const std::size_t a = parent[m];
    const std::size_t ca = topology.progenitor_compartment(a);
    set.M(m, ca) = solve_linear_ode(-params.mu_prog[a], params.nu_mat[m] * set.M(m, topology.mature_compartment(m)), 0.0);
  }
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t n = m; n < M; ++n) {
      if (parent[m] != parent[n]) continue;
      const std::size_t a = parent[m];
      const std::size_t ca = topology.progenitor_compartment(a);
      // kappa_{a,am} M_{n|a} M_{m|m} + kappa_{a,an} M_{m|a} M_{n|n}; for m == n this is 2 nu_m M_{m|a} M_{m|m}.
      ExpSum forcing = params.nu_mat[m] * (set.M(n, ca) * set.M(m, topology.mature_compartment(m))) +
                       params.nu_mat[n] * (set.M(m, ca) * set.M(n, topology.mature_compartment(n)));
      set.U(m, n, ca) = solve_linear_ode(-params.mu_prog[a], forcing, 0.0);
    }
  }

  // HSC source.
  for (std::size_t m = 0; m < M; ++m) {
    const std::size_t a = parent[m];
    set.M(m, 0) = solve_linear_ode(kappa00, params.nu_prog[a] * set.M(m, topology.progenitor_compartment(a)), 0.0);
  }
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t n = m; n < M; ++n) {
      const double cross = (m != n && options.doubled_hsc_cross_term) ? 2.0 * kappa0_00 : kappa0_00;
      ExpSum forcing = cross * (set.M(m, 0) * set.M(n, 0));
      if (parent[m] == parent[n]) {
        const std::size_t a = parent[m];
        forcing += params.nu_prog[a] * set.U(m, n, topology.progenitor_compartment(a));
      }
      set.U(m, n, 0) = solve_linear_ode(kappa00, forcing, 0.0);
    }
  }
  return set;
}

LatentMoments latent_moments(const MomentSet& mset, std::span<const double> pi, double t) {
  const std::size_t M = mset.num_matures();
  const std::size_t K = pi.size();
  const auto MM = static_cast<Eigen::Index>(M);
  Eigen::MatrixXd means(MM, static_cast<Eigen::Index>(K));
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t k = 0; k < K; ++k) means(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = mset.M(m, k)(t);
  }
  const Eigen::Map<const Eigen::VectorXd> w(pi.data(), static_cast<Eigen::Index>(K));

  LatentMoments out;
  out.mean = means * w;
  out.cov.resize(MM, MM);
  out.second.resize(MM);
  // Law of total (co)variance: sum_k pi_k E[X_m X_n | k] - E[X_m] E[X_n], with
  // E[X_m X_n | k] = U_mn|k + 1{m=n} M_m|k.
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t n = m; n < M; ++n) {
      double mixed = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        double e = mset.U(m, n, k)(t);
        if (m == n) e += means(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
        mixed += pi[k] * e;
      }
      const auto mi = static_cast<Eigen::Index>(m);
      const auto ni = static_cast<Eigen::Index>(n);
      if (m == n) out.second(mi) = mixed;
      out.cov(mi, ni) = out.cov(ni, mi) = mixed - out.mean(mi) * out.mean(ni);
    }
  }
  return out;
}

ObservedMoments observed_moments(const LatentMoments& latent, std::span<const double> b, std::span<const double> B) {
  const auto M = static_cast<std::size_t>(latent.mean.size());
  if (b.size() != M || B.size() != M) throw DomainError("sample sizes and CBC totals must have one entry per mature type");
  for (std::size_t m = 0; m < M; ++m) {
    if (B[m] < 2.0) throw DomainError("CBC total B_m must be at least 2");
    if (b[m] > B[m]) throw DomainError("sample size b_m exceeds CBC total B_m");
    if (b[m] < 0.0) throw DomainError("sample size b_m must be nonnegative");
  }
  ObservedMoments out;
  out.num_matures = M;
  const auto MM = static_cast<Eigen::Index>(M);
  out.mean.resize(MM);
  out.var.resize(MM);
  out.cov.resize(MM, MM);
  for (std::size_t m = 0; m < M; ++m) {
    const auto mi = static_cast<Eigen::Index>(m);
    const double bm = b[m];
    const double Bm = B[m];
    out.mean(mi) = bm / Bm * latent.mean(mi);
    out.var(mi) = bm * (Bm - bm) / (Bm * (Bm - 1.0)) * latent.mean(mi) -
                  bm * (Bm - bm) / (Bm * Bm * (Bm - 1.0)) * latent.second(mi) + bm * bm / (Bm * Bm) * latent.cov(mi, mi);
  }
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t n = 0; n < M; ++n) {
      const auto mi = static_cast<Eigen::Index>(m);
      const auto ni = static_cast<Eigen::Index>(n);
      out.cov(mi, ni) = m == n ? out.var(mi) : b[m] * b[n] / (B[m] * B[n]) * latent.cov(mi, ni);
    }
  }
  if (!out.mean.allFinite() || !out.cov.allFinite()) throw DomainError("moments are not finite");
  out.corr.assign(M * M, std::nullopt);
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t n = 0; n < M; ++n) {
      const double vm = out.var(static_cast<Eigen::Index>(m));
      const double vn = out.var(static_cast<Eigen::Index>(n));
      if (!(vm > 0.0) || !(vn > 0.0)) continue;
      out.corr[m * M + n] = m == n ? 1.0 : out.cov(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)) / std::sqrt(vm * vn);
    }
  }
  return out;
}

CorrTable::CorrTable(std::size_t num_matures, std::vector<double> obs_times)
    : pairs(mature_pairs(num_matures)), times(std::move(obs_times)), values(pairs.size() * times.size()) {}

CorrTable model_correlations(const MomentSet& mset, std::span<const double> pi, std::span<const double> times,
                             std::span<const double> b, std::span<const double> B_per_time) {
  const std::size_t M = mset.num_matures();
  if (B_per_time.size() != times.size() * M) throw DomainError("B_per_time must be J x M");
  if (b.size() != M && b.size() != times.size() * M) throw DomainError("b must have M or J x M entries");
  CorrTable table(M, std::vector<double>(times.begin(), times.end()));
  for (std::size_t j = 0; j < times.size(); ++j) {
    const auto latent = latent_moments(mset, pi, times[j]);
    const auto bj = b.size() == M ? b : b.subspan(j * M, M);
    const auto observed = observed_moments(latent, bj, B_per_time.subspan(j * M, M));
    for (std::size_t p = 0; p < table.pairs.size(); ++p) {
      table.at(p, j) = observed.correlation(table.pairs[p].first, table.pairs[p].second);
    }
  }
  return table;
}

CorrTable model_correlations(const ModelTopology& topology, const Params& params, std::span<const double> times,
                             std::span<const double> b, std::span<const double> B_per_time, const MomentOptions& options) {
  const auto mset = build_moment_set(topology, params, options);
  return model_correlations(mset, params.pi, times, b, B_per_time);
}

}  // namespace branchmoments
