#include <algorithm>
#include <cmath>

#include "branchmoments/moments.hpp"
#include "branchmoments/ode_oracle.hpp"
#include "branchmoments/rng.hpp"

namespace branchmoments {

double max_relative_error(const ModelTopology& topology, const Params& params, std::span<const double> t_grid,
                          double floor, const OracleTolerances& tolerances) {
  const MomentSet ms = build_moment_set(topology, params);
  const OracleTables orc = ode_oracle(topology, params, t_grid, tolerances);
  const std::size_t M = topology.num_matures(), C = topology.num_compartments();
  double worst = 0.0;
  auto update = [&](double closed, double oracle) {
    worst = std::max(worst, std::abs(closed - oracle) / std::max(std::abs(oracle), floor));
  };
  for (std::size_t j = 0; j < t_grid.size(); ++j)
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t i = 0; i < C; ++i) {
        update(ms.M(m, i)(t_grid[j]), orc.M(j, m, i));
        for (std::size_t n = m; n < M; ++n) update(ms.U(m, n, i)(t_grid[j]), orc.U(j, m, n, i));
      }
  return worst;
}

OracleSuiteReport oracle_suite(const std::vector<std::string>& models, std::size_t draws, std::uint64_t seed,
                               std::span<const double> t_grid) {
  OracleSuiteReport report;
  for (std::size_t k = 0; k < models.size(); ++k) {
    const ModelTopology topo = canonical_model(models[k]);
    const std::size_t A = topo.num_progenitors(), M = topo.num_matures();
    const auto parent = topo.parent_indices();
    Rng rng(seed, k);
    auto draw = [&] { return std::exp(std::log(1e-3) + rng.uniform() * (std::log(50.0) - std::log(1e-3))); };
    for (std::size_t d = 0; d < draws; ++d) {
      Params p;
      p.nu_prog.resize(A);
      p.mu_prog.resize(A);
      p.nu_mat.resize(M);
      p.mu_mat.resize(M);
      for (auto& x : p.nu_prog) x = draw();
      for (auto& x : p.mu_prog) x = draw();
      for (auto& x : p.nu_mat) x = draw();
      for (auto& x : p.mu_mat) x = draw();
      // Keep exp(kappa00 * t) representable over the grid.
      do p.lambda = draw();
      while (p.hsc_net_growth() > 1.0);
      bool coincident = false;
      if (d == 0) {
        p.mu_mat[0] = p.mu_prog[parent[0]];
        coincident = true;
      } else if (d == 1) {
        double nu_sum = 0.0;
        for (double x : p.nu_prog) nu_sum += x;
        // lambda - sum(nu) = -mu_prog[0]
        p.mu_prog[0] = 0.5 * nu_sum;
        p.lambda = 0.5 * nu_sum;
        coincident = true;
      }
      p.pi.assign(A + 1, 1.0 / static_cast<double>(A + 1));
      const double err = max_relative_error(topo, p, t_grid);
      ++report.cases;
      if (coincident) ++report.coincident_cases;
      if (err >= report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_case = "model " + models[k] + " draw " + std::to_string(d);
      }
    }
  }
  return report;
}

}  // namespace branchmoments
