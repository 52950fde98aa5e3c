// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "branchmoments/estimator.hpp"
#include "branchmoments/io.hpp"
#include "branchmoments/moments.hpp"
#include "branchmoments/ode_oracle.hpp"
#include "branchmoments/simulator.hpp"
#include "branchmoments/validation.hpp"
#include "four_type.hpp"
#include "gof.hpp"
#include "tempdir.hpp"

using namespace branchmoments;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

// --- 1 ----------------------------------------------------------------------

Outcome oracle_equivalence() {
  const std::vector<double> grid = {0.5, 1, 2, 5, 10, 30};
  const auto report = oracle_suite({"a", "c", "f"}, 20, 1, grid);
  Outcome o;
  o.pass = report.max_rel_error <= 1e-6 && report.cases == 60 && report.coincident_cases >= 2;
  o.detail = "max rel err " + fmt(report.max_rel_error) + " over " + std::to_string(report.cases) + " draws (" +
             std::to_string(report.coincident_cases) + " with coincident rates); worst " + report.worst_case;
  return o;
}

// --- 2 ----------------------------------------------------------------------

Outcome four_type_fixture() {
  using four_type::R;
  const auto t = four_type::topology();
  const auto grid = four_type::grid(50, 2024);
  double worst = 0;
  for (const auto& r : grid) {
    const auto ms = build_moment_set(t, four_type::params(r));
    for (double time : four_type::grid_times()) {
      const std::pair<R, double> pairs[] = {
          {four_type::U33_2(r, time), ms.U(0, 0, 1)(time)}, {four_type::U44_2(r, time), ms.U(1, 1, 1)(time)},
          {four_type::U34_2(r, time), ms.U(0, 1, 1)(time)}, {four_type::U33_1(r, time), ms.U(0, 0, 0)(time)},
          {four_type::U44_1(r, time), ms.U(1, 1, 0)(time)}, {four_type::U34_1(r, time), ms.U(0, 1, 0)(time)}};
      for (const auto& [formula, engine] : pairs) {
        const double rel = static_cast<double>(std::abs(formula - engine) / std::max(std::abs(formula), R(1e-300)));
        worst = std::max(worst, rel);
      }
    }
  }
  return {worst <= 1e-9 && grid.size() >= 50,
          "six formulas, " + std::to_string(grid.size()) + " rate draws x " +
              std::to_string(four_type::grid_times().size()) + " times, max rel err " + fmt(worst)};
}

// --- 3 ----------------------------------------------------------------------

struct Sample {
  std::vector<std::vector<double>> cols;  // per type
};

// Largest |sample - model| / standard error over means, variances and covariances.
double worst_z(const Sample& s, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const std::size_t M = s.cols.size();
  const double n = static_cast<double>(s.cols[0].size());
  std::vector<double> mu(M, 0.0);
  for (std::size_t m = 0; m < M; ++m) {
    for (double x : s.cols[m]) mu[m] += x;
    mu[m] /= n;
  }
  double worst = 0;
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t k = m; k < M; ++k) {
      double c = 0, c2 = 0;
      for (std::size_t p = 0; p < s.cols[m].size(); ++p) {
        const double v = (s.cols[m][p] - mu[m]) * (s.cols[k][p] - mu[k]);
        c += v;
        c2 += v * v;
      }
      c /= n;
      const double se = std::sqrt((c2 / n - c * c) / n);
      worst = std::max(worst, std::abs(c - cov(m, k)) / se);
    }
    double var = 0;
    for (double x : s.cols[m]) var += (x - mu[m]) * (x - mu[m]);
    var /= n;
    worst = std::max(worst, std::abs(mu[m] - mean(m)) / std::sqrt(var / n));
  }
  return worst;
}

Outcome monte_carlo() {
  const auto t = canonical_model("a");
  const auto p = canonical_truth("a");
  const std::vector<double> times = {5.0, 10.0};
  const std::size_t N = 200000;
  const auto latent = simulate_latent(t, p, N, times, 31);
  SimConfig cfg;
  cfg.sample_sizes = {1e4, 1e4, 1e4};
  cfg.read_filter_threshold = 0;
  cfg.seed = 32;
  const auto reads = observe(t, latent, times, cfg);
  const auto ms = build_moment_set(t, p);

  double latent_z = 0, observed_z = 0;
  for (std::size_t j = 0; j < times.size(); ++j) {
    Sample x, y;
    x.cols.assign(3, std::vector<double>(N));
    y.cols.assign(3, std::vector<double>(N));
    std::vector<double> B(3, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t m = 0; m < 3; ++m) {
        x.cols[m][i] = static_cast<double>(latent.count(i, j, m));
        y.cols[m][i] = static_cast<double>(reads.read(i, j, m));
        B[m] += x.cols[m][i];
      }
    }
    const auto lm = latent_moments(ms, p.pi, times[j]);
    latent_z = std::max(latent_z, worst_z(x, lm.mean, lm.cov));
    const auto om = observed_moments(lm, cfg.sample_sizes, B);
    observed_z = std::max(observed_z, worst_z(y, om.mean, om.cov));
  }
  return {latent_z <= 4 && observed_z <= 4,
          "200000 lineages, t in {5, 10}: worst latent |z| " + fmt(latent_z) + ", worst observed |z| " + fmt(observed_z)};
}

// --- 4 ----------------------------------------------------------------------

Outcome recovery() {
  const auto t = canonical_model("a");
  const auto truth = canonical_truth("a");
  SimConfig sc;
  sc.n_lineages = 2000;
  sc.obs_times = default_obs_times();
  sc.sample_sizes = {1e4, 1e4, 1e4};
  sc.read_filter_threshold = 0;
  sc.seed = 41;
  const auto data = simulate_dataset(t, truth, sc);
  FitConfig fc;
  fc.n_restarts = 50;
  fc.seed = 42;
  const auto mask = ParamMask::deaths_fixed(t);
  const auto result = fit(t, data, fc, mask, truth);
  const ParameterCodec codec(t, truth, mask);
  const auto names = codec.free_names();
  const auto est = codec.free_values(result.theta_hat);
  const auto ref = codec.free_values(truth);
  bool ok = true;
  std::ostringstream d;
  d << "rel errors:";
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double rel = std::abs(est[i] - ref[i]) / std::abs(ref[i]);
    ok = ok && rel <= 0.25;
    d << " " << names[i] << "=" << fmt(rel);
  }
  d << " (objective " << fmt(result.objective) << ", loss at truth "
    << fmt(evaluate_loss(t, truth, correlation_data(data), fc)) << ")";
  return {ok, d.str()};
}

// --- 5 ----------------------------------------------------------------------

Outcome misspecification() {
  const auto gen = canonical_model("c");
  SimConfig sc;
  sc.n_lineages = 2000;
  sc.obs_times = default_obs_times();
  sc.sample_sizes.assign(5, 1000);
  sc.read_filter_threshold = 0;
  sc.seed = 51;
  const auto data = simulate_dataset(gen, canonical_truth("c"), sc);
  FitConfig fc;
  fc.n_restarts = 50;
  fc.seed = 52;
  const auto one = canonical_model("b");
  const auto wrong = fit(one, data, fc, ParamMask::deaths_fixed(one), canonical_truth("b"));
  const auto right = fit(gen, data, fc, ParamMask::deaths_fixed(gen), canonical_truth("c"));
  const double ratio = wrong.objective / right.objective;
  return {ratio >= 100, "one-progenitor loss " + fmt(wrong.objective) + ", two-progenitor loss " +
                            fmt(right.objective) + ", ratio " + fmt(ratio)};
}

// --- 6 ----------------------------------------------------------------------

Outcome cv_self_consistency() {
  const auto gen = canonical_model("c");
  const auto one = canonical_model("b");
  int wins = 0;
  std::ostringstream d;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SimConfig sc;
    sc.n_lineages = 2000;
    sc.obs_times = default_obs_times();
    sc.sample_sizes.assign(5, 1000);
    sc.read_filter_threshold = 0;
    sc.seed = 600 + seed;
    const auto data = simulate_dataset(gen, canonical_truth("c"), sc);
    std::vector<CVCandidate> candidates = {
        {"b", one, ParamMask::deaths_fixed(one), canonical_truth("b"), {}},
        {"c", gen, ParamMask::deaths_fixed(gen), canonical_truth("c"), {}}};
    FitConfig fc;
    fc.n_restarts = 10;
    fc.seed = seed;
    CVConfig cc;
    cc.folds = 5;
    cc.seed = seed;
    const auto res = cross_validate(candidates, data, fc, cc);
    const bool c_first = res[1].mean_objective < res[0].mean_objective;
    wins += c_first;
    d << " seed " << seed << ": b " << fmt(res[0].mean_objective) << " c " << fmt(res[1].mean_objective) << ";";
  }
  return {wins >= 4, "(c) ranked first in " + std::to_string(wins) + "/5 seeds;" + d.str()};
}

// --- 7 ----------------------------------------------------------------------

Outcome sampler() {
  const auto g = gof::mvhypergeom({5, 3, 2}, 4, 100000, 71);
  SimConfig sc;
  sc.n_lineages = 2000;
  sc.obs_times = default_obs_times();
  sc.sample_sizes = {1e4, 1e4, 1e4};
  sc.read_filter_threshold = 0;
  sc.seed = 72;
  const auto data = simulate_dataset(canonical_model("a"), canonical_truth("a"), sc);
  bool sums = true;
  for (std::size_t j = 0; j < data.num_times(); ++j) {
    for (std::size_t m = 0; m < 3; ++m) {
      std::int64_t total = 0;
      for (std::size_t p = 0; p < data.num_barcodes(); ++p) total += data.read(p, j, m);
      sums = sums && total == static_cast<std::int64_t>(sc.sample_sizes[m]);
    }
  }
  return {g.p_value > 0.001 && sums, "chi-square " + fmt(g.statistic) + " on " + std::to_string(g.cells - 1) +
                                         " df, p = " + fmt(g.p_value) + "; column sums " +
                                         (sums ? "equal b" : "DIFFER from b")};
}

// --- 8 ----------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int tool(const std::string& threads, const std::string& args) {
  const std::string cmd = "BRANCHMOMENTS_THREADS=" + threads + " '" + BRANCHMOMENTS_TOOL + "' " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

Outcome determinism() {
  TempDir root("determinism");
  const std::string model = std::string(BRANCHMOMENTS_SOURCE_DIR) + "/models/model_a.json";
  const std::vector<std::pair<std::string, std::string>> runs = {{"run1", "8"}, {"run2", "8"}, {"run3", "1"}};
  for (const auto& [name, threads] : runs) {
    const fs::path sim = root / (name + "_sim"), fit = root / (name + "_fit");
    if (tool(threads, "simulate --model '" + model + "' --n 2000 --seed 7 --out '" + sim.string() + "'") != 0 ||
        tool(threads, "fit --model '" + model + "' --reads '" + (sim / "reads.csv").string() + "' --cbc '" +
                          (sim / "cbc.csv").string() + "' --restarts 8 --seed 7 --out '" + fit.string() + "'") != 0) {
      return {false, "tool failed in " + name};
    }
  }
  std::size_t compared = 0;
  for (const char* stage : {"_sim", "_fit"}) {
    for (const auto& entry : fs::directory_iterator(root / (std::string("run1") + stage))) {
      const auto file = entry.path().filename();
      const auto ref = slurp(entry.path());
      for (const char* other : {"run2", "run3"}) {
        if (slurp(root / (std::string(other) + stage) / file) != ref) {
          return {false, file.string() + " differs between run1 and " + other};
        }
      }
      ++compared;
    }
  }
  return {compared >= 6, std::to_string(compared) + " output files byte-identical across two runs at 8 threads and one at 1"};
}

// --- 9 ----------------------------------------------------------------------

Outcome scale_invariance() {
  const auto t = canonical_model("a");
  const auto truth = canonical_truth("a");
  SimConfig sc;
  sc.n_lineages = 2000;
  sc.obs_times = default_obs_times();
  sc.sample_sizes = {1e4, 1e4, 1e4};
  sc.read_filter_threshold = 0;
  sc.seed = 91;
  const auto data = simulate_dataset(t, truth, sc);
  FitConfig fc;
  const auto base = empirical_correlations(data);
  const double base_loss = evaluate_loss(t, truth, correlation_data(data), fc);
  double worst_corr = 0, worst_loss = 0;
  const std::int64_t factors[] = {3, 1000, 17, 250000};
  for (std::size_t m = 0; m < data.num_types(); ++m) {
    auto scaled = data;
    for (std::size_t p = 0; p < scaled.num_barcodes(); ++p) {
      for (std::size_t j = 0; j < scaled.num_times(); ++j) scaled.read(p, j, m) *= factors[(m + j) % 4];
    }
    const auto after = empirical_correlations(scaled);
    for (std::size_t i = 0; i < base.values.size(); ++i) {
      if (base.values[i].has_value() != after.values[i].has_value()) return {false, "definedness changed"};
      if (base.values[i]) worst_corr = std::max(worst_corr, std::abs(*after.values[i] - *base.values[i]));
    }
    worst_loss = std::max(worst_loss, std::abs(evaluate_loss(t, truth, correlation_data(scaled), fc) - base_loss));
  }
  return {worst_corr <= 1e-12 && worst_loss <= 1e-12,
          "max correlation change " + fmt(worst_corr) + ", max loss change " + fmt(worst_loss)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "oracle equivalence", 30, oracle_equivalence},
      {2, "four-type second-moment fixture", 10, four_type_fixture},
      {3, "Monte Carlo agreement", 300, monte_carlo},
      {4, "recovery at desk scale", 600, recovery},
      {5, "misspecification ordering", 900, misspecification},
      {6, "CV self-consistency", 1800, cv_self_consistency},
      {7, "sampler correctness", 20, sampler},
      {8, "determinism", 0, determinism},
      {9, "scale invariance", 0, scale_invariance},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_seconds > 0 && secs > c.budget_seconds) {
      o.pass = false;
      o.detail += "; over the " + fmt(c.budget_seconds) + " s budget";
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " ("
              << fmt(secs) << " s)" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
