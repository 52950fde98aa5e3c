#include "branchmoments/ode_oracle.hpp"

#include <algorithm>
#include <boost/numeric/odeint.hpp>
#include <cmath>

#include "branchmoments/moments.hpp"

namespace branchmoments {

namespace odeint = boost::numeric::odeint;

double OracleTables::M(std::size_t j, std::size_t m, std::size_t source) const {
  return mean.at(j).at(m * num_compartments + source);
}

double OracleTables::U(std::size_t j, std::size_t m, std::size_t n, std::size_t source) const {
  return second.at(j).at(packed_index(m, n, num_matures) * num_compartments + source);
}

namespace {

struct SparseEntry {
  std::size_t i, j, k;
  double value;
};

class MomentSystem {
 public:
  MomentSystem(const ModelTopology& topology, const Params& params)
      : C_(topology.num_compartments()), M_(topology.num_matures()), P_(M_ * (M_ + 1) / 2) {
    const auto kappa = kappa_tables(topology, params);
    for (std::size_t i = 0; i < C_; ++i) {
      for (std::size_t k = 0; k < C_; ++k) {
        const double v = kappa.first(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        if (v != 0.0) first_.push_back({i, k, 0, v});
        for (std::size_t l = 0; l < C_; ++l) {
          const double w = kappa.second[i](static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
          if (w != 0.0) second_.push_back({i, k, l, w});
        }
      }
    }
  }

  std::size_t size() const { return C_ * M_ + C_ * P_; }

  std::vector<double> initial_state() const {
    std::vector<double> x(size(), 0.0);
    for (std::size_t m = 0; m < M_; ++m) x[m * C_ + (C_ - M_ + m)] = 1.0;
    return x;
  }

  void operator()(const std::vector<double>& x, std::vector<double>& dxdt, double /*t*/) const {
    std::fill(dxdt.begin(), dxdt.end(), 0.0);
    const double* mean = x.data();
    const double* second = x.data() + C_ * M_;
    double* dmean = dxdt.data();
    double* dsecond = dxdt.data() + C_ * M_;
    for (const auto& e : first_) {
      for (std::size_t m = 0; m < M_; ++m) dmean[m * C_ + e.i] += e.value * mean[m * C_ + e.j];
      for (std::size_t p = 0; p < P_; ++p) dsecond[p * C_ + e.i] += e.value * second[p * C_ + e.j];
    }
    for (const auto& e : second_) {
      for (std::size_t m = 0; m < M_; ++m) {
        for (std::size_t n = m; n < M_; ++n) {
          dsecond[packed_index(m, n, M_) * C_ + e.i] += e.value * mean[m * C_ + e.j] * mean[n * C_ + e.k];
        }
      }
    }
  }

  std::size_t C_, M_, P_;

 private:
  std::vector<SparseEntry> first_;
  std::vector<SparseEntry> second_;
};

}  // namespace

OracleTables ode_oracle(const ModelTopology& topology, const Params& params, std::span<const double> t_grid,
                        const OracleTolerances& tolerances) {
  for (std::size_t j = 0; j < t_grid.size(); ++j) {
    if (t_grid[j] < 0.0 || (j > 0 && !(t_grid[j] > t_grid[j - 1]))) {
      throw DomainError("t_grid must be increasing and start at or after 0");
    }
  }
  const MomentSystem system(topology, params);
  OracleTables out;
  out.times.assign(t_grid.begin(), t_grid.end());
  out.num_compartments = system.C_;
  out.num_matures = system.M_;

  auto record = [&](const std::vector<double>& x) {
    out.mean.emplace_back(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(system.C_ * system.M_));
    out.second.emplace_back(x.begin() + static_cast<std::ptrdiff_t>(system.C_ * system.M_), x.end());
  };

  using State = std::vector<double>;
  auto stepper = odeint::make_controlled(tolerances.absolute, tolerances.relative, odeint::runge_kutta_dopri5<State>());
  State x = system.initial_state();
  double t = 0.0;
  double dt = 1e-3;
  std::size_t steps = 0;
  for (double target : t_grid) {
    while (t < target) {
      const bool clipped = dt >= target - t;
      double step = clipped ? target - t : dt;
      if (stepper.try_step(std::cref(system), x, t, step) == odeint::success) {
        ++steps;
        if (clipped) {
          t = target;
          dt = std::max(dt, step);
        } else {
          dt = step;
        }
      } else {
        dt = step;
      }
      if (dt < 1e-14 * std::max(1.0, target)) {
        throw DomainError("ODE oracle: step-size underflow at t = " + std::to_string(t));
      }
      if (steps > tolerances.max_steps) throw DomainError("ODE oracle: step budget exhausted");
    }
    record(x);
  }
  return out;
}

}  // namespace branchmoments
