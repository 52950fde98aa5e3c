#include "branchmoments/estimator.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>

#include "branchmoments/parallel.hpp"
#include "branchmoments/rng.hpp"

namespace branchmoments {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// GSL minimizers need finite values; rejected points get this instead of +inf.
constexpr double kRejected = 1e300;

}  // namespace

CorrTable empirical_correlations(const ReadDataset& data) {
  const std::size_t N = data.num_barcodes(), J = data.num_times(), M = data.num_types();
  if (N < 3) throw DomainError("empirical correlations need at least 3 barcodes");
  CorrTable table(M, data.times);
  std::vector<double> mean(M), ss(M);
  std::vector<double> dev(N * M);
  for (std::size_t j = 0; j < J; ++j) {
    for (std::size_t m = 0; m < M; ++m) {
      double s = 0.0;
      for (std::size_t p = 0; p < N; ++p) s += static_cast<double>(data.read(p, j, m));
      mean[m] = s / static_cast<double>(N);
      double q = 0.0;
      for (std::size_t p = 0; p < N; ++p) {
        const double d = static_cast<double>(data.read(p, j, m)) - mean[m];
        dev[p * M + m] = d;
        q += d * d;
      }
      ss[m] = q;
    }
    for (std::size_t k = 0; k < table.pairs.size(); ++k) {
      const auto [m, n] = table.pairs[k];
      if (!(ss[m] > 0.0) || !(ss[n] > 0.0)) continue;
      double sxy = 0.0;
      for (std::size_t p = 0; p < N; ++p) sxy += dev[p * M + m] * dev[p * M + n];
      table.at(k, j) = std::clamp(sxy / std::sqrt(ss[m] * ss[n]), -1.0, 1.0);
    }
  }
  return table;
}

CorrData correlation_data(const ReadDataset& data) {
  return CorrData{empirical_correlations(data), data.B, data.b};
}

// ---------------------------------------------------------------------------

ParameterCodec::ParameterCodec(const ModelTopology& topology, const Params& base, const ParamMask& mask)
    : topology_(topology), base_(base) {
  const std::size_t R = num_rate_parameters(topology);
  const std::size_t K = topology.num_initial();
  if (mask.fixed.size() != R + K) throw DomainError("parameter mask has the wrong length");
  if (base.pi.size() != K) throw DomainError("pi must have one entry per initial compartment");
  for (std::size_t i = 0; i < R; ++i) {
    if (!mask.fixed[i]) free_rates_.push_back(i);
  }
  std::size_t fixed_pi = 0;
  for (std::size_t k = 0; k < K; ++k) fixed_pi += mask.fixed[R + k] ? 1 : 0;

  if (fixed_pi == K) {
    pi_mode_ = PiMode::Fixed;
  } else if (fixed_pi == 0) {
    pi_mode_ = PiMode::Free;
    gamma_size_ = K - 1;
  } else if (K == 2) {
    // One entry fixed determines the other.
    pi_mode_ = PiMode::Fixed;
    const std::size_t held = mask.fixed[R] ? 0 : 1;
    base_.pi[1 - held] = 1.0 - base_.pi[held];
  } else if (fixed_pi == 1 && mask.fixed[R]) {
    pi_mode_ = PiMode::HscFixed;
    gamma_size_ = K - 2;
  } else {
    throw DomainError("unsupported pi mask: fix all of pi, none of it, or only pi." + topology.hsc);
  }
}

Params ParameterCodec::decode(std::span<const double> x) const {
  if (x.size() != size()) throw DomainError("free vector has the wrong length");
  std::vector<double> flat = flatten(base_);
  for (std::size_t k = 0; k < free_rates_.size(); ++k) flat[free_rates_[k]] = std::exp(x[k]);
  Params p = unflatten(topology_, flat);
  const auto gamma = x.subspan(free_rates_.size());
  if (pi_mode_ == PiMode::Free) {
    p.pi = gamma_to_pi(gamma);
  } else if (pi_mode_ == PiMode::HscFixed) {
    const auto split = gamma_to_pi(gamma);
    for (std::size_t a = 0; a < split.size(); ++a) p.pi[1 + a] = (1.0 - p.pi[0]) * split[a];
  }
  return p;
}

std::vector<double> ParameterCodec::encode(const Params& params) const {
  const std::vector<double> flat = flatten(params);
  std::vector<double> x;
  for (std::size_t i : free_rates_) {
    if (!(flat[i] > 0.0)) throw DomainError("free rates must be positive to be log-encoded");
    x.push_back(std::log(flat[i]));
  }
  if (pi_mode_ == PiMode::Free) {
    const auto g = pi_to_gamma(params.pi);
    x.insert(x.end(), g.begin(), g.end());
  } else if (pi_mode_ == PiMode::HscFixed) {
    std::vector<double> rest(params.pi.begin() + 1, params.pi.end());
    const double total = 1.0 - params.pi[0];
    for (auto& v : rest) v /= total;
    const auto g = pi_to_gamma(rest);
    x.insert(x.end(), g.begin(), g.end());
  }
  return x;
}

std::vector<std::string> ParameterCodec::free_names() const {
  const auto all = parameter_names(topology_);
  std::vector<std::string> out;
  for (std::size_t i : free_rates_) out.push_back(all[i]);
  const std::size_t R = num_rate_parameters(topology_);
  if (pi_mode_ == PiMode::Free) {
    for (std::size_t k = 0; k < topology_.num_initial(); ++k) out.push_back(all[R + k]);
  } else if (pi_mode_ == PiMode::HscFixed) {
    for (std::size_t k = 1; k < topology_.num_initial(); ++k) out.push_back(all[R + k]);
  }
  return out;
}

std::vector<double> ParameterCodec::free_values(const Params& params) const {
  const auto flat = flatten(params);
  std::vector<double> out;
  for (std::size_t i : free_rates_) out.push_back(flat[i]);
  if (pi_mode_ == PiMode::Free) {
    out.insert(out.end(), params.pi.begin(), params.pi.end());
  } else if (pi_mode_ == PiMode::HscFixed) {
    out.insert(out.end(), params.pi.begin() + 1, params.pi.end());
  }
  return out;
}

// ---------------------------------------------------------------------------

CorrelationLoss::CorrelationLoss(const ModelTopology& topology, CorrData data, LossOptions options)
    : topology_(topology), data_(std::move(data)), options_(std::move(options)) {
  const std::size_t J = data_.psi_hat.times.size();
  const std::size_t M = topology.num_matures();
  if (data_.psi_hat.pairs.size() != M * (M - 1) / 2) throw DomainError("data and model have different mature types");
  if (data_.B.size() != J * M || (data_.b.size() != J * M && data_.b.size() != M)) {
    throw DomainError("CBC totals and sample sizes must be J x M");
  }
  time_used_.assign(J, true);
  for (double t : options_.exclude_times) {
    bool found = false;
    for (std::size_t j = 0; j < J; ++j) {
      if (std::abs(data_.psi_hat.times[j] - t) <= 1e-9 * std::max(1.0, std::abs(t))) {
        time_used_[j] = false;
        found = true;
      }
    }
    if (!found) throw DomainError("excluded time " + std::to_string(t) + " is not an observation time");
  }
}

CorrTable CorrelationLoss::model_table(const Params& params) const {
  return model_correlations(topology_, params, data_.psi_hat.times, data_.b, data_.B);
}

double CorrelationLoss::operator()(const Params& params) const {
  const double growth = params.hsc_net_growth();
  if (options_.growth_constraint && !(growth > 0.0)) return kInf;
  CorrTable model;
  try {
    model = model_table(params);
  } catch (const DomainError&) {
    return kInf;
  }
  const auto& target = data_.psi_hat;
  double sum = 0.0;
  for (std::size_t k = 0; k < target.pairs.size(); ++k) {
    for (std::size_t j = 0; j < target.times.size(); ++j) {
      if (!time_used_[j]) continue;
      const auto& a = model.at(k, j);
      const auto& b = target.at(k, j);
      if (!b) continue;
      // A correlation the data show but the model cannot produce (zero model
      // variance) must not be scored as a perfect match.
      if (!a) return kInf;
      const double r = *a - *b;
      sum += r * r;
    }
  }
  double value = options_.pair_factor * sum;
  if (options_.growth_constraint && options_.barrier > 0.0) value -= options_.barrier * std::log(growth);
  return std::isfinite(value) ? value : kInf;
}

double evaluate_loss(const ModelTopology& topology, const Params& params, const CorrData& data, const FitConfig& config) {
  const CorrelationLoss loss(topology, data,
                             LossOptions{config.barrier, config.growth_constraint, config.pair_factor, config.exclude_times});
  return loss(params);
}

// ---------------------------------------------------------------------------

namespace {

struct Objective {
  const std::function<double(std::span<const double>)>* f;
  double best = kInf;
  std::vector<double> best_x;

  double operator()(const gsl_vector* v) {
    std::vector<double> x(v->size);
    for (std::size_t i = 0; i < v->size; ++i) x[i] = gsl_vector_get(v, i);
    const double value = (*f)(x);
    if (value < best) {
      best = value;
      best_x = x;
    }
    return std::isfinite(value) ? value : kRejected;
  }
};

double gsl_f(const gsl_vector* v, void* params) { return (*static_cast<Objective*>(params))(v); }

void gsl_df(const gsl_vector* v, void* params, gsl_vector* grad) {
  auto& obj = *static_cast<Objective*>(params);
  const double f0 = obj(v);
  gsl_vector* w = gsl_vector_alloc(v->size);
  gsl_vector_memcpy(w, v);
  for (std::size_t i = 0; i < v->size; ++i) {
    const double xi = gsl_vector_get(v, i);
    const double h = 1e-6 * std::max(1.0, std::abs(xi));
    gsl_vector_set(w, i, xi + h);
    const double fp = obj(w);
    gsl_vector_set(w, i, xi - h);
    const double fm = obj(w);
    gsl_vector_set(w, i, xi);
    double g;
    if (fp < kRejected && fm < kRejected) {
      g = (fp - fm) / (2.0 * h);
    } else if (fp < kRejected && f0 < kRejected) {
      g = (fp - f0) / h;
    } else if (fm < kRejected && f0 < kRejected) {
      g = (f0 - fm) / h;
    } else {
      g = 0.0;
    }
    gsl_vector_set(grad, i, g);
  }
  gsl_vector_free(w);
}

void gsl_fdf(const gsl_vector* v, void* params, double* f, gsl_vector* grad) {
  *f = gsl_f(v, params);
  gsl_df(v, params, grad);
}

void disable_gsl_abort() {
  static std::once_flag once;
  std::call_once(once, [] { gsl_set_error_handler_off(); });
}

using VectorPtr = std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)>;

VectorPtr to_gsl(const std::vector<double>& x) {
  VectorPtr v(gsl_vector_alloc(x.size()), &gsl_vector_free);
  for (std::size_t i = 0; i < x.size(); ++i) gsl_vector_set(v.get(), i, x[i]);
  return v;
}

LocalResult nelder_mead(Objective& obj, const std::vector<double>& x0, const FitConfig& config) {
  const std::size_t n = x0.size();
  gsl_multimin_function fn{&gsl_f, n, &obj};
  auto x = to_gsl(x0);
  auto step = to_gsl(std::vector<double>(n, config.initial_step));
  std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> s(
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n), &gsl_multimin_fminimizer_free);
  LocalResult out;
  if (gsl_multimin_fminimizer_set(s.get(), &fn, x.get(), step.get()) != GSL_SUCCESS) {
    out.status = "initialization failed";
    return out;
  }
  // Stop when the simplex has shrunk below x_tol, or when the best value has
  // improved by less than f_tol over a window of iterations.
  const std::size_t window = std::max<std::size_t>(50, 10 * n);
  std::vector<double> history;
  out.status = "max iterations";
  for (std::size_t it = 1; it <= config.max_iterations; ++it) {
    out.iterations = it;
    if (gsl_multimin_fminimizer_iterate(s.get()) != GSL_SUCCESS) {
      out.status = "no progress";
      break;
    }
    if (gsl_multimin_fminimizer_size(s.get()) < config.x_tol) {
      out.status = "converged (x_tol)";
      break;
    }
    history.push_back(obj.best);
    if (history.size() > window && history[history.size() - 1 - window] - obj.best <= config.f_tol) {
      out.status = "converged (f_tol)";
      break;
    }
  }
  return out;
}

LocalResult bfgs(Objective& obj, const std::vector<double>& x0, const FitConfig& config) {
  const std::size_t n = x0.size();
  gsl_multimin_function_fdf fn{&gsl_f, &gsl_df, &gsl_fdf, n, &obj};
  auto x = to_gsl(x0);
  std::unique_ptr<gsl_multimin_fdfminimizer, decltype(&gsl_multimin_fdfminimizer_free)> s(
      gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, n), &gsl_multimin_fdfminimizer_free);
  LocalResult out;
  if (gsl_multimin_fdfminimizer_set(s.get(), &fn, x.get(), config.initial_step * 0.2, 0.1) != GSL_SUCCESS) {
    out.status = "initialization failed";
    return out;
  }
  double previous = kInf;
  out.status = "max iterations";
  for (std::size_t it = 1; it <= config.max_iterations; ++it) {
    out.iterations = it;
    if (gsl_multimin_fdfminimizer_iterate(s.get()) != GSL_SUCCESS) {
      out.status = "no progress";
      break;
    }
    if (gsl_multimin_test_gradient(s.get()->gradient, config.x_tol) == GSL_SUCCESS) {
      out.status = "converged (gradient)";
      break;
    }
    if (previous - obj.best <= config.f_tol && it > 1) {
      out.status = "converged (f_tol)";
      break;
    }
    previous = obj.best;
  }
  return out;
}

}  // namespace

LocalResult minimize_local(const std::function<double(std::span<const double>)>& f, std::vector<double> x0,
                           const FitConfig& config) {
  disable_gsl_abort();
  Objective obj{&f, kInf, {}};
  const double f0 = f(x0);
  obj.best = f0;
  obj.best_x = x0;
  LocalResult out;
  if (x0.empty()) {
    out.status = "nothing to optimize";
  } else {
    out = config.optimizer == Optimizer::Bfgs ? bfgs(obj, x0, config) : nelder_mead(obj, x0, config);
  }
  out.x = obj.best_x;
  out.value = obj.best;
  return out;
}

// ---------------------------------------------------------------------------

FitResult fit(const ModelTopology& topology, const CorrData& data, const FitConfig& config, const ParamMask& mask,
              const Params& base) {
  const ParameterCodec codec(topology, base, mask);
  if (codec.size() == 0) throw DomainError("no free parameters to fit");
  if (config.n_restarts + config.warm_starts.size() == 0) throw DomainError("n_restarts must be at least 1");
  const CorrelationLoss loss(topology, data,
                             LossOptions{config.barrier, config.growth_constraint, config.pair_factor, config.exclude_times});

  double upper = config.restart_upper;
  if (!(upper > 0.0)) {
    double largest = 0.0;
    const std::size_t first_mu = 1 + 2 * topology.num_progenitors() + topology.num_matures();
    for (std::size_t m = 0; m < topology.num_matures(); ++m) {
      if (mask.fixed[first_mu + m]) largest = std::max(largest, base.mu_mat[m]);
    }
    upper = largest > 0.0 ? 100.0 * largest : 100.0;
  }
  const double lo = std::log(config.restart_lower), hi = std::log(upper);
  if (!(hi > lo)) throw DomainError("restart bounds must satisfy 0 < lower < upper");

  const std::function<double(std::span<const double>)> objective = [&](std::span<const double> x) {
    return loss(codec.decode(x));
  };

  const std::size_t n_warm = config.warm_starts.size();
  const std::size_t total = n_warm + config.n_restarts;
  std::vector<RestartRecord> records(total);
  std::vector<std::vector<double>> ends(total);
  parallel_for(total, [&](std::size_t r) {
    RestartRecord& rec = records[r];
    std::vector<double> x0;
    if (r < n_warm) {
      x0 = codec.encode(config.warm_starts[r]);
      if (!std::isfinite(objective(x0))) {
        rec.status = "infeasible warm start";
        return;
      }
    } else {
      Rng rng(config.seed, r - n_warm);
      bool feasible = false;
      for (int attempt = 0; attempt < 10000 && !feasible; ++attempt) {
        x0.assign(codec.size(), 0.0);
        for (std::size_t k = 0; k < codec.free_rate_indices().size(); ++k) x0[k] = lo + (hi - lo) * rng.uniform();
        for (std::size_t k = codec.free_rate_indices().size(); k < x0.size(); ++k) {
          x0[k] = config.gamma_range * (2.0 * rng.uniform() - 1.0);
        }
        feasible = std::isfinite(objective(x0));
      }
      if (!feasible) {
        rec.status = "no feasible start";
        return;
      }
    }
    rec.start = codec.free_values(codec.decode(x0));
    const LocalResult local = minimize_local(objective, x0, config);
    rec.end = codec.free_values(codec.decode(local.x));
    rec.objective = local.value;
    rec.iterations = local.iterations;
    rec.status = local.status;
    ends[r] = local.x;
  });

  FitResult out;
  out.free_names = codec.free_names();
  bool any = false;
  for (std::size_t r = 0; r < total; ++r) {
    if (!std::isfinite(records[r].objective)) continue;
    if (!any || records[r].objective < out.objective - 1e-12) {
      out.objective = records[r].objective;
      out.best_restart = r;
      any = true;
    }
  }
  if (!any) throw DomainError("all restarts failed");
  out.theta_hat = codec.decode(ends[out.best_restart]);
  out.objective = loss(out.theta_hat);
  out.restarts = std::move(records);
  out.fitted_psi = loss.model_table(out.theta_hat);
  out.empirical_psi = data.psi_hat;

  const std::size_t first_mu = 1 + 2 * topology.num_progenitors() + topology.num_matures();
  for (std::size_t m = 0; m < topology.num_matures(); ++m) {
    if (!mask.fixed[first_mu + m]) {
      out.warnings.push_back("mature death rates are free; (nu_m, mu_m) are identifiable only up to their ratio");
      break;
    }
  }
  return out;
}

FitResult fit(const ModelTopology& topology, const ReadDataset& data, const FitConfig& config, const ParamMask& mask,
              const Params& base) {
  return fit(topology, correlation_data(data), config, mask, base);
}

}  // namespace branchmoments
