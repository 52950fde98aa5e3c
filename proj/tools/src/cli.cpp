#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "branchmoments/io.hpp"
#include "branchmoments/ode_oracle.hpp"

namespace branchmoments::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kDefaultSeed = 1;

struct Options {
  std::vector<std::string> models;
  std::string fit_model;
  std::string reads, cbc, out = ".";
  std::uint64_t seed = kDefaultSeed;
  std::size_t n = 2000;
  std::size_t study_n = 0;
  std::size_t restarts = 0;
  std::string profile = "desk";
  std::vector<double> times;
  std::vector<double> exclude_times;
  std::size_t folds = 5;
  std::size_t replicates = 0;
  std::size_t replicate_restarts = 10;
  bool no_read_resampling = false;
  bool force = false;
  double sample_size = 1e4;
  double filter_threshold = 0.0;
  std::string filter_mode = "max";
  std::string optimizer = "nm";
  bool oracle = false;
  std::size_t draws = 20;
};

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Json input_entry(const std::string& path) {
  return {{"file", fs::path(path).filename().string()}, {"fnv1a", hex(config_hash(read_text(path)))}};
}

// The manifest holds everything that determines the outputs (file names and
// content hashes for inputs, not their directories) so reruns compare equal.
void write_manifest(const fs::path& dir, const std::string& command, const Options& o, Json config,
                    const std::vector<std::string>& outputs) {
  config["command"] = command;
  config["seed"] = o.seed;
  const std::string canonical = config.dump();
  Json m;
  m["command"] = command;
  m["version"] = BRANCHMOMENTS_VERSION;
  m["seed"] = o.seed;
  m["config_hash"] = hex(config_hash(canonical));
  m["config"] = config;
  m["outputs"] = outputs;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (!fs::is_directory(p)) throw DomainError("cannot create output directory '" + dir + "'");
  return p;
}

FitConfig fit_config(const Options& o, std::size_t default_restarts) {
  FitConfig fc;
  fc.n_restarts = o.restarts > 0 ? o.restarts : default_restarts;
  fc.seed = o.seed;
  fc.exclude_times = o.exclude_times;
  if (o.optimizer == "bfgs") fc.optimizer = Optimizer::Bfgs;
  return fc;
}

Json fit_config_json(const FitConfig& fc) {
  return {{"restarts", fc.n_restarts},
          {"optimizer", fc.optimizer == Optimizer::Bfgs ? "bfgs" : "nm"},
          {"exclude_times", fc.exclude_times}};
}

void print_estimates(std::ostream& out, const FitResult& f, const ParameterCodec& codec) {
  out << "objective " << format_double(f.objective) << "\n";
  const auto values = codec.free_values(f.theta_hat);
  for (std::size_t i = 0; i < values.size(); ++i) out << "  " << f.free_names[i] << " = " << values[i] << "\n";
  for (const auto& w : f.warnings) out << "warning: " << w << "\n";
}

int cmd_simulate(const Options& o, std::ostream& out) {
  const ModelFile model = read_model_json(o.models.at(0));
  SimConfig sc;
  sc.n_lineages = o.n;
  sc.obs_times = o.times.empty() ? default_obs_times() : o.times;
  sc.seed = o.seed;
  sc.sample_sizes.assign(model.topology.num_matures(), o.sample_size);
  sc.read_filter_threshold = o.filter_threshold;
  sc.filter = o.filter_mode == "sum" ? ReadFilter::SumOverTypes : ReadFilter::MaxCell;
  const ReadDataset data = simulate_dataset(model.topology, model.params, sc);
  if (data.num_barcodes() == 0) {
    throw DomainError("no barcode reaches the read filter threshold " + format_double(o.filter_threshold) +
                      " (reads equal sampled cells here; lower --filter-threshold)");
  }
  const fs::path dir = prepare_out(o.out);
  write_reads_csv(dir / "reads.csv", data);
  write_cbc_csv(dir / "cbc.csv", data);
  write_manifest(dir, "simulate", o,
                 {{"model", input_entry(o.models[0])},
                  {"n", o.n},
                  {"times", sc.obs_times},
                  {"sample_size", o.sample_size},
                  {"filter_threshold", o.filter_threshold},
                  {"filter_mode", o.filter_mode}},
                 {"reads.csv", "cbc.csv"});
  out << "simulated " << o.n << " lineages, " << data.num_barcodes() << " pass the read filter; wrote "
      << (dir / "reads.csv").string() << " and " << (dir / "cbc.csv").string() << "\n";
  return 0;
}

int cmd_moments(const Options& o, std::ostream& out) {
  const ModelFile model = read_model_json(o.models.at(0));
  const std::size_t M = model.topology.num_matures();
  std::vector<double> times = o.times, B, b;
  Json config{{"model", input_entry(o.models[0])}};
  if (!o.cbc.empty()) {
    const ReadDataset cbc = select_types(read_cbc(o.cbc), model.topology.matures);
    B = cbc.B;
    b = cbc.b;
    const std::vector<double>& grid = cbc.times;
    if (times.empty()) times = grid;
    else if (times != grid) throw DomainError("--times must match the CBC time grid when --cbc is given");
    config["cbc"] = input_entry(o.cbc);
  } else {
    if (times.empty()) times = default_obs_times();
    // With b = B the sample is the whole population, so these are latent correlations.
    B.assign(times.size() * M, 2.0);
    b.assign(times.size() * M, 2.0);
  }
  config["times"] = times;
  const CorrTable psi = model_correlations(model.topology, model.params, times, b, B);
  const fs::path dir = prepare_out(o.out);
  write_corr_csv(dir / "moments.csv", model.topology.matures, psi);
  write_manifest(dir, "moments", o, config, {"moments.csv"});
  out << "wrote " << (dir / "moments.csv").string() << "\n";
  return 0;
}

int cmd_fit(const Options& o, std::ostream& out) {
  const ModelFile model = read_model_json(o.models.at(0));
  const ReadDataset data = model_view(read_dataset(o.reads, o.cbc), model);
  const FitConfig fc = fit_config(o, FitConfig{}.n_restarts);
  const FitResult f = fit(model.topology, data, fc, model.mask, model.params);
  const fs::path dir = prepare_out(o.out);
  write_text(dir / "fit.json", fit_json(model, f, fc));
  write_corr_csv(dir / "corr_fit.csv", model.topology.matures, f.fitted_psi, &f.empirical_psi);
  Json config{{"model", input_entry(o.models[0])}, {"reads", input_entry(o.reads)}, {"cbc", input_entry(o.cbc)}};
  config["fit"] = fit_config_json(fc);
  write_manifest(dir, "fit", o, config, {"fit.json", "corr_fit.csv"});
  print_estimates(out, f, ParameterCodec(model.topology, model.params, model.mask));
  return 0;
}

int cmd_bootstrap(const Options& o, std::ostream& out, std::ostream& err) {
  const ModelFile model = read_model_json(o.models.at(0));
  const ReadDataset data = model_view(read_dataset(o.reads, o.cbc), model);
  const FitConfig fc = fit_config(o, FitConfig{}.n_restarts);
  const FitResult full = fit(model.topology, data, fc, model.mask, model.params);
  BootstrapConfig bc;
  bc.replicates = o.replicates > 0 ? o.replicates : bc.replicates;
  bc.seed = o.seed;
  bc.resample_reads = !o.no_read_resampling;
  bc.restarts_per_replicate = o.replicate_restarts;
  const BootstrapResult br = bootstrap(model.topology, data, fc, model.mask, model.params, full.theta_hat, bc);
  const fs::path dir = prepare_out(o.out);
  write_text(dir / "fit.json", fit_json(model, full, fc));
  write_bootstrap_csv(dir / "bootstrap.csv", br);
  write_text(dir / "bootstrap_summary.json", bootstrap_summary_json(br));
  Json config{{"model", input_entry(o.models[0])}, {"reads", input_entry(o.reads)}, {"cbc", input_entry(o.cbc)}};
  config["fit"] = fit_config_json(fc);
  config["replicates"] = bc.replicates;
  config["replicate_restarts"] = bc.restarts_per_replicate;
  config["resample_reads"] = bc.resample_reads;
  write_manifest(dir, "bootstrap", o, config, {"fit.json", "bootstrap.csv", "bootstrap_summary.json"});
  print_estimates(out, full, ParameterCodec(model.topology, model.params, model.mask));
  out << "95% percentile intervals from " << (bc.replicates - br.failed) << " replicates:\n";
  for (std::size_t k = 0; k < br.names.size(); ++k)
    out << "  " << br.names[k] << " [" << br.lower[k] << ", " << br.upper[k] << "]\n";
  for (const auto& w : br.warnings) err << "warning: " << w << "\n";
  return 0;
}

int cmd_cv(const Options& o, std::ostream& out, std::ostream& err) {
  const ReadDataset raw = read_dataset(o.reads, o.cbc);
  std::vector<CVCandidate> candidates;
  Json inputs = Json::array();
  for (const auto& path : o.models) {
    const ModelFile model = read_model_json(path);
    CVCandidate c;
    c.name = fs::path(path).stem().string();
    c.topology = model.topology;
    c.mask = model.mask;
    c.base = model.params;
    c.lumping = column_groups(raw, model);
    candidates.push_back(std::move(c));
    inputs.push_back(input_entry(path));
  }
  CVConfig cc;
  cc.folds = o.folds;
  cc.seed = o.seed;
  cc.force = o.force;
  const FitConfig fc = fit_config(o, 50);
  const auto results = cross_validate(candidates, raw, fc, cc);
  bool comparable = true;
  for (const auto& r : results) comparable = comparable && r.num_matures == results.front().num_matures;
  const fs::path dir = prepare_out(o.out);
  write_text(dir / "cv.json", cv_json(results, cc, comparable));
  Json config{{"models", inputs}, {"reads", input_entry(o.reads)}, {"cbc", input_entry(o.cbc)}, {"folds", o.folds}};
  config["fit"] = fit_config_json(fc);
  write_manifest(dir, "cv", o, config, {"cv.json"});
  for (const auto& r : results) out << r.name << ": mean held-out objective " << format_double(r.mean_objective) << "\n";
  if (!comparable)
    err << "warning: candidates have different numbers of mature types; their objectives are not directly "
           "comparable\n";
  return 0;
}

int cmd_study(const Options& o, std::ostream& out, std::ostream& err) {
  const ModelFile gen = read_model_json(o.models.at(0));
  const ModelFile fitted = o.fit_model.empty() ? gen : read_model_json(o.fit_model);
  StudySpec spec;
  spec.generating = gen.topology;
  spec.truth = gen.params;
  spec.fitted = fitted.topology;
  spec.mask = fitted.mask;
  spec.fit_base = fitted.params;
  apply_profile(spec, o.profile);
  if (o.profile == "paper") err << "note: the paper profile is long-running (hours to days)\n";
  if (o.replicates > 0) spec.replicates = o.replicates;
  if (o.restarts > 0) spec.fit.n_restarts = o.restarts;
  if (o.study_n > 0) spec.n_lineages = o.study_n;
  spec.obs_times = o.times.empty() ? default_obs_times() : o.times;
  spec.sample_sizes.assign(gen.topology.num_matures(), o.sample_size);
  spec.read_filter_threshold = o.filter_threshold;
  spec.fit.exclude_times = o.exclude_times;
  spec.seed = o.seed;
  if (!fitted.lumping.empty()) {
    ReadDataset labels;
    labels.cell_types = gen.topology.matures;
    spec.lumping = column_groups(labels, fitted);
  }
  const StudyResult r = simulation_study(spec);
  const fs::path dir = prepare_out(o.out);
  write_text(dir / "study.json", study_json(r, spec.replicates, spec.n_lineages));
  Json config{{"model", input_entry(o.models[0])},
              {"profile", o.profile},
              {"replicates", spec.replicates},
              {"n", spec.n_lineages},
              {"times", spec.obs_times},
              {"sample_size", o.sample_size},
              {"filter_threshold", o.filter_threshold}};
  if (!o.fit_model.empty()) config["fit_model"] = input_entry(o.fit_model);
  config["fit"] = fit_config_json(spec.fit);
  write_manifest(dir, "study", o, config, {"study.json"});
  out << "objective median " << format_double(r.objective_median) << " (MAD " << format_double(r.objective_mad)
      << ")\n";
  for (const auto& s : r.summary)
    out << "  " << s.name << ": median " << s.median << ", MAD " << s.mad << ", median relative error "
        << s.median_rel_error << "\n";
  return 0;
}

int cmd_check(const Options& o, std::ostream& out) {
  const std::vector<double> grid{0.5, 1, 2, 5, 10, 30};
  const OracleSuiteReport rep = oracle_suite({"a", "c", "f"}, o.draws, o.seed, grid);
  const bool pass = rep.max_rel_error <= 1e-6;
  out << "oracle check: " << rep.cases << " parameter draws over models a, c, f (" << rep.coincident_cases
      << " with coincident rates)\n"
      << "max relative error " << format_double(rep.max_rel_error) << " (" << rep.worst_case << ")\n"
      << (pass ? "PASS" : "FAIL") << " (limit 1e-6)\n";
  return pass ? 0 : 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Moment-based inference for multi-type branching models of lineage barcoding data", "branchmoments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(BRANCHMOMENTS_VERSION));
  Options o;

  auto seed_opt = [&](CLI::App* c) { return c->add_option("--seed", o.seed, "Random seed (default 1)"); };
  auto data_opts = [&](CLI::App* c) {
    c->add_option("--reads", o.reads, "reads.csv")->required()->check(CLI::ExistingFile);
    c->add_option("--cbc", o.cbc, "cbc.csv")->required()->check(CLI::ExistingFile);
  };
  auto model_opt = [&](CLI::App* c) {
    c->add_option("--model", o.models, "model.json")->required()->check(CLI::ExistingFile)->expected(1);
  };
  auto fit_opts = [&](CLI::App* c) {
    c->add_option("--restarts", o.restarts, "Random restarts");
    c->add_option("--exclude-times", o.exclude_times, "Observation times left out of the loss")->delimiter(',');
    c->add_option("--optimizer", o.optimizer, "Local optimizer")->check(CLI::IsMember({"nm", "bfgs"}));
  };
  std::vector<std::pair<CLI::App*, CLI::Option*>> seeds;

  auto* sim = app.add_subcommand("simulate", "Simulate lineages and write reads.csv, cbc.csv");
  model_opt(sim);
  sim->add_option("--n", o.n, "Number of barcoded lineages");
  sim->add_option("--out", o.out, "Output directory")->required();
  sim->add_option("--times", o.times, "Observation times")->delimiter(',');
  sim->add_option("--sample-size", o.sample_size, "Cells sampled per type and time (b)");
  sim->add_option("--filter-threshold", o.filter_threshold, "Read filter threshold (0 keeps every barcode)");
  sim->add_option("--filter-mode", o.filter_mode, "max: one cell reaches it; sum: summed over types")
      ->check(CLI::IsMember({"max", "sum"}));
  seeds.emplace_back(sim, seed_opt(sim));

  auto* mom = app.add_subcommand("moments", "Model correlations on a time grid");
  model_opt(mom);
  mom->add_option("--times", o.times, "Observation times")->delimiter(',');
  mom->add_option("--cbc", o.cbc, "cbc.csv supplying B and b")->check(CLI::ExistingFile);
  mom->add_option("--out", o.out, "Output directory");

  auto* fit_cmd = app.add_subcommand("fit", "Fit the model to read data");
  model_opt(fit_cmd);
  data_opts(fit_cmd);
  fit_opts(fit_cmd);
  fit_cmd->add_option("--out", o.out, "Output directory");
  seeds.emplace_back(fit_cmd, seed_opt(fit_cmd));

  auto* boot = app.add_subcommand("bootstrap", "Fit, then bootstrap percentile intervals");
  model_opt(boot);
  data_opts(boot);
  fit_opts(boot);
  boot->add_option("--replicates", o.replicates, "Bootstrap replicates (default 200)");
  boot->add_option("--replicate-restarts", o.replicate_restarts, "Random restarts per replicate");
  boot->add_flag("--no-read-resampling", o.no_read_resampling, "Resample barcodes only");
  boot->add_option("--out", o.out, "Output directory");
  seeds.emplace_back(boot, seed_opt(boot));

  auto* cv = app.add_subcommand("cv", "K-fold cross-validation over candidate models");
  cv->add_option("--model", o.models, "Candidate model.json (repeat)")->required()->check(CLI::ExistingFile);
  data_opts(cv);
  fit_opts(cv);
  cv->add_option("--folds", o.folds, "Number of folds");
  cv->add_flag("--force", o.force, "Rank candidates with different numbers of mature types");
  cv->add_option("--out", o.out, "Output directory");
  seeds.emplace_back(cv, seed_opt(cv));

  auto* study = app.add_subcommand("study", "Simulation study: simulate, refit, summarize");
  model_opt(study);
  study->add_option("--fit-model", o.fit_model, "Model to fit (default: the generating model)")
      ->check(CLI::ExistingFile);
  study->add_option("--profile", o.profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  study->add_option("--replicates", o.replicates, "Override the profile's replicate count");
  study->add_option("--n", o.study_n, "Override the profile's lineage count");
  study->add_option("--restarts", o.restarts, "Override the profile's restarts");
  study->add_option("--exclude-times", o.exclude_times, "Observation times left out of the loss")->delimiter(',');
  study->add_option("--times", o.times, "Observation times")->delimiter(',');
  study->add_option("--sample-size", o.sample_size, "Cells sampled per type and time (b)");
  study->add_option("--filter-threshold", o.filter_threshold, "Read filter threshold");
  study->add_option("--out", o.out, "Output directory");
  seeds.emplace_back(study, seed_opt(study));

  auto* check = app.add_subcommand("check", "Self-checks");
  check->add_flag("--oracle", o.oracle, "Closed-form moments against the ODE oracle");
  check->add_option("--draws", o.draws, "Parameter draws per model");
  check->add_option("--seed", o.seed, "Random seed");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  for (const auto& [sub, opt] : seeds)
    if (sub->parsed() && opt->count() == 0) err << "seed: " << kDefaultSeed << " (default)\n";

  try {
    if (sim->parsed()) return cmd_simulate(o, out);
    if (mom->parsed()) return cmd_moments(o, out);
    if (fit_cmd->parsed()) return cmd_fit(o, out);
    if (boot->parsed()) return cmd_bootstrap(o, out, err);
    if (cv->parsed()) return cmd_cv(o, out, err);
    if (study->parsed()) return cmd_study(o, out, err);
    if (check->parsed()) return cmd_check(o, out);
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace branchmoments::cli
