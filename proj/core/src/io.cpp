#include "branchmoments/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace branchmoments {

using Json = nlohmann::ordered_json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw DomainError(where + ": '" + s + "' is not a number");
  return v;
}

std::int64_t parse_count(const std::string& s, const std::string& where) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 0)
    throw DomainError(where + ": '" + s + "' is not a nonnegative integer");
  return v;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open '" + path.string() + "'");
  return in;
}

void expect_header(std::istream& in, const std::vector<std::string>& header, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != header) {
    std::string want;
    for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
    throw DomainError(path.string() + ": expected header '" + want + "'");
  }
}

double number_at(const Json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) return 0.0;
  if (!obj.at(key).is_number()) throw DomainError(where + "." + key + " must be a number");
  return obj.at(key).get<double>();
}

Json keyed(const std::vector<std::string>& ids, const std::vector<double>& values) {
  Json j = Json::object();
  for (std::size_t i = 0; i < ids.size(); ++i) j[ids[i]] = values[i];
  return j;
}

Json params_json(const ModelTopology& topo, const Params& p) {
  std::vector<std::string> initial{topo.hsc};
  initial.insert(initial.end(), topo.progenitors.begin(), topo.progenitors.end());
  Json j;
  j["lambda"] = p.lambda;
  j["nu_prog"] = keyed(topo.progenitors, p.nu_prog);
  j["mu_prog"] = keyed(topo.progenitors, p.mu_prog);
  j["nu_mat"] = keyed(topo.matures, p.nu_mat);
  j["mu_mat"] = keyed(topo.matures, p.mu_mat);
  j["pi"] = keyed(initial, p.pi);
  return j;
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

ModelFile parse_model_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw DomainError(std::string("model.json: ") + e.what());
  }
  ModelFile out;
  try {
    const Json& comp = j.at("compartments");
    out.topology.hsc = comp.value("hsc", std::string("HSC"));
    for (const auto& prog : comp.at("progenitors")) {
      const auto id = prog.at("id").get<std::string>();
      out.topology.progenitors.push_back(id);
      for (const auto& child : prog.at("children")) {
        const auto m = child.get<std::string>();
        if (out.topology.parent.count(m)) throw DomainError("model.json: mature type '" + m + "' has two parents");
        out.topology.parent[m] = id;
        if (!comp.contains("matures")) out.topology.matures.push_back(m);
      }
    }
    if (comp.contains("matures")) out.topology.matures = comp.at("matures").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    throw DomainError(std::string("model.json: bad compartments: ") + e.what());
  }
  const auto problems = validate_topology(out.topology);
  if (!problems.empty()) throw DomainError("model.json: " + problems.front());

  const ModelTopology& topo = out.topology;
  const std::size_t A = topo.num_progenitors(), M = topo.num_matures();
  Params& p = out.params;
  p.nu_prog.assign(A, 0.0);
  p.mu_prog.assign(A, 0.0);
  p.nu_mat.assign(M, 0.0);
  p.mu_mat.assign(M, 0.0);
  p.pi.assign(A + 1, 1.0 / static_cast<double>(A + 1));
  if (j.contains("params")) {
    const Json& pj = j.at("params");
    p.lambda = number_at(pj, "lambda", "params");
    auto fill = [&](const char* key, const std::vector<std::string>& ids, std::vector<double>& dst) {
      if (!pj.contains(key)) return;
      const Json& obj = pj.at(key);
      if (!obj.is_object()) throw DomainError(std::string("params.") + key + " must be an object keyed by id");
      for (const auto& [k, v] : obj.items()) {
        const auto it = std::find(ids.begin(), ids.end(), k);
        if (it == ids.end()) throw DomainError(std::string("params.") + key + ": unknown id '" + k + "'");
        if (!v.is_number()) throw DomainError(std::string("params.") + key + "." + k + " must be a number");
        dst[static_cast<std::size_t>(it - ids.begin())] = v.get<double>();
      }
    };
    std::vector<std::string> initial{topo.hsc};
    initial.insert(initial.end(), topo.progenitors.begin(), topo.progenitors.end());
    fill("nu_prog", topo.progenitors, p.nu_prog);
    fill("mu_prog", topo.progenitors, p.mu_prog);
    fill("nu_mat", topo.matures, p.nu_mat);
    fill("mu_mat", topo.matures, p.mu_mat);
    if (pj.contains("pi")) {
      p.pi.assign(A + 1, 0.0);
      fill("pi", initial, p.pi);
    }
  }
  const auto errors = validate_params(topo, p);
  if (!errors.empty()) throw DomainError("model.json: " + errors.front());
  std::vector<std::string> fixed;
  if (j.contains("fixed")) {
    try {
      fixed = j.at("fixed").get<std::vector<std::string>>();
    } catch (const Json::exception&) {
      throw DomainError("model.json: fixed must be a list of parameter names");
    }
  }
  out.mask = ParamMask::from_names(topo, fixed);
  if (j.contains("lumping")) {
    try {
      for (const auto& [label, members] : j.at("lumping").items())
        out.lumping.emplace_back(label, members.get<std::vector<std::string>>());
    } catch (const Json::exception&) {
      throw DomainError("model.json: lumping must map each mature label to a list of data cell types");
    }
    for (const auto& [label, members] : out.lumping)
      if (std::find(topo.matures.begin(), topo.matures.end(), label) == topo.matures.end())
        throw DomainError("model.json: lumping label '" + label + "' is not a mature type");
    if (out.lumping.size() != topo.num_matures())
      throw DomainError("model.json: lumping must cover every mature type");
  }
  return out;
}

ModelFile read_model_json(const std::filesystem::path& path) { return parse_model_json(read_text(path)); }

std::string model_json(const ModelFile& model) {
  const ModelTopology& topo = model.topology;
  Json j;
  j["compartments"]["hsc"] = topo.hsc;
  Json progs = Json::array();
  for (const auto& a : topo.progenitors) {
    Json children = Json::array();
    for (const auto& m : topo.matures)
      if (topo.parent.at(m) == a) children.push_back(m);
    progs.push_back({{"id", a}, {"children", children}});
  }
  j["compartments"]["progenitors"] = progs;
  j["compartments"]["matures"] = topo.matures;
  j["params"] = params_json(topo, model.params);
  j["fixed"] = model.mask.fixed_names(topo);
  if (!model.lumping.empty()) {
    Json l = Json::object();
    for (const auto& [label, members] : model.lumping) l[label] = members;
    j["lumping"] = l;
  }
  return j.dump(2) + "\n";
}

void write_reads_csv(const std::filesystem::path& path, const ReadDataset& data) {
  std::ostringstream out;
  out << "barcode_id,time,cell_type,read_count\n";
  const std::size_t J = data.num_times(), M = data.num_types();
  for (std::size_t p = 0; p < data.num_barcodes(); ++p) {
    bool any = false;
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t m = 0; m < M; ++m) {
        const auto y = data.read(p, j, m);
        if (y == 0) continue;
        any = true;
        out << data.barcode_ids[p] << ',' << format_double(data.times[j]) << ',' << data.cell_types[m] << ',' << y
            << '\n';
      }
    if (!any && J > 0 && M > 0)
      out << data.barcode_ids[p] << ',' << format_double(data.times[0]) << ',' << data.cell_types[0] << ",0\n";
  }
  write_text(path, out.str());
}

void write_cbc_csv(const std::filesystem::path& path, const ReadDataset& data) {
  std::ostringstream out;
  out << "time,cell_type,B,b\n";
  const std::size_t M = data.num_types();
  for (std::size_t j = 0; j < data.num_times(); ++j)
    for (std::size_t m = 0; m < M; ++m)
      out << format_double(data.times[j]) << ',' << data.cell_types[m] << ',' << format_double(data.B[j * M + m])
          << ',' << format_double(data.b[j * M + m]) << '\n';
  write_text(path, out.str());
}

ReadDataset read_dataset(const std::filesystem::path& reads_csv, const std::filesystem::path& cbc_csv,
                         const ModelTopology& topology) {
  ReadDataset data = read_dataset(reads_csv, cbc_csv);
  if (data.cell_types.size() != topology.num_matures())
    throw DomainError("data have " + std::to_string(data.cell_types.size()) + " cell types but the model has " +
                      std::to_string(topology.num_matures()));
  return select_types(data, topology.matures);
}

namespace {

std::size_t column_of(const ReadDataset& data, const std::string& label, const char* what) {
  const auto it = std::find(data.cell_types.begin(), data.cell_types.end(), label);
  if (it == data.cell_types.end()) throw DomainError(std::string(what) + "cell type '" + label + "' is not in the data");
  return static_cast<std::size_t>(it - data.cell_types.begin());
}

}  // namespace

ReadDataset select_types(const ReadDataset& data, const std::vector<std::string>& labels) {
  std::vector<std::vector<std::size_t>> groups;
  for (const auto& l : labels) groups.push_back({column_of(data, l, "")});
  return lump_dataset(data, groups, labels);
}

std::vector<std::vector<std::size_t>> column_groups(const ReadDataset& data, const ModelFile& model) {
  std::vector<std::vector<std::size_t>> groups;
  if (model.lumping.empty()) {
    for (const auto& m : model.topology.matures) groups.push_back({column_of(data, m, "")});
    return groups;
  }
  for (const auto& [label, members] : model.lumping) {
    std::vector<std::size_t> g;
    for (const auto& l : members) g.push_back(column_of(data, l, "lumping: "));
    groups.push_back(std::move(g));
  }
  return groups;
}

ReadDataset model_view(const ReadDataset& data, const ModelFile& model) {
  std::vector<std::string> labels;
  if (model.lumping.empty()) labels = model.topology.matures;
  else
    for (const auto& entry : model.lumping) labels.push_back(entry.first);
  return lump_dataset(data, column_groups(data, model), labels);
}

ReadDataset read_cbc(const std::filesystem::path& cbc_csv) {
  ReadDataset data;
  auto type_index = [&](const std::string& s, const std::string& where) {
    const auto it = std::find(data.cell_types.begin(), data.cell_types.end(), s);
    if (it != data.cell_types.end()) return static_cast<std::size_t>(it - data.cell_types.begin());
    if (s.empty()) throw DomainError(where + ": empty cell type");
    data.cell_types.push_back(s);
    return data.cell_types.size() - 1;
  };

  struct CbcRow {
    double B, b;
  };
  std::map<double, std::map<std::size_t, CbcRow>> cbc;
  {
    auto in = open_input(cbc_csv);
    expect_header(in, {"time", "cell_type", "B", "b"}, cbc_csv);
    std::string line;
    for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const std::string where = cbc_csv.string() + ":" + std::to_string(lineno);
      const auto f = split_csv_line(line);
      if (f.size() != 4) throw DomainError(where + ": expected 4 fields");
      const double t = parse_double(f[0], where);
      const CbcRow row{parse_double(f[2], where), parse_double(f[3], where)};
      if (!(row.B > 0.0) || !(row.b > 0.0)) throw DomainError(where + ": B and b must be positive");
      if (row.b > row.B) throw DomainError(where + ": sample size b exceeds the total B");
      if (!cbc[t].emplace(type_index(f[1], where), row).second)
        throw DomainError(where + ": duplicate (time, cell_type)");
    }
  }
  if (cbc.empty()) throw DomainError(cbc_csv.string() + ": no rows");
  const std::size_t M = data.num_types();
  for (const auto& [t, rows] : cbc) {
    if (rows.size() != M)
      throw DomainError(cbc_csv.string() + ": time " + format_double(t) + " lacks some cell types");
    data.times.push_back(t);
    for (const auto& [m, row] : rows) {
      data.B.push_back(row.B);
      data.b.push_back(row.b);
    }
  }
  return data;
}

ReadDataset read_dataset(const std::filesystem::path& reads_csv, const std::filesystem::path& cbc_csv) {
  ReadDataset data = read_cbc(cbc_csv);
  const std::size_t J = data.num_times(), M = data.num_types();
  auto type_index = [&](const std::string& s, const std::string& where) {
    const auto it = std::find(data.cell_types.begin(), data.cell_types.end(), s);
    if (it == data.cell_types.end()) throw DomainError(where + ": cell type '" + s + "' does not appear in the CBC table");
    return static_cast<std::size_t>(it - data.cell_types.begin());
  };
  auto time_index = [&](double t, const std::string& where) {
    for (std::size_t j = 0; j < J; ++j)
      if (std::abs(data.times[j] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return j;
    throw DomainError(where + ": time " + format_double(t) + " does not appear in the CBC table");
  };

  std::unordered_map<std::string, std::size_t> barcode_index;
  auto in = open_input(reads_csv);
  expect_header(in, {"barcode_id", "time", "cell_type", "read_count"}, reads_csv);
  std::string line;
  std::vector<char> seen;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = reads_csv.string() + ":" + std::to_string(lineno);
    const auto f = split_csv_line(line);
    if (f.size() != 4) throw DomainError(where + ": expected 4 fields");
    if (f[0].empty()) throw DomainError(where + ": empty barcode_id");
    auto [it, inserted] = barcode_index.emplace(f[0], data.barcode_ids.size());
    if (inserted) {
      data.barcode_ids.push_back(f[0]);
      data.reads.resize(data.reads.size() + J * M, 0);
      seen.resize(data.reads.size(), 0);
    }
    const std::size_t j = time_index(parse_double(f[1], where), where);
    const std::size_t m = type_index(f[2], where);
    const std::size_t cell = (it->second * J + j) * M + m;
    if (seen[cell]) throw DomainError(where + ": duplicate (barcode, time, cell_type) row");
    seen[cell] = 1;
    data.reads[cell] = parse_count(f[3], where);
  }
  if (data.barcode_ids.empty()) throw DomainError(reads_csv.string() + ": no rows");
  return data;
}

void write_corr_csv(const std::filesystem::path& path, const std::vector<std::string>& labels, const CorrTable& model,
                    const CorrTable* empirical) {
  std::ostringstream out;
  out << "time,pair,psi_model" << (empirical ? ",psi_hat" : "") << '\n';
  auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); };
  for (std::size_t j = 0; j < model.times.size(); ++j)
    for (std::size_t k = 0; k < model.pairs.size(); ++k) {
      const auto [m, n] = model.pairs[k];
      out << format_double(model.times[j]) << ',' << labels.at(m) << ':' << labels.at(n) << ',' << cell(model.at(k, j));
      if (empirical) out << ',' << cell(empirical->at(k, j));
      out << '\n';
    }
  write_text(path, out.str());
}

std::string fit_json(const ModelFile& model, const FitResult& result, const FitConfig& config) {
  Json j;
  j["objective"] = result.objective;
  j["params"] = params_json(model.topology, result.theta_hat);
  j["fixed"] = model.mask.fixed_names(model.topology);
  Json free = Json::object();
  const ParameterCodec codec(model.topology, model.params, model.mask);
  const auto values = codec.free_values(result.theta_hat);
  for (std::size_t i = 0; i < values.size(); ++i) free[result.free_names[i]] = values[i];
  j["free"] = free;
  j["best_restart"] = result.best_restart;
  j["n_restarts"] = config.n_restarts;
  j["seed"] = config.seed;
  j["optimizer"] = config.optimizer == Optimizer::NelderMead ? "nelder-mead" : "bfgs";
  j["exclude_times"] = config.exclude_times;
  j["warnings"] = result.warnings;
  std::size_t finite = 0;
  Json restarts = Json::array();
  for (const auto& r : result.restarts) {
    if (std::isfinite(r.objective)) ++finite;
    restarts.push_back({{"objective", std::isfinite(r.objective) ? Json(r.objective) : Json(nullptr)},
                        {"iterations", r.iterations},
                        {"status", r.status},
                        {"start", r.start},
                        {"end", r.end}});
  }
  j["converged_restarts"] = finite;
  j["restarts"] = restarts;
  return j.dump(2) + "\n";
}

void write_bootstrap_csv(const std::filesystem::path& path, const BootstrapResult& result) {
  std::ostringstream out;
  out << "replicate";
  for (const auto& n : result.names) out << ',' << n;
  out << '\n';
  for (std::size_t r = 0; r < result.replicates.size(); ++r) {
    out << r;
    for (std::size_t k = 0; k < result.names.size(); ++k)
      out << ',' << (result.replicates[r].empty() ? std::string("NA") : format_double(result.replicates[r][k]));
    out << '\n';
  }
  write_text(path, out.str());
}

std::string bootstrap_summary_json(const BootstrapResult& result) {
  Json j;
  j["replicates"] = result.replicates.size();
  j["failed"] = result.failed;
  Json params = Json::array();
  for (std::size_t k = 0; k < result.names.size(); ++k)
    params.push_back({{"name", result.names[k]},
                      {"lower", result.lower[k]},
                      {"median", result.median[k]},
                      {"upper", result.upper[k]}});
  j["intervals"] = params;
  j["warnings"] = result.warnings;
  return j.dump(2) + "\n";
}

std::string cv_json(const std::vector<CVResult>& results, const CVConfig& config, bool comparable) {
  Json j;
  j["folds"] = config.folds;
  j["seed"] = config.seed;
  Json cands = Json::array();
  for (const auto& r : results)
    cands.push_back({{"name", r.name},
                     {"num_matures", r.num_matures},
                     {"mean_objective", r.mean_objective},
                     {"per_fold", r.per_fold}});
  j["candidates"] = cands;
  std::vector<std::size_t> order(results.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return results[a].mean_objective < results[b].mean_objective; });
  Json ranking = Json::array();
  for (std::size_t i : order) ranking.push_back(results[i].name);
  j["ranking"] = ranking;
  if (!comparable)
    j["caveat"] =
        "candidates differ in the number of mature types, so their losses sum different numbers of correlation "
        "terms and are not directly comparable";
  return j.dump(2) + "\n";
}

std::string study_json(const StudyResult& result, std::size_t replicates, std::size_t n_lineages) {
  Json j;
  j["replicates"] = replicates;
  j["n_lineages"] = n_lineages;
  auto num = [](double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); };
  Json params = Json::array();
  for (const auto& s : result.summary)
    params.push_back({{"name", s.name},
                      {"truth", num(s.truth)},
                      {"median", num(s.median)},
                      {"mad", num(s.mad)},
                      {"sd", num(s.sd)},
                      {"median_rel_error", num(s.median_rel_error)},
                      {"mad_rel_error", num(s.mad_rel_error)},
                      {"sd_rel_error", num(s.sd_rel_error)}});
  j["parameters"] = params;
  j["objective"] = {{"median", num(result.objective_median)},
                    {"mad", num(result.objective_mad)},
                    {"sd", num(result.objective_sd)}};
  j["estimates"] = result.estimates;
  j["objectives"] = result.objectives;
  return j.dump(2) + "\n";
}

std::uint64_t config_hash(const std::string& canonical_config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_config) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DomainError("error writing '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace branchmoments
