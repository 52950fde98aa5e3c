#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "branchmoments/estimator.hpp"
#include "branchmoments/validation.hpp"

namespace branchmoments {

/// Model mature label -> data cell types summed into it.
using Lumping = std::vector<std::pair<std::string, std::vector<std::string>>>;

/// Contents of a model.json file.
struct ModelFile {
  ModelTopology topology;
  Params params;
  ParamMask mask;
  /// Optional; empty means the data's cell types match the model's matures by label.
  Lumping lumping;
};

/// Schema:
///   {"compartments": {"hsc": "HSC", "progenitors": [{"id": "P", "children": ["1", "2"]}]},
///    "params": {"lambda": 0.03, "nu_prog": {"P": 0.02}, "mu_prog": {...},
///               "nu_mat": {...}, "mu_mat": {...}, "pi": {"HSC": 0.1, "P": 0.9}},
///    "fixed": ["mu_mat.1", ...],
///    "lumping": {"2+3": ["2", "3"], ...}}
/// Missing params default to 0 (pi to uniform); a missing "fixed" fixes nothing.
ModelFile parse_model_json(const std::string& text);
ModelFile read_model_json(const std::filesystem::path& path);
std::string model_json(const ModelFile& model);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double x);

/// reads.csv: barcode_id,time,cell_type,read_count in long format. Zero counts
/// are omitted, except that a barcode with no reads at all keeps one zero row.
void write_reads_csv(const std::filesystem::path& path, const ReadDataset& data);
/// cbc.csv: time,cell_type,B,b
void write_cbc_csv(const std::filesystem::path& path, const ReadDataset& data);

/// Builds the dataset from both files. The time grid, the cell types (in order of
/// first appearance) and the per-type totals come from cbc.csv. Missing read rows are zero.
ReadDataset read_dataset(const std::filesystem::path& reads_csv, const std::filesystem::path& cbc_csv);
/// Same, with the columns put in the model's mature order.
ReadDataset read_dataset(const std::filesystem::path& reads_csv, const std::filesystem::path& cbc_csv,
                         const ModelTopology& topology);

/// The CBC table alone (no barcodes).
ReadDataset read_cbc(const std::filesystem::path& cbc_csv);

/// Reorders (and drops) columns by label.
ReadDataset select_types(const ReadDataset& data, const std::vector<std::string>& labels);
/// Data columns feeding each of the model's matures, following its lumping if any.
std::vector<std::vector<std::size_t>> column_groups(const ReadDataset& data, const ModelFile& model);
/// The data as the model sees them: columns selected or lumped, in model order.
ReadDataset model_view(const ReadDataset& data, const ModelFile& model);

/// time,pair,psi_model[,psi_hat]
void write_corr_csv(const std::filesystem::path& path, const std::vector<std::string>& labels,
                    const CorrTable& model, const CorrTable* empirical = nullptr);

std::string fit_json(const ModelFile& model, const FitResult& result, const FitConfig& config);
void write_bootstrap_csv(const std::filesystem::path& path, const BootstrapResult& result);
std::string bootstrap_summary_json(const BootstrapResult& result);
std::string cv_json(const std::vector<CVResult>& results, const CVConfig& config, bool comparable);
std::string study_json(const StudyResult& result, std::size_t replicates, std::size_t n_lineages);

/// FNV-1a over the bytes.
std::uint64_t config_hash(const std::string& canonical_config);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace branchmoments
