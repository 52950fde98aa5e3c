#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "branchmoments/io.hpp"
#include "tempdir.hpp"

using namespace branchmoments;

namespace {

ReadDataset dataset() {
  SimConfig cfg;
  cfg.n_lineages = 400;
  cfg.obs_times = {2.0, 4.5, 12.5};
  cfg.sample_sizes = {1000, 1000, 1000, 1000, 1000};
  cfg.read_filter_threshold = 0;
  cfg.seed = 8;
  return simulate_dataset(canonical_model("c"), canonical_truth("c"), cfg);
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("format_double round trips") {
    for (double x : {0.1, 1.0 / 3.0, 1e-300, 12.5, -7e22, 0.0}) CHECK(std::stod(format_double(x)) == x);
    CHECK(format_double(12.5) == "12.5");
  }

  TEST_CASE("model.json round trip") {
    ModelFile m;
    m.topology = canonical_model("c");
    m.params = canonical_truth("c");
    m.mask = ParamMask::from_names(m.topology, {"mu_mat.1", "pi.HSC"});
    const auto back = parse_model_json(model_json(m));
    CHECK(back.topology.progenitors == m.topology.progenitors);
    CHECK(back.topology.matures == m.topology.matures);
    CHECK(back.topology.parent == m.topology.parent);
    CHECK(flatten(back.params) == flatten(m.params));
    CHECK(back.mask.fixed == m.mask.fixed);
  }

  TEST_CASE("model.json defaults and errors") {
    const auto m = parse_model_json(R"({"compartments": {"progenitors": [{"id": "P", "children": ["x", "y"]}]},
                                       "params": {"lambda": 0.5}})");
    CHECK(m.topology.hsc == "HSC");
    CHECK(m.params.nu_mat == std::vector<double>{0.0, 0.0});
    CHECK(m.params.pi == std::vector<double>{0.5, 0.5});
    CHECK(m.mask.fixed_names(m.topology).empty());
    CHECK_THROWS_AS(parse_model_json("{not json"), DomainError);
    CHECK_THROWS_AS(parse_model_json(R"({"compartments": {"progenitors": []}})"), DomainError);
    CHECK_THROWS_AS(
        parse_model_json(R"({"compartments": {"progenitors": [{"id": "P", "children": ["x"]}]}, "fixed": ["bogus"]})"),
        DomainError);
  }

  TEST_CASE("lumped model file") {
    const auto m = read_model_json(std::string(BRANCHMOMENTS_SOURCE_DIR) + "/models/model_c_lumped.json");
    CHECK(m.topology.num_matures() == 3);
    REQUIRE(m.lumping.size() == 3);
    const auto d = dataset();
    const auto groups = column_groups(d, m);
    REQUIRE(groups.size() == 3);
    const auto view = model_view(d, m);
    CHECK(view.cell_types == m.topology.matures);
    std::size_t summed = 0;
    for (const auto& g : groups) summed += g.size();
    CHECK(summed == 5);
  }

  TEST_CASE("reads and cbc round trip losslessly") {
    TempDir dir("io");
    const auto d = dataset();
    write_reads_csv(dir / "reads.csv", d);
    write_cbc_csv(dir / "cbc.csv", d);
    const auto back = read_dataset(dir / "reads.csv", dir / "cbc.csv", canonical_model("c"));
    CHECK(back.barcode_ids == d.barcode_ids);
    CHECK(back.times == d.times);
    CHECK(back.cell_types == d.cell_types);
    CHECK(back.reads == d.reads);
    CHECK(back.B == d.B);
    CHECK(back.b == d.b);
  }

  TEST_CASE("missing rows read as zero and columns follow the model") {
    TempDir dir("io_sparse");
    {
      std::ofstream(dir / "reads.csv") << "barcode_id,time,cell_type,read_count\nbc1,1,T,4\nbc2,2,B,7\nbc2,1,B,1\n";
      std::ofstream(dir / "cbc.csv") << "time,cell_type,B,b\n1,T,100,10\n1,B,200,10\n2,T,100,10\n2,B,200,20\n";
    }
    ModelTopology t;
    t.progenitors = {"P"};
    t.matures = {"B", "T"};
    t.parent = {{"B", "P"}, {"T", "P"}};
    const auto d = read_dataset(dir / "reads.csv", dir / "cbc.csv", t);
    CHECK(d.cell_types == std::vector<std::string>{"B", "T"});
    REQUIRE(d.num_barcodes() == 2);
    CHECK(d.read(0, 0, 1) == 4);
    CHECK(d.read(0, 1, 0) == 0);
    CHECK(d.read(1, 1, 0) == 7);
    CHECK(d.b[1 * 2 + 0] == 20);

    std::ofstream(dir / "bad.csv") << "barcode_id,time,cell_type,read_count\nbc1,1,NK,4\n";
    CHECK_THROWS_AS(read_dataset(dir / "bad.csv", dir / "cbc.csv"), DomainError);
    std::ofstream(dir / "neg.csv") << "barcode_id,time,cell_type,read_count\nbc1,1,T,-4\n";
    CHECK_THROWS_AS(read_dataset(dir / "neg.csv", dir / "cbc.csv"), DomainError);
  }

  TEST_CASE("correlation csv marks undefined cells") {
    TempDir dir("io_corr");
    CorrTable t(2, {1.0, 2.0});
    t.at(0, 0) = 0.25;
    write_corr_csv(dir / "c.csv", {"x", "y"}, t);
    const auto text = read_text(dir / "c.csv");
    CHECK(text.find("time,pair,psi_model") == 0);
    CHECK(text.find("0.25") != std::string::npos);
    CHECK(text.find("NA") != std::string::npos);
  }

  TEST_CASE("config hash is FNV-1a") {
    CHECK(config_hash("") == 0xcbf29ce484222325ULL);
    CHECK(config_hash("a") == 0xaf63dc4c8601ec8cULL);
  }
}
