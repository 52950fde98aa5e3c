#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "branchmoments/validation.hpp"

using namespace branchmoments;

namespace {

ReadDataset dataset(std::size_t n, std::uint64_t seed) {
  SimConfig cfg;
  cfg.n_lineages = n;
  cfg.obs_times = {2.0, 8.0, 15.0};
  cfg.sample_sizes = {1000, 1000, 1000};
  cfg.read_filter_threshold = 0;
  cfg.seed = seed;
  return simulate_dataset(canonical_model("a"), canonical_truth("a"), cfg);
}

}  // namespace

TEST_SUITE("validation") {
  TEST_CASE("percentile interpolates between order statistics") {
    CHECK(percentile({3, 1, 2, 4}, 0.5) == doctest::Approx(2.5));
    CHECK(percentile({1, 2, 3, 4, 5}, 0.0) == 1.0);
    CHECK(percentile({1, 2, 3, 4, 5}, 1.0) == 5.0);
    CHECK(percentile({0, 10}, 0.25) == doctest::Approx(2.5));
  }

  TEST_CASE("mad is the unscaled median absolute deviation") {
    CHECK(mad({1, 1, 2, 2, 4, 6, 9}) == doctest::Approx(1.0));
    CHECK(mad({5, 5, 5}) == 0.0);
  }

  TEST_CASE("fold assignment is balanced and reproducible") {
    const auto f = fold_assignment(103, 5, 9);
    std::vector<std::size_t> sizes(5, 0);
    for (auto k : f) sizes.at(k)++;
    CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
    CHECK(f == fold_assignment(103, 5, 9));
    CHECK(f != fold_assignment(103, 5, 10));
    CHECK_THROWS_WITH_AS(fold_assignment(20, 5, 1), doctest::Contains("fold too small"), DomainError);
    CHECK_THROWS_AS(fold_assignment(100, 1, 1), DomainError);
  }

  TEST_CASE("lumping sums reads and totals") {
    const auto d = dataset(300, 2);
    const auto l = lump_dataset(d, {{0}, {1, 2}}, {"1", "2+3"});
    CHECK(l.cell_types == std::vector<std::string>{"1", "2+3"});
    for (std::size_t j = 0; j < d.num_times(); ++j) {
      CHECK(l.B[j * 2 + 1] == d.B[j * 3 + 1] + d.B[j * 3 + 2]);
      CHECK(l.b[j * 2 + 1] == d.b[j * 3 + 1] + d.b[j * 3 + 2]);
      for (std::size_t p = 0; p < d.num_barcodes(); ++p) {
        CHECK(l.read(p, j, 0) == d.read(p, j, 0));
        CHECK(l.read(p, j, 1) == d.read(p, j, 1) + d.read(p, j, 2));
      }
    }
  }

  TEST_CASE("bootstrap data sets keep the shape and sample sizes") {
    const auto d = dataset(500, 3);
    const auto r = bootstrap_dataset(d, 7, 0, true);
    CHECK(r.num_barcodes() == d.num_barcodes());
    CHECK(r.B == d.B);
    for (std::size_t j = 0; j < d.num_times(); ++j) {
      for (std::size_t m = 0; m < 3; ++m) {
        std::int64_t total = 0;
        for (std::size_t p = 0; p < r.num_barcodes(); ++p) total += r.read(p, j, m);
        // the sampling fraction b/B is kept, so totals move with the resampled population
        CHECK(static_cast<double>(total) == doctest::Approx(d.b[j * 3 + m]).epsilon(0.2));
      }
    }
    const auto again = bootstrap_dataset(d, 7, 0, true);
    CHECK(again.reads == r.reads);
    CHECK(bootstrap_dataset(d, 7, 1, true).reads != r.reads);

    // barcode resampling alone copies whole rows
    const auto plain = bootstrap_dataset(d, 7, 0, false);
    std::set<std::vector<std::int64_t>> rows;
    const std::size_t row = d.num_times() * 3;
    for (std::size_t p = 0; p < d.num_barcodes(); ++p)
      rows.emplace(d.reads.begin() + p * row, d.reads.begin() + (p + 1) * row);
    for (std::size_t p = 0; p < plain.num_barcodes(); ++p)
      CHECK(rows.count(std::vector<std::int64_t>(plain.reads.begin() + p * row, plain.reads.begin() + (p + 1) * row)));
  }

  TEST_CASE("bootstrap produces ordered percentile intervals") {
    const auto t = canonical_model("a");
    const auto truth = canonical_truth("a");
    const auto d = dataset(2000, 4);
    FitConfig fc;
    fc.n_restarts = 2;
    BootstrapConfig bc;
    bc.replicates = 6;
    bc.restarts_per_replicate = 1;
    const auto r = bootstrap(t, d, fc, ParamMask::deaths_fixed(t), truth, truth, bc);
    CHECK(r.replicates.size() == 6);
    CHECK(r.names.size() == r.lower.size());
    for (std::size_t k = 0; k < r.names.size(); ++k) {
      if (r.failed == 6) break;
      CHECK(r.lower[k] <= r.median[k]);
      CHECK(r.median[k] <= r.upper[k]);
    }
  }

  TEST_CASE("cross-validation refuses unequal mature counts unless forced") {
    const auto d = dataset(500, 5);
    CVCandidate full{"a", canonical_model("a"), ParamMask::deaths_fixed(canonical_model("a")), canonical_truth("a"), {}};
    ModelTopology two;
    two.progenitors = {"a"};
    two.matures = {"1", "2+3"};
    two.parent = {{"1", "a"}, {"2+3", "a"}};
    Params p2 = canonical_truth("a");
    p2.nu_mat = {36, 22};
    p2.mu_mat = {0.24, 0.12};
    CVCandidate lumped{"lumped", two, ParamMask::deaths_fixed(two), p2, {{0}, {1, 2}}};
    FitConfig fc;
    fc.n_restarts = 1;
    CVConfig cc;
    cc.folds = 2;
    CHECK_THROWS_AS(cross_validate({full, lumped}, d, fc, cc), DomainError);
    cc.force = true;
    const auto res = cross_validate({full, lumped}, d, fc, cc);
    REQUIRE(res.size() == 2);
    CHECK(res[0].per_fold.size() == 2);
    CHECK(res[1].num_matures == 2);
    CHECK(res[0].mean_objective == doctest::Approx((res[0].per_fold[0] + res[0].per_fold[1]) / 2));
  }

  TEST_CASE("profiles") {
    StudySpec s;
    apply_profile(s, "paper");
    CHECK(s.replicates == 400);
    CHECK(s.n_lineages == 20000);
    CHECK(s.fit.n_restarts == 250);
    apply_profile(s, "desk");
    CHECK(s.replicates == 20);
    CHECK(s.n_lineages == 2000);
    CHECK(s.fit.n_restarts == 50);
    CHECK_THROWS_AS(apply_profile(s, "huge"), DomainError);
    const auto times = default_obs_times();
    CHECK(std::is_sorted(times.begin(), times.end()));
  }
}
