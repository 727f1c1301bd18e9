#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "denise/harness.hpp"
#include "denise/rng.hpp"
#include "doctest.h"

using namespace denise;
namespace fs = std::filesystem;

namespace {

// Three assets: B is a constant multiple of A (identical returns), C independent.
void write_prices(const std::string& path, int days, std::uint64_t seed) {
  Rng rng(seed);
  std::ofstream os(path);
  os << "date,AAA,BBB,CCC\n";
  os.precision(17);
  double a = 100.0, c = 50.0;
  for (int t = 0; t < days; ++t) {
    os << "d" << t << ',' << a << ',' << 2.0 * a << ',' << c << '\n';
    a *= std::exp(0.01 * rng.normal());
    c *= std::exp(0.02 * rng.normal());
  }
}

Dataset small_dataset(std::uint64_t seed, std::int64_t count, int n = 10, int k0 = 2) {
  GenConfig cfg;
  cfg.n = n;
  cfg.k0 = k0;
  cfg.s0 = 0.9;
  cfg.seed = seed;
  cfg.count = count;
  return gen_dataset(cfg);
}

}  // namespace

TEST_CASE("matrix csv round-trip and symmetry policy") {
  SymMatrix m(3);
  Rng rng(2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j <= i; ++j) m.set(i, j, rng.normal());
  std::string path = "test_matrix.csv";
  write_matrix_csv(m, path);
  SymMatrix back = read_matrix_csv(path);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(back(i, j) == m(i, j));
  std::remove(path.c_str());

  std::ofstream os(path);
  os << "1.0,0.5\n0.4,1.0\n";
  os.close();
  CHECK_THROWS_AS(read_matrix_csv(path, SymmetryPolicy::Reject), DimensionError);
  SymMatrix sym = read_matrix_csv(path, SymmetryPolicy::Symmetrize);
  CHECK(sym(0, 1) == doctest::Approx(0.45));
  std::remove(path.c_str());
}

TEST_CASE("ingest produces unit-diagonal correlations and finds perfect pairs") {
  std::string path = "test_prices.csv";
  write_prices(path, 80, 11);
  IngestConfig cfg;
  cfg.prices_csv = path;
  cfg.window = 20;
  cfg.shift = 5;
  cfg.split_fraction = 0.5;
  IngestResult r = ingest_correlations(cfg);
  std::remove(path.c_str());

  std::size_t total = r.train.size() + r.test.size();
  CHECK(total >= 5);
  CHECK(r.dropped.empty());
  // chronological split: floor(0.5 * total) windows in train
  CHECK(r.train.size() == static_cast<std::size_t>(0.5 * static_cast<double>(total)));
  for (const std::vector<SymMatrix>* part : {&r.train, &r.test})
    for (const SymMatrix& c : *part) {
      REQUIRE(c.dim() == 3);
      for (int i = 0; i < 3; ++i) CHECK(c(i, i) == 1.0);
      CHECK(c(0, 1) == doctest::Approx(1.0).epsilon(1e-12));  // B = 2A
      CHECK(std::abs(c(0, 2)) < 1.0);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(std::abs(c(i, j)) <= 1.0 + 1e-12);
    }
}

TEST_CASE("ingest forward-fills short gaps and drops windows with long gaps") {
  std::string path = "test_prices_gap.csv";
  {
    Rng rng(3);
    std::ofstream os(path);
    os << "date,AAA,BBB\n";
    os.precision(17);
    double a = 100.0, b = 40.0;
    for (int t = 0; t < 40; ++t) {
      os << "d" << t << ',';
      os << a << ',';
      // BBB goes missing for 10 straight days in the middle: beyond max_ffill
      if (t >= 15 && t < 25)
        os << '\n';
      else
        os << b << '\n';
      a *= std::exp(0.01 * rng.normal());
      b *= std::exp(0.015 * rng.normal());
    }
  }
  IngestConfig cfg;
  cfg.prices_csv = path;
  cfg.window = 10;
  cfg.shift = 2;
  cfg.max_ffill = 5;
  IngestResult r = ingest_correlations(cfg);
  std::remove(path.c_str());
  CHECK(!r.dropped.empty());          // windows overlapping the hole are rejected
  CHECK(r.train.size() + r.test.size() >= 1);  // clean windows survive
}

TEST_CASE("ingest drops zero-variance windows") {
  std::string path = "test_prices_flat.csv";
  {
    Rng rng(7);
    std::ofstream os(path);
    os << "date,AAA,BBB\n";
    double a = 100.0;
    for (int t = 0; t < 30; ++t) {
      os << "d" << t << ',' << a << ",25.0\n";  // BBB never moves
      a *= std::exp(0.01 * rng.normal());
    }
  }
  IngestConfig cfg;
  cfg.prices_csv = path;
  cfg.window = 10;
  cfg.shift = 5;
  IngestResult r = ingest_correlations(cfg);
  std::remove(path.c_str());
  CHECK(r.train.empty());
  CHECK(r.test.empty());
  CHECK(!r.dropped.empty());
}

TEST_CASE("ingest config validation") {
  IngestConfig cfg;
  cfg.window = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = IngestConfig{};
  cfg.shift = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = IngestConfig{};
  cfg.split_fraction = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(IngestConfig{}.validate());
}

TEST_CASE("matrices_to_dataset wraps matrices with a zero low-rank part") {
  std::vector<SymMatrix> ms;
  Rng rng(5);
  for (int s = 0; s < 3; ++s) {
    SymMatrix m(4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j <= i; ++j) m.set(i, j, rng.normal());
    ms.push_back(m);
  }
  Dataset ds = matrices_to_dataset(ms);
  REQUIRE(ds.size() == 3);
  for (std::int64_t i = 0; i < 3; ++i) {
    CHECK(frobenius_norm(ds.low_rank(i)) == 0.0);
    SymMatrix m = ds.matrix(i);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) CHECK(m(r, c) == ms[static_cast<std::size_t>(i)](r, c));
  }
  CHECK_THROWS_AS(matrices_to_dataset({}), ConfigError);
}

TEST_CASE("mean recovered rank is nondecreasing in lambda") {
  Dataset ds = small_dataset(13, 3);
  BaselineConfig cfg;
  cfg.max_iters = 200;
  double prev = -1.0;
  for (double lambda : {0.02, 0.1, 0.3, 1.0}) {
    cfg.lambda = lambda;
    double mean_rank = 0.0;
    for (std::int64_t i = 0; i < ds.size(); ++i)
      mean_rank += approx_rank(pcp(ds.matrix(i), cfg).L, 0.01);
    mean_rank /= static_cast<double>(ds.size());
    CHECK(mean_rank >= prev - 1e-12);
    prev = mean_rank;
  }
}

TEST_CASE("calibrate_lambda hits the target mean rank") {
  Dataset ds = small_dataset(17, 3);
  BaselineConfig cfg;
  cfg.lambda = 0.2;
  CalibrationResult r = calibrate_lambda(BaselineAlgo::Pcp, ds, 2, cfg);
  CHECK(r.lambda > 0.0);
  CHECK(std::abs(r.achieved_mean_rank - 2.0) <= 0.1);
}

TEST_CASE("compare writes results, summary, manifest, and verifies on re-run") {
  Dataset ds = small_dataset(23, 4, 8, 2);
  std::string data_path = "test_cmp_data.dns";
  write_dataset(ds, data_path);

  Architecture arch = Architecture::make(8, 2);
  NetworkParams p = NetworkParams::init(arch, 3);
  std::string model_path = "test_cmp_model.json";
  save_model(p, 1e-3, "harness-test", model_path);

  std::vector<MethodSpec> methods;
  MethodSpec m1;
  m1.kind = MethodSpec::Kind::Model;
  m1.name = "denise";
  m1.model_path = model_path;
  MethodSpec m2;
  m2.kind = MethodSpec::Kind::Oracle;
  m2.name = "oracle";
  MethodSpec m3;
  m3.kind = MethodSpec::Kind::Zero;
  m3.name = "zero";
  MethodSpec m4;
  m4.kind = MethodSpec::Kind::Fpcp;
  m4.name = "fpcp";
  m4.baseline.lambda = 0.2;
  m4.baseline.target_rank = 2;
  methods = {m1, m2, m3, m4};

  CompareOptions opts;
  opts.out_dir = "test_cmp_out";
  CompareResult res = compare(methods, data_path, opts);
  REQUIRE(res.rows.size() == 4);
  CHECK(fs::exists("test_cmp_out/denise_results.csv"));
  CHECK(fs::exists("test_cmp_out/oracle_results.csv"));
  CHECK(fs::exists("test_cmp_out/timings.csv"));
  CHECK(fs::exists("test_cmp_out/summary.md"));
  CHECK(fs::exists(res.manifest_path));

  // the oracle row reports the planted rank; the zero row reconstructs S = M
  CHECK(res.rows[1].summary.r_L.mean == doctest::Approx(2.0));
  CHECK(res.rows[2].summary.rel_err_S.mean > 0.0);

  CHECK(rerun_compare_from_manifest(res.manifest_path, "test_cmp_out2"));

  fs::remove_all("test_cmp_out");
  fs::remove_all("test_cmp_out2");
  std::remove(data_path.c_str());
  std::remove(model_path.c_str());
}

TEST_CASE("compare assertion thresholds gate the result") {
  Dataset ds = small_dataset(29, 3, 6, 1);
  std::string data_path = "test_cmp_assert.dns";
  write_dataset(ds, data_path);
  NetworkParams p = NetworkParams::init(Architecture::make(6, 1), 5);
  std::string model_path = "test_cmp_assert_model.json";
  save_model(p, 1e-3, "harness-test", model_path);

  MethodSpec m;
  m.kind = MethodSpec::Kind::Model;
  m.name = "denise";
  m.model_path = model_path;
  CompareOptions opts;
  opts.out_dir = "test_cmp_assert_out";
  opts.assert_max_rel_err_L = 1e-9;  // an untrained net cannot be this good
  CompareResult res = compare({m}, data_path, opts);
  CHECK_FALSE(res.assertions_passed);

  fs::remove_all("test_cmp_assert_out");
  std::remove(data_path.c_str());
  std::remove(model_path.c_str());
}
