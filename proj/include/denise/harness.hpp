#pragma once

#include <optional>
#include <string>
#include <vector>

#include "denise/baselines.hpp"
#include "denise/datagen.hpp"
#include "denise/metrics.hpp"
#include "denise/model.hpp"

namespace denise {

// ---- matrix CSV: one row per line, plain decimal, no header ----

enum class SymmetryPolicy { Reject, Symmetrize };

SymMatrix read_matrix_csv(const std::string& path,
                          SymmetryPolicy policy = SymmetryPolicy::Reject);
void write_matrix_csv(const SymMatrix& m, const std::string& path);

// ---- rolling correlation ingestion ----

enum class ReturnKind { Log, Simple };

struct IngestConfig {
  std::string prices_csv;
  int window = 252;           // trading days per correlation matrix
  int shift = 5;              // days between consecutive windows
  double split_fraction = 0.77;
  ReturnKind returns = ReturnKind::Log;
  int max_ffill = 5;          // forward-fill gap limit in days

  void validate() const;
};

struct IngestResult {
  std::vector<SymMatrix> train;
  std::vector<SymMatrix> test;
  std::vector<std::string> dropped;  // log of rejected windows
};

IngestResult ingest_correlations(const IngestConfig& cfg);

// Wrap a list of matrices as a Dataset with L0 = 0 (unsupervised sentinel).
Dataset matrices_to_dataset(const std::vector<SymMatrix>& ms, std::uint64_t seed = 0);

// ---- lambda calibration ----

enum class BaselineAlgo { Pcp, Ialm, Fpcp };

struct CalibrationResult {
  double lambda = 0.0;
  double achieved_mean_rank = 0.0;
};

// Bisection over lambda until the mean approx_rank over the subsample is
// within +-0.1 of target_rank. Mean rank is nondecreasing in lambda.
CalibrationResult calibrate_lambda(BaselineAlgo algo, const Dataset& subsample,
                                   int target_rank, BaselineConfig base_cfg,
                                   double eps = 0.01);

// ---- compare harness ----

struct MethodSpec {
  enum class Kind { Model, Pcp, Ialm, Fpcp, Oracle, Zero };
  Kind kind = Kind::Zero;
  std::string name;
  std::string model_path;  // Kind::Model
  BaselineConfig baseline;  // baseline kinds
};

struct CompareOptions {
  double eps = 0.01;
  bool with_timing = true;
  std::string out_dir;
  // assertion thresholds for `compare --assert`
  std::optional<double> assert_max_rel_err_L;
  std::optional<double> assert_rank;  // mean r(L) must be within 0.1
};

struct CompareRow {
  std::string name;
  EvalSummary summary;
};

struct CompareResult {
  std::vector<CompareRow> rows;
  bool assertions_passed = true;
  std::string manifest_path;
};

// Evaluates every method on the dataset file; writes per-method
// <name>_results.csv (deterministic, no timing), timings.csv, summary.md and
// manifest.json into out_dir.
CompareResult compare(const std::vector<MethodSpec>& methods,
                      const std::string& dataset_path, const CompareOptions& opts);

// Re-runs the compare described by a manifest into new_out_dir and checks
// that every deterministic output hash matches. Returns true on bit-identity.
bool rerun_compare_from_manifest(const std::string& manifest_path,
                                 const std::string& new_out_dir);

std::uint64_t hash_file(const std::string& path);

}  // namespace denise
