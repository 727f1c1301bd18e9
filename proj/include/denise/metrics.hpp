#pragma once

#include <functional>
#include <string>
#include <vector>

#include "denise/datagen.hpp"
#include "denise/linalg.hpp"

namespace denise {

struct EvalRecord {
  int r_L = 0;
  double s_S = 0.0;
  double rel_err_L = 0.0;
  double rel_err_S = 0.0;
  double re_ML = 0.0;  // ||M - L||_F / ||M||_F
  double wall_ms = 0.0;
};

// count of eigenvalues strictly larger than eps (signed comparison)
int approx_rank(const SymMatrix& l, double eps = 0.01);

// fraction of entries with |S_ij| < eps
double approx_sparsity(const SymMatrix& s, double eps = 0.01);

// ||A - A_ref||_F / ||A_ref||_F; zero reference is an error
double rel_error(const SymMatrix& a, const SymMatrix& a_ref);

using Decomposer = std::function<std::pair<SymMatrix, SymMatrix>(const SymMatrix&)>;

struct MetricStat {
  double mean = 0.0;
  double stddev = 0.0;
  double median = 0.0;
};

struct EvalSummary {
  std::vector<EvalRecord> records;   // per-sample, successful only
  std::int64_t failures = 0;
  MetricStat r_L, s_S, rel_err_L, rel_err_S, re_ML, wall_ms;
};

// Runs the decomposer over every sample, timing median-of-3 per matrix.
// Ground-truth relative errors use the dataset's L0/S0; when the dataset
// carries no decomposition (L0 == 0), rel_err fields are set to 0.
EvalSummary evaluate_method(const Decomposer& method, const Dataset& dataset,
                            double eps = 0.01, bool with_timing = true);

MetricStat aggregate(const std::vector<double>& xs);

// "mean (stddev)" rendering with two decimals, e.g. "0.26 (0.13)"
std::string format_mean_std(const MetricStat& s);

void write_records_csv(const EvalSummary& summary, const std::string& path,
                       bool include_timing);

}  // namespace denise
