#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "denise/linalg.hpp"
#include "denise/rng.hpp"

namespace denise {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class FactorDist { Normal, StudentT };

struct GenConfig {
  int n = 20;
  int k0 = 3;
  double s0 = 0.95;
  FactorDist distribution = FactorDist::Normal;
  int t_dof = 5;
  std::uint64_t seed = 0;
  std::int64_t count = 1;

  void validate() const;
};

struct SampleMeta {
  GenConfig cfg;
  std::int64_t index = 0;
};

struct Sample {
  SymMatrix M;
  SymMatrix L0;
  SymMatrix S0;
  SampleMeta meta;
};

// In-memory dataset; stores half-vectorized M and L0 compactly (S0 = M - L0).
class Dataset {
 public:
  Dataset(GenConfig cfg, int n) : cfg_(cfg), n_(n), stride_(n * (n + 1) / 2) {}

  const GenConfig& config() const { return cfg_; }
  int dim() const { return n_; }
  std::int64_t size() const { return static_cast<std::int64_t>(count_); }

  void append(const SymMatrix& m, const SymMatrix& l0);

  SymMatrix matrix(std::int64_t i) const;
  SymMatrix low_rank(std::int64_t i) const;
  SymMatrix sparse(std::int64_t i) const;

  std::span<const double> matrix_halfvec(std::int64_t i) const;
  std::span<const double> low_rank_halfvec(std::int64_t i) const;

 private:
  GenConfig cfg_;
  int n_;
  int stride_;
  std::size_t count_ = 0;
  std::vector<double> m_data_;
  std::vector<double> l_data_;
};

// L0 = U U^T with U entries i.i.d. from the configured distribution.
SymMatrix gen_low_rank(int n, int k0, FactorDist dist, int t_dof, Rng& rng);
// Test seam: entries of U come from `draw`.
SymMatrix gen_low_rank(int n, int k0, const std::function<double()>& draw);

// Sum of elementary 2x2-support PSD blocks; stops before the addition that
// would push the exact-zero fraction below s0.
SymMatrix gen_sparse(int n, double s0, Rng& rng);

double exact_zero_fraction(const SymMatrix& m);

Sample gen_sample(const GenConfig& cfg, std::int64_t index);
Dataset gen_dataset(const GenConfig& cfg);

// ---- dataset file format: one-line JSON header, then per-sample
// little-endian float64 records (halfvec M, halfvec L0, halfvec S0) ----

void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace denise
