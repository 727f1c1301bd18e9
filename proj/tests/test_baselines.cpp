#include <cmath>
#include <vector>

#include "denise/baselines.hpp"
#include "denise/datagen.hpp"
#include "denise/metrics.hpp"
#include "denise/rng.hpp"
#include "doctest.h"

using namespace denise;

namespace {

// rank-1 PSD plus a handful of symmetric sparse entries
struct Planted {
  SymMatrix M{1};
  SymMatrix L0{1};
  SymMatrix S0{1};
};

Planted planted_problem(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> u(static_cast<std::size_t>(n));
  for (double& v : u) v = rng.normal();
  Planted p;
  p.L0 = SymMatrix(n);
  p.S0 = SymMatrix(n);
  p.M = SymMatrix(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j)
      p.L0.set(i, j, u[static_cast<std::size_t>(i)] * u[static_cast<std::size_t>(j)]);
  int planted = std::max(1, n / 5);
  for (int c = 0; c < planted; ++c) {
    int i = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(n));
    int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(n));
    p.S0.set(i, j, 5.0 * (rng.uniform() - 0.5));
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) p.M.set(i, j, p.L0(i, j) + p.S0(i, j));
  return p;
}

double sym_rel_err(const SymMatrix& a, const SymMatrix& ref) {
  double num = 0.0, den = 0.0;
  int n = a.dim();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double d = a(i, j) - ref(i, j);
      num += d * d;
      den += ref(i, j) * ref(i, j);
    }
  return std::sqrt(num / std::max(den, 1e-300));
}

}  // namespace

TEST_CASE("scalar and matrix soft-thresholding fixtures") {
  CHECK(shrink(3.0, 1.0) == 2.0);
  CHECK(shrink(-3.0, 1.0) == -2.0);
  CHECK(shrink(0.5, 1.0) == 0.0);
  CHECK(shrink(-0.5, 1.0) == 0.0);
  CHECK(shrink(1.0, 1.0) == 0.0);

  Mat a(2, 2);
  a(0, 0) = 2.0;
  a(0, 1) = -0.3;
  a(1, 0) = 0.9;
  a(1, 1) = -4.0;
  Mat s = shrink(a, 0.5);
  CHECK(s(0, 0) == 1.5);
  CHECK(s(0, 1) == 0.0);
  CHECK(s(1, 0) == doctest::Approx(0.4));
  CHECK(s(1, 1) == -3.5);
}

TEST_CASE("singular value thresholding on a diagonal fixture") {
  Mat d(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 2.0;
  Mat t = svt(d, 3.0);
  CHECK(std::abs(t(0, 0)) == doctest::Approx(1.0));
  CHECK(std::abs(t(1, 1)) <= 1e-10);
  CHECK(std::abs(t(0, 1)) <= 1e-10);

  // threshold above every singular value kills the matrix
  Mat z = svt(d, 10.0);
  for (double v : z.a) CHECK(std::abs(v) <= 1e-10);
}

TEST_CASE("truncated_svd keeps the top singular directions") {
  Rng rng(7);
  Mat a(6, 6);
  for (double& v : a.a) v = rng.normal();
  Mat t = truncated_svd(a, 2);
  Svd st = svd(t);
  int above = 0;
  for (double sv : st.sigma)
    if (sv > 1e-8 * st.sigma[0]) ++above;
  CHECK(above <= 2);
  // Eckart-Young: residual norm equals the tail singular values
  Svd sa = svd(a);
  double tail = 0.0;
  for (std::size_t i = 2; i < sa.sigma.size(); ++i) tail += sa.sigma[i] * sa.sigma[i];
  double res = 0.0;
  for (std::size_t i = 0; i < a.a.size(); ++i) {
    double d = a.a[i] - t.a[i];
    res += d * d;
  }
  CHECK(std::sqrt(res) == doctest::Approx(std::sqrt(tail)).epsilon(1e-8));
}

TEST_CASE("pcp and ialm on the zero matrix") {
  SymMatrix z(8);
  BaselineConfig cfg;
  cfg.lambda = 1.0 / std::sqrt(8.0);
  for (auto* fn : {&pcp, &ialm}) {
    BaselineResult r = (*fn)(z, cfg);
    CHECK(r.converged);
    CHECK(frobenius_norm(r.L) == 0.0);
    CHECK(frobenius_norm(r.S) == 0.0);
  }
}

TEST_CASE("pcp recovers a planted rank-1 plus sparse decomposition") {
  int n = 20;
  Planted p = planted_problem(n, 3);
  BaselineConfig cfg;
  cfg.lambda = 1.0 / std::sqrt(static_cast<double>(n));
  cfg.tol = 1e-8;
  BaselineResult r = pcp(p.M, cfg);
  CHECK(r.converged);
  CHECK(sym_rel_err(r.L, p.L0) <= 1e-3);
  CHECK(approx_rank(r.L, 0.01) == 1);
  // exact additivity up to the solver tolerance
  SymMatrix sum(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) sum.set(i, j, r.L(i, j) + r.S(i, j));
  CHECK(sym_rel_err(sum, p.M) <= 1e-6);
}

TEST_CASE("ialm agrees with pcp and spends fewer svds") {
  int fewer = 0, total = 0;
  for (std::uint64_t seed : {11u, 12u, 13u, 14u, 15u}) {
    Planted p = planted_problem(16, seed);
    BaselineConfig cfg;
    cfg.lambda = 0.25;
    cfg.tol = 1e-7;
    BaselineResult a = pcp(p.M, cfg);
    BaselineResult b = ialm(p.M, cfg);
    CHECK(a.converged);
    CHECK(b.converged);
    CHECK(sym_rel_err(b.L, a.L) <= 5e-2);
    ++total;
    if (b.iters <= a.iters) ++fewer;
  }
  // the single-sweep variant should essentially never need more SVDs
  CHECK(fewer >= total - 1);
}

TEST_CASE("fpcp with a huge lambda reduces to a truncated svd") {
  Rng rng(21);
  SymMatrix m(10);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j <= i; ++j) m.set(i, j, rng.normal());
  BaselineConfig cfg;
  cfg.lambda = 1e6;  // S is shrunk to zero every iteration
  cfg.target_rank = 3;
  BaselineResult r = fpcp(m, cfg);
  CHECK(frobenius_norm(r.S) == 0.0);
  Mat t = truncated_svd(m.to_mat(), 3);
  double diff = 0.0;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) diff = std::max(diff, std::abs(r.L(i, j) - t(i, j)));
  CHECK(diff <= 1e-8);
}

TEST_CASE("fpcp respects the target rank and the additivity invariant") {
  Planted p = planted_problem(14, 31);
  BaselineConfig cfg;
  cfg.lambda = 0.2;
  cfg.target_rank = 1;
  BaselineResult r = fpcp(p.M, cfg);
  Svd s = svd(r.L.to_mat());
  int above = 0;
  for (double sv : s.sigma)
    if (sv > 1e-8 * std::max(s.sigma[0], 1.0)) ++above;
  CHECK(above <= 1);
  CHECK(r.iters >= 1);
}

TEST_CASE("fpcp requires a target rank") {
  BaselineConfig cfg;
  cfg.target_rank.reset();
  SymMatrix m(4);
  m.set(0, 0, 1.0);
  CHECK_THROWS_AS(fpcp(m, cfg), ConfigError);
}

TEST_CASE("alternation steps do not increase the augmented lagrangian") {
  Rng rng(43);
  for (int rep = 0; rep < 5; ++rep) {
    int n = 10;
    SymMatrix m(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) m.set(i, j, rng.normal());
    double lambda = 0.3, mu = 0.5;
    SymMatrix y(n);  // Y = 0
    SymMatrix l(n), s(n);
    double before = augmented_lagrangian(m, l, s, y, mu, lambda);
    // L-step: argmin over L at fixed S
    Mat arg = m.to_mat();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) arg(i, j) += -s(i, j) + y(i, j) / mu;
    SymMatrix l2 = SymMatrix::from_mat_symmetrized(svt(arg, 1.0 / mu));
    double mid = augmented_lagrangian(m, l2, s, y, mu, lambda);
    CHECK(mid <= before + 1e-9);
    // S-step: argmin over S at fixed L
    SymMatrix s2(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j)
        s2.set(i, j, shrink(m(i, j) - l2(i, j) + y(i, j) / mu, lambda / mu));
    double after = augmented_lagrangian(m, l2, s2, y, mu, lambda);
    CHECK(after <= mid + 1e-9);
  }
}

TEST_CASE("baseline solvers are deterministic") {
  Planted p = planted_problem(12, 77);
  BaselineConfig cfg;
  cfg.lambda = 0.25;
  cfg.target_rank = 1;
  for (auto* fn : {&pcp, &ialm, &fpcp}) {
    BaselineResult a = (*fn)(p.M, cfg);
    BaselineResult b = (*fn)(p.M, cfg);
    CHECK(a.iters == b.iters);
    double diff = 0.0;
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j) diff += std::abs(a.L(i, j) - b.L(i, j));
    CHECK(diff == 0.0);
  }
}

TEST_CASE("baseline config validation") {
  BaselineConfig cfg;
  cfg.lambda = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = BaselineConfig{};
  cfg.tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = BaselineConfig{};
  cfg.max_iters = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = BaselineConfig{};
  cfg.mu_growth = 0.9;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(BaselineConfig{}.validate());
}
