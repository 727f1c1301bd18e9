#include "denise/baselines.hpp"

#include "denise/datagen.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace denise {

void BaselineConfig::validate() const {
  if (lambda <= 0.0) throw ConfigError("BaselineConfig: lambda must be > 0");
  if (tol <= 0.0) throw ConfigError("BaselineConfig: tol must be > 0");
  if (max_iters < 1) throw ConfigError("BaselineConfig: max_iters must be >= 1");
  if (mu_init_scale <= 0.0) throw ConfigError("BaselineConfig: mu_init_scale must be > 0");
  if (mu_growth <= 1.0) throw ConfigError("BaselineConfig: mu_growth must be > 1");
  if (target_rank && *target_rank < 1)
    throw ConfigError("BaselineConfig: target_rank must be >= 1");
}

double shrink(double x, double tau) {
  double m = std::abs(x) - tau;
  return m > 0.0 ? (x > 0.0 ? m : -m) : 0.0;
}

Mat shrink(const Mat& a, double tau) {
  Mat out = a;
  for (double& v : out.a) v = shrink(v, tau);
  return out;
}

SymMatrix shrink(const SymMatrix& a, double tau) {
  SymMatrix out(a.dim());
  for (int i = 0; i < a.dim(); ++i)
    for (int j = 0; j <= i; ++j) out.set(i, j, shrink(a(i, j), tau));
  return out;
}

Mat svt(const Mat& a, double tau) {
  Svd s = svd(a);
  int r = static_cast<int>(s.sigma.size());
  Mat scaled = s.u;  // columns scaled by thresholded singular values
  for (int c = 0; c < r; ++c) {
    double sv = shrink(s.sigma[static_cast<std::size_t>(c)], tau);
    for (int i = 0; i < scaled.rows; ++i) scaled(i, c) *= sv;
  }
  return matmul(scaled, transpose(s.v));
}

Mat truncated_svd(const Mat& a, int r) {
  Svd s = svd(a);
  int keep = std::min<int>(r, static_cast<int>(s.sigma.size()));
  Mat scaled = s.u;
  for (int c = 0; c < scaled.cols; ++c) {
    double sv = c < keep ? s.sigma[static_cast<std::size_t>(c)] : 0.0;
    for (int i = 0; i < scaled.rows; ++i) scaled(i, c) *= sv;
  }
  return matmul(scaled, transpose(s.v));
}

double augmented_lagrangian(const SymMatrix& m, const SymMatrix& l, const SymMatrix& s,
                            const SymMatrix& y, double mu, double lambda) {
  SymMatrix r = m;
  r -= l;
  r -= s;
  double inner = 0.0;
  auto ry = y.data();
  auto rr = r.data();
  for (std::size_t i = 0; i < rr.size(); ++i) inner += ry[i] * rr[i];
  double fro2 = 0.0;
  for (double v : rr) fro2 += v * v;
  return nuclear_norm(l) + lambda * l1_norm(s) + inner + 0.5 * mu * fro2;
}

namespace {

struct AlmState {
  SymMatrix L;
  SymMatrix S;
  SymMatrix Y;
  double mu;
};

// One (L, S) alternation at fixed (Y, mu); returns the L-change norm.
double alm_pass(const SymMatrix& m, AlmState& st, double lambda) {
  SymMatrix gl = m;  // M - S + Y/mu
  gl -= st.S;
  {
    SymMatrix ys = st.Y;
    ys *= 1.0 / st.mu;
    gl += ys;
  }
  Mat lnew = svt(gl.to_mat(), 1.0 / st.mu);
  SymMatrix lsym = SymMatrix::from_mat_symmetrized(lnew);
  SymMatrix diff = lsym;
  diff -= st.L;
  double change = frobenius_norm(diff);
  st.L = std::move(lsym);

  SymMatrix gs = m;  // M - L + Y/mu
  gs -= st.L;
  {
    SymMatrix ys = st.Y;
    ys *= 1.0 / st.mu;
    gs += ys;
  }
  st.S = shrink(gs, lambda / st.mu);
  return change;
}

BaselineResult alm_solve(const SymMatrix& m, const BaselineConfig& cfg,
                         bool exact_inner) {
  cfg.validate();
  auto t0 = std::chrono::steady_clock::now();
  int n = m.dim();
  BaselineResult res{SymMatrix(n), SymMatrix(n), 0, false, 0.0};
  double mnorm = frobenius_norm(m);
  if (mnorm == 0.0) {
    res.iters = 1;
    res.converged = true;
    return res;
  }

  double m2 = spectral_norm(m.to_mat());
  // dual scaling of Candes et al.: Y = M / max(||M||_2, ||M||_inf / lambda)
  double j = std::max(m2, max_abs(m) / cfg.lambda);
  AlmState st{SymMatrix(n), SymMatrix(n), m, cfg.mu_init_scale / m2};
  st.Y *= 1.0 / j;

  const double inner_tol = 1e-6 * mnorm;
  const int inner_cap = 25;
  while (res.iters < cfg.max_iters) {
    int inner = exact_inner ? inner_cap : 1;
    for (int t = 0; t < inner && res.iters < cfg.max_iters; ++t) {
      double change = alm_pass(m, st, cfg.lambda);
      ++res.iters;
      if (exact_inner && change <= inner_tol) break;
    }
    SymMatrix r = m;
    r -= st.L;
    r -= st.S;
    {
      SymMatrix upd = r;
      upd *= st.mu;
      st.Y += upd;
    }
    st.mu *= cfg.mu_growth;
    if (frobenius_norm(r) / mnorm <= cfg.tol) {
      res.converged = true;
      break;
    }
  }
  res.L = st.L;
  res.S = st.S;
  res.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
          .count();
  return res;
}

}  // namespace

BaselineResult pcp(const SymMatrix& m, const BaselineConfig& cfg) {
  return alm_solve(m, cfg, true);
}

BaselineResult ialm(const SymMatrix& m, const BaselineConfig& cfg) {
  return alm_solve(m, cfg, false);
}

BaselineResult fpcp(const SymMatrix& m, const BaselineConfig& cfg) {
  cfg.validate();
  if (!cfg.target_rank) throw ConfigError("fpcp: target_rank is required");
  int r = *cfg.target_rank;
  if (r > m.dim()) throw ConfigError("fpcp: target_rank > n");
  auto t0 = std::chrono::steady_clock::now();
  int n = m.dim();
  BaselineResult res{SymMatrix(n), SymMatrix(n), 0, false, 0.0};
  double mnorm = frobenius_norm(m);
  if (mnorm == 0.0) {
    res.iters = 1;
    res.converged = true;
    return res;
  }
  while (res.iters < cfg.max_iters) {
    SymMatrix ms = m;
    ms -= res.S;
    Mat lnew = truncated_svd(ms.to_mat(), r);
    ++res.iters;
    SymMatrix lsym = SymMatrix::from_mat_symmetrized(lnew);
    SymMatrix dl = lsym;
    dl -= res.L;
    double change = frobenius_norm(dl);
    res.L = std::move(lsym);
    SymMatrix ml = m;
    ml -= res.L;
    res.S = shrink(ml, cfg.lambda);
    SymMatrix rres = m;
    rres -= res.L;
    rres -= res.S;
    if (frobenius_norm(rres) / mnorm <= cfg.tol) {
      res.converged = true;
      break;
    }
    if (res.iters > 1 && change / mnorm <= 1e-10) break;  // fixed point, recon stuck
  }
  res.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
          .count();
  return res;
}

}  // namespace denise
