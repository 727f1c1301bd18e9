#pragma once

#include <optional>

#include "denise/linalg.hpp"

namespace denise {

struct BaselineConfig {
  double lambda = 0.1;
  std::optional<int> target_rank;  // mandatory for fpcp
  double tol = 1e-7;               // on ||M - L - S||_F / ||M||_F
  int max_iters = 500;
  // augmented-Lagrangian penalty schedule
  double mu_init_scale = 1.25;     // mu = scale / ||M||_2
  double mu_growth = 1.6;

  void validate() const;
};

struct BaselineResult {
  SymMatrix L;
  SymMatrix S;
  int iters = 0;  // number of SVDs performed
  bool converged = false;
  double wall_ms = 0.0;
};

double shrink(double x, double tau);
Mat shrink(const Mat& a, double tau);
SymMatrix shrink(const SymMatrix& a, double tau);

// singular value thresholding: U shrink(Sigma, tau) V^T
Mat svt(const Mat& a, double tau);

// best rank-r approximation via truncated SVD
Mat truncated_svd(const Mat& a, int r);

// Principal Component Pursuit by augmented-Lagrangian alternating directions;
// the (L, S) subproblem is solved to tolerance inside each outer iteration.
BaselineResult pcp(const SymMatrix& m, const BaselineConfig& cfg);

// Inexact ALM: a single (L, S) alternation per outer iteration.
BaselineResult ialm(const SymMatrix& m, const BaselineConfig& cfg);

// Fast PCP: alternate rank-r truncated SVD of M - S with S = shrink(M - L, lambda).
BaselineResult fpcp(const SymMatrix& m, const BaselineConfig& cfg);

// Augmented Lagrangian value at (L, S, Y, mu); exposed for the monotonicity tests.
double augmented_lagrangian(const SymMatrix& m, const SymMatrix& l, const SymMatrix& s,
                            const SymMatrix& y, double mu, double lambda);

}  // namespace denise
