#include "denise/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace denise {

Mat Mat::identity(int n) {
  Mat m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat matmul(const Mat& A, const Mat& B) {
  if (A.cols != B.rows) throw DimensionError("matmul: inner dimension mismatch");
  Mat C(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i) {
    for (int l = 0; l < A.cols; ++l) {
      double aik = A(i, l);
      if (aik == 0.0) continue;
      for (int j = 0; j < B.cols; ++j) C(i, j) += aik * B(l, j);
    }
  }
  return C;
}

Mat transpose(const Mat& A) {
  Mat T(A.cols, A.rows);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) T(j, i) = A(i, j);
  return T;
}

SymMatrix::SymMatrix(int n) : n_(n), data_(static_cast<std::size_t>(n) * n, 0.0) {
  if (n < 1) throw DimensionError("SymMatrix: n must be >= 1");
}

SymMatrix SymMatrix::from_dense(int n, std::span<const double> rowmajor) {
  if (static_cast<int>(rowmajor.size()) != n * n)
    throw DimensionError("from_dense: need n*n entries");
  double scale = 0.0;
  for (double v : rowmajor) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      worst = std::max(worst, std::abs(rowmajor[static_cast<std::size_t>(i) * n + j] -
                                       rowmajor[static_cast<std::size_t>(j) * n + i]));
  if (worst > 1e-9 * std::max(scale, 1e-300))
    throw DimensionError("from_dense: input is not symmetric");
  return from_dense_symmetrized(n, rowmajor);
}

SymMatrix SymMatrix::from_dense_symmetrized(int n, std::span<const double> rowmajor) {
  if (static_cast<int>(rowmajor.size()) != n * n)
    throw DimensionError("from_dense_symmetrized: need n*n entries");
  SymMatrix m(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j)
      m.set(i, j, 0.5 * (rowmajor[static_cast<std::size_t>(i) * n + j] +
                         rowmajor[static_cast<std::size_t>(j) * n + i]));
  return m;
}

SymMatrix& SymMatrix::operator+=(const SymMatrix& o) {
  if (o.n_ != n_) throw DimensionError("SymMatrix +=: dimension mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

SymMatrix& SymMatrix::operator-=(const SymMatrix& o) {
  if (o.n_ != n_) throw DimensionError("SymMatrix -=: dimension mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

SymMatrix& SymMatrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Mat SymMatrix::to_mat() const {
  Mat m(n_, n_);
  m.a = data_;
  return m;
}

SymMatrix SymMatrix::from_mat_symmetrized(const Mat& A) {
  if (A.rows != A.cols) throw DimensionError("from_mat_symmetrized: not square");
  return from_dense_symmetrized(A.rows, A.a);
}

HalfVector half_vectorize(const SymMatrix& m) {
  int n = m.dim();
  HalfVector hv;
  hv.n = n;
  hv.data.reserve(static_cast<std::size_t>(n) * (n + 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) hv.data.push_back(m(i, j));
  return hv;
}

SymMatrix half_unvectorize(const HalfVector& hv) {
  int n = hv.n;
  if (static_cast<int>(hv.data.size()) != n * (n + 1) / 2)
    throw DimensionError("half_unvectorize: length != n(n+1)/2");
  SymMatrix m(n);
  std::size_t p = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) m.set(i, j, hv.data[p++]);
  return m;
}

FactorMatrix vector_to_factor(std::span<const double> x, int n, int k) {
  if (n < 1 || k < 1 || k > n) throw DimensionError("vector_to_factor: need 1 <= k <= n");
  if (static_cast<int>(x.size()) != n * k)
    throw DimensionError("vector_to_factor: length != n*k");
  FactorMatrix u;
  u.n = n;
  u.k = k;
  u.data.assign(x.begin(), x.end());
  return u;
}

std::vector<double> factor_to_vector(const FactorMatrix& u) { return u.data; }

SymMatrix factor_gram(const FactorMatrix& u) {
  SymMatrix l(u.n);
  for (int i = 0; i < u.n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = 0.0;
      for (int c = 0; c < u.k; ++c) s += u(i, c) * u(j, c);
      l.set(i, j, s);
    }
  }
  return l;
}

SymMatrix rho(std::span<const double> x, int n, int k) {
  return factor_gram(vector_to_factor(x, n, k));
}

double l1_norm(const SymMatrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += std::abs(v);
  return s;
}

double frobenius_norm(const SymMatrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return std::sqrt(s);
}

double max_abs(const SymMatrix& m) {
  double s = 0.0;
  for (double v : m.data()) s = std::max(s, std::abs(v));
  return s;
}

double frobenius_norm(const Mat& m) {
  double s = 0.0;
  for (double v : m.a) s += v * v;
  return std::sqrt(s);
}

double max_abs(const Mat& m) {
  double s = 0.0;
  for (double v : m.a) s = std::max(s, std::abs(v));
  return s;
}

double nuclear_norm(const SymMatrix& m) {
  EigenDecomposition e = sym_eigen(m);
  double s = 0.0;
  for (double v : e.values) s += std::abs(v);
  return s;
}

namespace {

double offdiag_frobenius(const Mat& w) {
  double s = 0.0;
  for (int i = 0; i < w.rows; ++i)
    for (int j = 0; j < w.cols; ++j)
      if (i != j) s += w(i, j) * w(i, j);
  return std::sqrt(s);
}

}  // namespace

EigenDecomposition sym_eigen(const SymMatrix& m, double tol) {
  int n = m.dim();
  Mat w = m.to_mat();
  Mat q = Mat::identity(n);
  double anorm = frobenius_norm(m);
  double stop = tol * std::max(anorm, 1e-300);

  const int max_sweeps = 100;
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    double off = offdiag_frobenius(w);
    if (off <= stop) break;
    // threshold shrinks with the remaining off-diagonal mass
    double thresh = off / (n * n);
    for (int p = 0; p < n - 1; ++p) {
      for (int r = p + 1; r < n; ++r) {
        double apq = w(p, r);
        if (std::abs(apq) <= thresh) continue;
        double app = w(p, p), aqq = w(r, r);
        double theta = (aqq - app) / (2.0 * apq);
        double t = (theta >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (int i = 0; i < n; ++i) {
          double wip = w(i, p), wiq = w(i, r);
          w(i, p) = c * wip - s * wiq;
          w(i, r) = s * wip + c * wiq;
        }
        for (int j = 0; j < n; ++j) {
          double wpj = w(p, j), wqj = w(r, j);
          w(p, j) = c * wpj - s * wqj;
          w(r, j) = s * wpj + c * wqj;
        }
        for (int i = 0; i < n; ++i) {
          double qip = q(i, p), qiq = q(i, r);
          q(i, p) = c * qip - s * qiq;
          q(i, r) = s * qip + c * qiq;
        }
      }
    }
  }
  if (sweep == max_sweeps && offdiag_frobenius(w) > stop)
    throw NumericError("sym_eigen: no convergence after " +
                       std::to_string(max_sweeps) + " sweeps");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> diag(n);
  for (int i = 0; i < n; ++i) diag[i] = w(i, i);
  // descending value, ties by original index
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return diag[a] > diag[b]; });

  EigenDecomposition e;
  e.values.resize(n);
  e.vectors = Mat(n, n);
  for (int c = 0; c < n; ++c) {
    e.values[c] = diag[order[c]];
    for (int i = 0; i < n; ++i) e.vectors(i, c) = q(i, order[c]);
  }
  return e;
}

namespace {

// Gram-Schmidt completion of the columns of U beyond index r to an
// orthonormal basis, seeding from standard basis vectors.
void complete_basis(Mat& u, int r) {
  int m = u.rows;
  int have = r;
  for (int e = 0; e < m && have < u.cols; ++e) {
    std::vector<double> v(m, 0.0);
    v[e] = 1.0;
    for (int c = 0; c < have; ++c) {
      double dot = 0.0;
      for (int i = 0; i < m; ++i) dot += v[i] * u(i, c);
      for (int i = 0; i < m; ++i) v[i] -= dot * u(i, c);
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    for (int i = 0; i < m; ++i) u(i, have) = v[i] / norm;
    ++have;
  }
  if (have < u.cols) throw NumericError("svd: basis completion failed");
}

}  // namespace

Svd svd(const Mat& a) {
  for (double v : a.a)
    if (!std::isfinite(v)) throw NumericError("svd: non-finite entry");
  if (a.rows < a.cols) {
    Svd s = svd(transpose(a));
    std::swap(s.u, s.v);
    return s;
  }
  int m = a.rows, n = a.cols;
  // B = A^T A, symmetric PSD
  SymMatrix b(std::max(n, 1));
  {
    Mat bt = matmul(transpose(a), a);
    b = SymMatrix::from_mat_symmetrized(bt);
  }
  EigenDecomposition e = sym_eigen(b);
  Svd out;
  out.sigma.resize(n);
  out.v = Mat(n, n);
  // eigenvalues of A^T A below the round-off floor are exact zeros at this
  // precision; without the cutoff they sqrt-inflate to ~1e-8 * sigma_max
  double lam_floor = (n > 0 ? std::max(e.values[0], 0.0) : 0.0) * 1e-13;
  for (int c = 0; c < n; ++c) {
    double lam = e.values[c];
    out.sigma[c] = lam > lam_floor ? std::sqrt(lam) : 0.0;
    for (int i = 0; i < n; ++i) out.v(i, c) = e.vectors(i, c);
  }
  out.u = Mat(m, n);
  int r = 0;
  for (int c = 0; c < n; ++c) {
    if (out.sigma[c] == 0.0) break;
    for (int i = 0; i < m; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += a(i, j) * out.v(j, c);
      out.u(i, c) = s / out.sigma[c];
    }
    ++r;
  }
  // re-orthonormalize the computed columns (one MGS pass), then complete
  for (int c = 0; c < r; ++c) {
    for (int p = 0; p < c; ++p) {
      double dot = 0.0;
      for (int i = 0; i < m; ++i) dot += out.u(i, c) * out.u(i, p);
      for (int i = 0; i < m; ++i) out.u(i, c) -= dot * out.u(i, p);
    }
    double norm = 0.0;
    for (int i = 0; i < m; ++i) norm += out.u(i, c) * out.u(i, c);
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (int i = 0; i < m; ++i) out.u(i, c) /= norm;
  }
  complete_basis(out.u, r);
  return out;
}

double spectral_norm(const Mat& a) {
  Svd s = svd(a);
  return s.sigma.empty() ? 0.0 : s.sigma[0];
}

}  // namespace denise
