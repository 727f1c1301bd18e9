#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace denise {

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// General dense row-major matrix, used for factors, eigenvector bases and SVD.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;  // rows*cols, row-major

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}
  double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

  static Mat identity(int n);
};

Mat matmul(const Mat& A, const Mat& B);
Mat transpose(const Mat& A);

// Dense n-by-n symmetric matrix. Symmetry is an invariant: mutation goes
// through set(), which writes both (i,j) and (j,i).
class SymMatrix {
 public:
  explicit SymMatrix(int n);

  // Rejects input whose asymmetry exceeds 1e-9 relative to max |entry|.
  static SymMatrix from_dense(int n, std::span<const double> rowmajor);
  // Accepts any square input, stores (A + A^T)/2.
  static SymMatrix from_dense_symmetrized(int n, std::span<const double> rowmajor);

  int dim() const { return n_; }
  double operator()(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * n_ + j];
  }
  void set(int i, int j, double v) {
    data_[static_cast<std::size_t>(i) * n_ + j] = v;
    data_[static_cast<std::size_t>(j) * n_ + i] = v;
  }
  std::span<const double> data() const { return data_; }

  SymMatrix& operator+=(const SymMatrix& o);
  SymMatrix& operator-=(const SymMatrix& o);
  SymMatrix& operator*=(double s);
  friend SymMatrix operator+(SymMatrix a, const SymMatrix& b) { return a += b; }
  friend SymMatrix operator-(SymMatrix a, const SymMatrix& b) { return a -= b; }

  Mat to_mat() const;
  static SymMatrix from_mat_symmetrized(const Mat& A);

 private:
  int n_;
  std::vector<double> data_;  // n*n row-major, kept symmetric
};

// Image of the half-vectorization operator: lower triangle, row by row.
struct HalfVector {
  int n = 0;                 // source dimension
  std::vector<double> data;  // length n(n+1)/2
};

// n-by-k factor U with L = U U^T; row-major, matching the reshape operator.
struct FactorMatrix {
  int n = 0;
  int k = 0;
  std::vector<double> data;  // n*k row-major

  double operator()(int i, int j) const {
    return data[static_cast<std::size_t>(i) * k + j];
  }
};

struct EigenDecomposition {
  std::vector<double> values;  // descending
  Mat vectors;                 // column i pairs with values[i]; orthogonal
};

struct Svd {
  Mat u;                       // m x r, orthonormal columns
  std::vector<double> sigma;   // descending, nonnegative
  Mat v;                       // n x r, orthonormal columns
};

// ---- reshaping operators ----

HalfVector half_vectorize(const SymMatrix& m);
SymMatrix half_unvectorize(const HalfVector& hv);

FactorMatrix vector_to_factor(std::span<const double> x, int n, int k);
std::vector<double> factor_to_vector(const FactorMatrix& u);

// X |-> g(X) g(X)^T : symmetric, PSD, rank <= k
SymMatrix rho(std::span<const double> x, int n, int k);
SymMatrix factor_gram(const FactorMatrix& u);  // U U^T

// ---- norms ----

double l1_norm(const SymMatrix& m);
double frobenius_norm(const SymMatrix& m);
double nuclear_norm(const SymMatrix& m);
double max_abs(const SymMatrix& m);

double frobenius_norm(const Mat& m);
double max_abs(const Mat& m);

// ---- eigen / svd kernels ----

// Cyclic Jacobi with threshold sweeps. Off-diagonal tolerance
// tol * ||A||_F (default 1e-12), cap 100 sweeps.
EigenDecomposition sym_eigen(const SymMatrix& m, double tol = 1e-12);

// Via eigendecomposition of A^T A (transpose trick for m < n).
Svd svd(const Mat& a);

double spectral_norm(const Mat& a);

}  // namespace denise
