#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "denise/linalg.hpp"

namespace denise {

// 4 weight layers: d_in = n(n+1)/2 -> h1 -> h2 -> h3 -> d_out = n*k,
// sigmoid on hidden layers, affine output.
struct Architecture {
  int n = 0;
  int k = 0;
  std::vector<int> layer_widths;  // [d_in, h1, h2, h3, d_out]

  // Hidden widths (4d,2d,d) scaled by one factor so the trainable-parameter
  // count lands nearest 32 * n(n+1)/2 (biases included in the count).
  static Architecture make(int n, int k);

  int input_dim() const { return layer_widths.front(); }
  int output_dim() const { return layer_widths.back(); }
  std::int64_t param_count() const;
};

struct Layer {
  Mat w;                  // out x in
  std::vector<double> b;  // out
};

struct NetworkParams {
  Architecture arch;
  std::vector<Layer> layers;  // size 4

  static NetworkParams zeros(const Architecture& arch);
  // Glorot-uniform weights, zero biases.
  static NetworkParams init(const Architecture& arch, std::uint64_t seed);

  void check_finite() const;

  // flat view helpers used by the trainer and finite-difference tests
  std::int64_t flat_size() const;
  double get_flat(std::int64_t i) const;
  void add_flat(std::int64_t i, double v);
};

// Pseudo-Huber smooth surrogate for |x|: mu(x) = sqrt(x^2 + delta^2) - delta.
// |mu'| <= 1, mu'' <= 1/delta, |mu(x) - |x|| <= delta.
struct SmoothAbs {
  double delta = 1e-3;

  explicit SmoothAbs(double d = 1e-3) : delta(d) {
    if (d <= 0.0) throw std::invalid_argument("SmoothAbs: delta must be > 0");
  }
  double value(double x) const;
  double d1(double x) const;
  double d2(double x) const;
  double d2_max() const { return 1.0 / delta; }
};

struct ForwardPass {
  std::vector<double> input;                // h(M)
  std::vector<std::vector<double>> hidden;  // sigmoid outputs a1..a3
  std::vector<double> x;                    // network output, length n*k
};

struct Decomposition {
  SymMatrix L;
  SymMatrix S;
  FactorMatrix U;
};

ForwardPass forward(const NetworkParams& params, const SymMatrix& m);

Decomposition decompose(const NetworkParams& params, const SymMatrix& m);

// sum_{i,j} mu([target - rho(f(h(M)))]_{i,j})
double loss_supervised(const NetworkParams& params, const SymMatrix& m,
                       const SymMatrix& l0, const SmoothAbs& mu);
double loss_unsupervised(const NetworkParams& params, const SymMatrix& m,
                         const SmoothAbs& mu);

// d/dX_v sum_{i,j} mu([rho(X) - target]_{i,j}) = 2 sum_j mu'(w_{a,j}) X_{(j-1)k+b}
std::vector<double> grad_wrt_x(std::span<const double> x,
                               const SymMatrix& target, const SmoothAbs& mu);

// full second-derivative matrix of the same function, nk x nk
Mat hessian_wrt_x(std::span<const double> x, const SymMatrix& target,
                  const SmoothAbs& mu);

struct ParamGrad {
  std::vector<Layer> layers;  // same shapes as the network

  static ParamGrad zeros(const Architecture& arch);
  void axpy(double a, const ParamGrad& o);
  void scale(double a);
  double squared_norm() const;
  double get_flat(std::int64_t i) const;
};

struct BackwardResult {
  double loss = 0.0;
  ParamGrad grad;
};

// Gradient of the smoothed loss w.r.t. all parameters, seeded by grad_wrt_x
// and reverse-accumulated through the affine+sigmoid stack.
BackwardResult backward(const NetworkParams& params, const SymMatrix& m,
                        const SymMatrix& target, const SmoothAbs& mu);

// ---- model file: JSON with base64 float64 weight blobs ----

void save_model(const NetworkParams& params, double delta,
                const std::string& provenance, const std::string& path);
struct LoadedModel {
  NetworkParams params;
  double delta = 1e-3;
  std::string provenance;
};
LoadedModel load_model(const std::string& path);

}  // namespace denise
