#include "denise/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "denise/rng.hpp"
#include "json.hpp"

namespace denise {

namespace {

std::int64_t params_for(int d_in, int h1, int h2, int h3, int d_out) {
  return static_cast<std::int64_t>(d_in) * h1 + h1 + static_cast<std::int64_t>(h1) * h2 +
         h2 + static_cast<std::int64_t>(h2) * h3 + h3 +
         static_cast<std::int64_t>(h3) * d_out + d_out;
}

}  // namespace

Architecture Architecture::make(int n, int k) {
  if (n < 1 || k < 1 || k > n) throw std::invalid_argument("Architecture: need 1 <= k <= n");
  int d = n * (n + 1) / 2;
  int d_out = n * k;
  std::int64_t target = 32LL * d;
  std::int64_t best_diff = std::numeric_limits<std::int64_t>::max();
  int bh1 = 1, bh2 = 1, bh3 = 1;
  for (int step = 1; step <= 4000; ++step) {
    double f = 0.001 * step;
    int h1 = std::max(1, static_cast<int>(std::lround(f * 4 * d)));
    int h2 = std::max(1, static_cast<int>(std::lround(f * 2 * d)));
    int h3 = std::max(1, static_cast<int>(std::lround(f * d)));
    std::int64_t p = params_for(d, h1, h2, h3, d_out);
    std::int64_t diff = std::llabs(p - target);
    if (diff < best_diff) {
      best_diff = diff;
      bh1 = h1;
      bh2 = h2;
      bh3 = h3;
    }
  }
  Architecture a;
  a.n = n;
  a.k = k;
  a.layer_widths = {d, bh1, bh2, bh3, d_out};
  return a;
}

std::int64_t Architecture::param_count() const {
  return params_for(layer_widths[0], layer_widths[1], layer_widths[2],
                    layer_widths[3], layer_widths[4]);
}

NetworkParams NetworkParams::zeros(const Architecture& arch) {
  NetworkParams p;
  p.arch = arch;
  for (int l = 0; l < 4; ++l) {
    Layer lay;
    lay.w = Mat(arch.layer_widths[l + 1], arch.layer_widths[l]);
    lay.b.assign(arch.layer_widths[l + 1], 0.0);
    p.layers.push_back(std::move(lay));
  }
  return p;
}

NetworkParams NetworkParams::init(const Architecture& arch, std::uint64_t seed) {
  NetworkParams p = zeros(arch);
  Rng rng(seed);
  for (Layer& lay : p.layers) {
    double bound = std::sqrt(6.0 / (lay.w.cols + lay.w.rows));
    for (double& v : lay.w.a) v = rng.uniform(-bound, bound);
  }
  return p;
}

void NetworkParams::check_finite() const {
  for (const Layer& lay : layers) {
    for (double v : lay.w.a)
      if (!std::isfinite(v)) throw NumericError("NetworkParams: non-finite weight");
    for (double v : lay.b)
      if (!std::isfinite(v)) throw NumericError("NetworkParams: non-finite bias");
  }
}

std::int64_t NetworkParams::flat_size() const { return arch.param_count(); }

double NetworkParams::get_flat(std::int64_t i) const {
  for (const Layer& lay : layers) {
    std::int64_t nw = static_cast<std::int64_t>(lay.w.a.size());
    if (i < nw) return lay.w.a[static_cast<std::size_t>(i)];
    i -= nw;
    std::int64_t nb = static_cast<std::int64_t>(lay.b.size());
    if (i < nb) return lay.b[static_cast<std::size_t>(i)];
    i -= nb;
  }
  throw std::out_of_range("NetworkParams::get_flat");
}

void NetworkParams::add_flat(std::int64_t i, double v) {
  for (Layer& lay : layers) {
    std::int64_t nw = static_cast<std::int64_t>(lay.w.a.size());
    if (i < nw) {
      lay.w.a[static_cast<std::size_t>(i)] += v;
      return;
    }
    i -= nw;
    std::int64_t nb = static_cast<std::int64_t>(lay.b.size());
    if (i < nb) {
      lay.b[static_cast<std::size_t>(i)] += v;
      return;
    }
    i -= nb;
  }
  throw std::out_of_range("NetworkParams::add_flat");
}

double SmoothAbs::value(double x) const { return std::sqrt(x * x + delta * delta) - delta; }
double SmoothAbs::d1(double x) const { return x / std::sqrt(x * x + delta * delta); }
double SmoothAbs::d2(double x) const {
  double s = x * x + delta * delta;
  return delta * delta / (s * std::sqrt(s));
}

namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void affine(const Layer& lay, std::span<const double> in, std::vector<double>& out) {
  out.assign(lay.b.begin(), lay.b.end());
  for (int i = 0; i < lay.w.rows; ++i) {
    double s = 0.0;
    const double* row = lay.w.a.data() + static_cast<std::size_t>(i) * lay.w.cols;
    for (int j = 0; j < lay.w.cols; ++j) s += row[j] * in[j];
    out[i] += s;
  }
}

}  // namespace

ForwardPass forward(const NetworkParams& params, const SymMatrix& m) {
  if (m.dim() != params.arch.n)
    throw DimensionError("forward: matrix dimension does not match architecture");
  ForwardPass fp;
  fp.input = half_vectorize(m).data;
  std::vector<double> cur = fp.input;
  for (int l = 0; l < 3; ++l) {
    std::vector<double> z;
    affine(params.layers[l], cur, z);
    for (double& v : z) v = sigmoid(v);
    fp.hidden.push_back(z);
    cur = fp.hidden.back();
  }
  affine(params.layers[3], cur, fp.x);
  return fp;
}

Decomposition decompose(const NetworkParams& params, const SymMatrix& m) {
  ForwardPass fp = forward(params, m);
  FactorMatrix u = vector_to_factor(fp.x, params.arch.n, params.arch.k);
  SymMatrix l = factor_gram(u);
  SymMatrix s = m;
  s -= l;
  return Decomposition{std::move(l), std::move(s), std::move(u)};
}

namespace {

double smoothed_l1(const SymMatrix& a, const SymMatrix& b, const SmoothAbs& mu) {
  double s = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) s += mu.value(da[i] - db[i]);
  return s;
}

}  // namespace

double loss_supervised(const NetworkParams& params, const SymMatrix& m,
                       const SymMatrix& l0, const SmoothAbs& mu) {
  Decomposition d = decompose(params, m);
  return smoothed_l1(l0, d.L, mu);
}

double loss_unsupervised(const NetworkParams& params, const SymMatrix& m,
                         const SmoothAbs& mu) {
  Decomposition d = decompose(params, m);
  return smoothed_l1(m, d.L, mu);
}

std::vector<double> grad_wrt_x(std::span<const double> x, const SymMatrix& target,
                               const SmoothAbs& mu) {
  int n = target.dim();
  if (x.size() % static_cast<std::size_t>(n) != 0)
    throw DimensionError("grad_wrt_x: length of X not a multiple of n");
  int k = static_cast<int>(x.size()) / n;
  FactorMatrix u = vector_to_factor(x, n, k);
  SymMatrix g = factor_gram(u);  // rho(X)
  // mu'(omega) with omega = rho(X) - target, symmetric
  Mat dmu(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) dmu(i, j) = mu.d1(g(i, j) - target(i, j));
  std::vector<double> grad(x.size(), 0.0);
  for (int alpha = 0; alpha < n; ++alpha) {
    for (int beta = 0; beta < k; ++beta) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += dmu(alpha, j) * u(j, beta);
      grad[static_cast<std::size_t>(alpha) * k + beta] = 2.0 * s;
    }
  }
  return grad;
}

Mat hessian_wrt_x(std::span<const double> x, const SymMatrix& target,
                  const SmoothAbs& mu) {
  int n = target.dim();
  int k = static_cast<int>(x.size()) / n;
  FactorMatrix u = vector_to_factor(x, n, k);
  SymMatrix g = factor_gram(u);
  Mat d1(n, n), d2(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double w = g(i, j) - target(i, j);
      d1(i, j) = mu.d1(w);
      d2(i, j) = mu.d2(w);
    }
  }
  int nk = n * k;
  Mat h(nk, nk);
  for (int alpha = 0; alpha < n; ++alpha) {
    for (int beta = 0; beta < k; ++beta) {
      int nu = alpha * k + beta;
      for (int gamma = 0; gamma < n; ++gamma) {
        for (int delta = 0; delta < k; ++delta) {
          int eta = gamma * k + delta;
          double v = 0.0;
          if (beta == delta) v += 2.0 * d1(alpha, gamma);
          v += 2.0 * d2(alpha, gamma) * u(gamma, beta) * u(alpha, delta);
          if (alpha == gamma) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += d2(alpha, j) * u(j, beta) * u(j, delta);
            v += 2.0 * s;
          }
          h(eta, nu) = v;
        }
      }
    }
  }
  return h;
}

ParamGrad ParamGrad::zeros(const Architecture& arch) {
  ParamGrad g;
  NetworkParams p = NetworkParams::zeros(arch);
  g.layers = std::move(p.layers);
  return g;
}

void ParamGrad::axpy(double a, const ParamGrad& o) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t i = 0; i < layers[l].w.a.size(); ++i)
      layers[l].w.a[i] += a * o.layers[l].w.a[i];
    for (std::size_t i = 0; i < layers[l].b.size(); ++i)
      layers[l].b[i] += a * o.layers[l].b[i];
  }
}

void ParamGrad::scale(double a) {
  for (Layer& lay : layers) {
    for (double& v : lay.w.a) v *= a;
    for (double& v : lay.b) v *= a;
  }
}

double ParamGrad::squared_norm() const {
  double s = 0.0;
  for (const Layer& lay : layers) {
    for (double v : lay.w.a) s += v * v;
    for (double v : lay.b) s += v * v;
  }
  return s;
}

double ParamGrad::get_flat(std::int64_t i) const {
  for (const Layer& lay : layers) {
    std::int64_t nw = static_cast<std::int64_t>(lay.w.a.size());
    if (i < nw) return lay.w.a[static_cast<std::size_t>(i)];
    i -= nw;
    std::int64_t nb = static_cast<std::int64_t>(lay.b.size());
    if (i < nb) return lay.b[static_cast<std::size_t>(i)];
    i -= nb;
  }
  throw std::out_of_range("ParamGrad::get_flat");
}

BackwardResult backward(const NetworkParams& params, const SymMatrix& m,
                        const SymMatrix& target, const SmoothAbs& mu) {
  ForwardPass fp = forward(params, m);
  int n = params.arch.n;
  int k = params.arch.k;

  FactorMatrix u = vector_to_factor(fp.x, n, k);
  SymMatrix l = factor_gram(u);
  double loss = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) loss += mu.value(l(i, j) - target(i, j));

  BackwardResult out;
  out.loss = loss;
  out.grad = ParamGrad::zeros(params.arch);

  std::vector<double> dz = grad_wrt_x(fp.x, target, mu);  // output layer is affine
  // reverse through layers 4..1
  for (int lidx = 3; lidx >= 0; --lidx) {
    const Layer& lay = params.layers[lidx];
    Layer& g = out.grad.layers[lidx];
    const std::vector<double>& in =
        (lidx == 0) ? fp.input : fp.hidden[static_cast<std::size_t>(lidx - 1)];
    for (int i = 0; i < lay.w.rows; ++i) {
      double d = dz[static_cast<std::size_t>(i)];
      g.b[static_cast<std::size_t>(i)] = d;
      double* grow = g.w.a.data() + static_cast<std::size_t>(i) * lay.w.cols;
      for (int j = 0; j < lay.w.cols; ++j) grow[j] = d * in[static_cast<std::size_t>(j)];
    }
    if (lidx == 0) break;
    std::vector<double> din(static_cast<std::size_t>(lay.w.cols), 0.0);
    for (int i = 0; i < lay.w.rows; ++i) {
      double d = dz[static_cast<std::size_t>(i)];
      const double* row = lay.w.a.data() + static_cast<std::size_t>(i) * lay.w.cols;
      for (int j = 0; j < lay.w.cols; ++j) din[static_cast<std::size_t>(j)] += d * row[j];
    }
    const std::vector<double>& act = fp.hidden[static_cast<std::size_t>(lidx - 1)];
    for (std::size_t j = 0; j < din.size(); ++j) din[j] *= act[j] * (1.0 - act[j]);
    dz = std::move(din);
  }
  return out;
}

// ---- model file ----

namespace {

const char* kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<double>& v) {
  const unsigned char* p = reinterpret_cast<const unsigned char*>(v.data());
  std::size_t len = v.size() * sizeof(double);
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    unsigned int b = p[i] << 16;
    int rem = static_cast<int>(len - i);
    if (rem > 1) b |= p[i + 1] << 8;
    if (rem > 2) b |= p[i + 2];
    out.push_back(kB64[(b >> 18) & 63]);
    out.push_back(kB64[(b >> 12) & 63]);
    out.push_back(rem > 1 ? kB64[(b >> 6) & 63] : '=');
    out.push_back(rem > 2 ? kB64[b & 63] : '=');
  }
  return out;
}

std::vector<double> base64_decode(const std::string& s, std::size_t n_doubles) {
  std::vector<unsigned char> bytes;
  bytes.reserve(s.size() / 4 * 3);
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  for (std::size_t i = 0; i + 3 < s.size() || i + 4 == s.size(); i += 4) {
    int a = val(s[i]), b = val(s[i + 1]);
    int c = s[i + 2] == '=' ? -2 : val(s[i + 2]);
    int d = s[i + 3] == '=' ? -2 : val(s[i + 3]);
    unsigned int bb = (a << 18) | (b << 12);
    if (c >= 0) bb |= c << 6;
    if (d >= 0) bb |= d;
    bytes.push_back((bb >> 16) & 255);
    if (c >= 0) bytes.push_back((bb >> 8) & 255);
    if (d >= 0) bytes.push_back(bb & 255);
  }
  if (bytes.size() != n_doubles * sizeof(double))
    throw std::runtime_error("model file: weight blob size mismatch");
  std::vector<double> out(n_doubles);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace

void save_model(const NetworkParams& params, double delta,
                const std::string& provenance, const std::string& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["n"] = params.arch.n;
  j["k"] = params.arch.k;
  j["layer_widths"] = params.arch.layer_widths;
  j["delta"] = delta;
  j["provenance"] = provenance;
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& lay : params.layers) {
    layers.push_back({{"rows", lay.w.rows},
                      {"cols", lay.w.cols},
                      {"w", base64_encode(lay.w.a)},
                      {"b", base64_encode(lay.b)}});
  }
  j["layers"] = layers;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_model: cannot open " + path);
  os << j.dump(2) << '\n';
}

LoadedModel load_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_model: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(is);
  LoadedModel lm;
  lm.params.arch.n = j.at("n").get<int>();
  lm.params.arch.k = j.at("k").get<int>();
  lm.params.arch.layer_widths = j.at("layer_widths").get<std::vector<int>>();
  lm.delta = j.at("delta").get<double>();
  lm.provenance = j.value("provenance", "");
  if (lm.params.arch.layer_widths.size() != 5)
    throw std::runtime_error("model file: expected 5 layer widths");
  const auto& widths = lm.params.arch.layer_widths;
  if (widths.front() != lm.params.arch.n * (lm.params.arch.n + 1) / 2 ||
      widths.back() != lm.params.arch.n * lm.params.arch.k)
    throw std::runtime_error("model file: widths inconsistent with n, k");
  for (const auto& lj : j.at("layers")) {
    Layer lay;
    lay.w = Mat(lj.at("rows").get<int>(), lj.at("cols").get<int>());
    lay.w.a = base64_decode(lj.at("w").get<std::string>(), lay.w.a.size());
    lay.b = base64_decode(lj.at("b").get<std::string>(),
                          static_cast<std::size_t>(lay.w.rows));
    lm.params.layers.push_back(std::move(lay));
  }
  if (lm.params.layers.size() != 4)
    throw std::runtime_error("model file: expected 4 layers");
  for (int l = 0; l < 4; ++l) {
    if (lm.params.layers[l].w.rows != widths[l + 1] ||
        lm.params.layers[l].w.cols != widths[l])
      throw std::runtime_error("model file: layer shape mismatch");
  }
  lm.params.check_finite();
  return lm;
}

}  // namespace denise
