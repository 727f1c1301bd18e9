#include "denise/datagen.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace denise {

void GenConfig::validate() const {
  if (n < 1) throw ConfigError("GenConfig: n must be >= 1");
  if (k0 < 1 || k0 > n) throw ConfigError("GenConfig: need 1 <= k0 <= n");
  if (s0 < 0.0 || s0 > 1.0) throw ConfigError("GenConfig: s0 must be in [0,1]");
  if (count < 1) throw ConfigError("GenConfig: count must be >= 1");
  if (distribution == FactorDist::StudentT && t_dof < 1)
    throw ConfigError("GenConfig: t_dof must be >= 1");
}

void Dataset::append(const SymMatrix& m, const SymMatrix& l0) {
  if (m.dim() != n_ || l0.dim() != n_)
    throw DimensionError("Dataset::append: dimension mismatch");
  HalfVector hm = half_vectorize(m);
  HalfVector hl = half_vectorize(l0);
  m_data_.insert(m_data_.end(), hm.data.begin(), hm.data.end());
  l_data_.insert(l_data_.end(), hl.data.begin(), hl.data.end());
  ++count_;
}

std::span<const double> Dataset::matrix_halfvec(std::int64_t i) const {
  return {m_data_.data() + static_cast<std::size_t>(i) * stride_,
          static_cast<std::size_t>(stride_)};
}

std::span<const double> Dataset::low_rank_halfvec(std::int64_t i) const {
  return {l_data_.data() + static_cast<std::size_t>(i) * stride_,
          static_cast<std::size_t>(stride_)};
}

SymMatrix Dataset::matrix(std::int64_t i) const {
  HalfVector hv;
  hv.n = n_;
  auto s = matrix_halfvec(i);
  hv.data.assign(s.begin(), s.end());
  return half_unvectorize(hv);
}

SymMatrix Dataset::low_rank(std::int64_t i) const {
  HalfVector hv;
  hv.n = n_;
  auto s = low_rank_halfvec(i);
  hv.data.assign(s.begin(), s.end());
  return half_unvectorize(hv);
}

SymMatrix Dataset::sparse(std::int64_t i) const { return matrix(i) - low_rank(i); }

SymMatrix gen_low_rank(int n, int k0, const std::function<double()>& draw) {
  FactorMatrix u;
  u.n = n;
  u.k = k0;
  u.data.resize(static_cast<std::size_t>(n) * k0);
  for (double& v : u.data) v = draw();
  return factor_gram(u);
}

SymMatrix gen_low_rank(int n, int k0, FactorDist dist, int t_dof, Rng& rng) {
  if (dist == FactorDist::StudentT)
    return gen_low_rank(n, k0, [&] { return rng.student_t(t_dof); });
  return gen_low_rank(n, k0, [&] { return rng.normal(); });
}

double exact_zero_fraction(const SymMatrix& m) {
  std::size_t zeros = 0;
  for (double v : m.data())
    if (v == 0.0) ++zeros;
  return static_cast<double>(zeros) / static_cast<double>(m.data().size());
}

SymMatrix gen_sparse(int n, double s0, Rng& rng) {
  SymMatrix s(n);
  if (n < 2) return s;  // no valid pair i<j
  std::size_t total = static_cast<std::size_t>(n) * n;
  std::size_t zeros = total;
  for (;;) {
    // elementary block: off-diagonal b on (i,j),(j,i), diagonal a on (i,i),(j,j)
    int i = static_cast<int>(rng.uniform() * n);
    if (i >= n) i = n - 1;
    int j = static_cast<int>(rng.uniform() * (n - 1));
    if (j >= n - 1) j = n - 2;
    if (j >= i) ++j;
    if (i > j) std::swap(i, j);
    double b = rng.uniform(-1.0, 1.0);
    double a = rng.uniform(std::abs(b), 1.0);

    std::size_t newly = 0;
    if (s(i, j) == 0.0 && b != 0.0) newly += 2;
    if (s(i, i) == 0.0 && a != 0.0) ++newly;
    if (s(j, j) == 0.0 && a != 0.0) ++newly;
    // values that land exactly back on zero after summation have probability 0
    double zf_after = static_cast<double>(zeros - newly) / static_cast<double>(total);
    if (zf_after < s0) break;
    s.set(i, j, s(i, j) + b);
    s.set(i, i, s(i, i) + a);
    s.set(j, j, s(j, j) + a);
    zeros -= newly;
  }
  return s;
}

Sample gen_sample(const GenConfig& cfg, std::int64_t index) {
  cfg.validate();
  // separate substreams so the S0 law is unaffected by the L0 distribution
  Rng rng_l = Rng::substream(cfg.seed, static_cast<std::uint64_t>(index), 0);
  Rng rng_s = Rng::substream(cfg.seed, static_cast<std::uint64_t>(index), 1);
  SymMatrix l0 = gen_low_rank(cfg.n, cfg.k0, cfg.distribution, cfg.t_dof, rng_l);
  SymMatrix s0 = gen_sparse(cfg.n, cfg.s0, rng_s);
  Sample smp{l0 + s0, l0, s0, SampleMeta{cfg, index}};
  return smp;
}

Dataset gen_dataset(const GenConfig& cfg) {
  cfg.validate();
  Dataset ds(cfg, cfg.n);
  for (std::int64_t i = 0; i < cfg.count; ++i) {
    Sample s = gen_sample(cfg, i);
    ds.append(s.M, s.L0);
  }
  return ds;
}

namespace {

nlohmann::json config_to_json(const GenConfig& cfg) {
  return nlohmann::json{
      {"version", 1},
      {"n", cfg.n},
      {"k0", cfg.k0},
      {"s0", cfg.s0},
      {"dist", cfg.distribution == FactorDist::Normal ? "normal" : "student_t"},
      {"t_dof", cfg.t_dof},
      {"seed", cfg.seed},
      {"count", cfg.count}};
}

GenConfig config_from_json(const nlohmann::json& j) {
  GenConfig cfg;
  cfg.n = j.at("n").get<int>();
  cfg.k0 = j.at("k0").get<int>();
  cfg.s0 = j.at("s0").get<double>();
  cfg.distribution = j.at("dist").get<std::string>() == "student_t"
                         ? FactorDist::StudentT
                         : FactorDist::Normal;
  cfg.t_dof = j.at("t_dof").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.count = j.at("count").get<std::int64_t>();
  return cfg;
}

void write_f64_le(std::ostream& os, std::span<const double> vals) {
  static_assert(std::endian::native == std::endian::little,
                "big-endian hosts need byte swapping here");
  os.write(reinterpret_cast<const char*>(vals.data()),
           static_cast<std::streamsize>(vals.size() * sizeof(double)));
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_dataset: cannot open " + path);
  os << config_to_json(ds.config()).dump() << '\n';
  std::vector<double> s0(static_cast<std::size_t>(ds.dim()) * (ds.dim() + 1) / 2);
  for (std::int64_t i = 0; i < ds.size(); ++i) {
    auto m = ds.matrix_halfvec(i);
    auto l = ds.low_rank_halfvec(i);
    for (std::size_t p = 0; p < s0.size(); ++p) s0[p] = m[p] - l[p];
    write_f64_le(os, m);
    write_f64_le(os, l);
    write_f64_le(os, s0);
  }
  if (!os) throw std::runtime_error("write_dataset: write failed for " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_dataset: cannot open " + path);
  std::string header;
  std::getline(is, header);
  GenConfig cfg = config_from_json(nlohmann::json::parse(header));
  int n = cfg.n;
  std::size_t stride = static_cast<std::size_t>(n) * (n + 1) / 2;
  Dataset ds(cfg, n);
  std::vector<double> rec(3 * stride);
  for (;;) {
    is.read(reinterpret_cast<char*>(rec.data()),
            static_cast<std::streamsize>(rec.size() * sizeof(double)));
    if (is.gcount() == 0) break;
    if (static_cast<std::size_t>(is.gcount()) != rec.size() * sizeof(double))
      throw std::runtime_error("read_dataset: truncated record in " + path);
    HalfVector hm{n, {rec.begin(), rec.begin() + static_cast<std::ptrdiff_t>(stride)}};
    HalfVector hl{n,
                  {rec.begin() + static_cast<std::ptrdiff_t>(stride),
                   rec.begin() + static_cast<std::ptrdiff_t>(2 * stride)}};
    ds.append(half_unvectorize(hm), half_unvectorize(hl));
  }
  return ds;
}

}  // namespace denise
