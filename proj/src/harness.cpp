#include "denise/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "denise/parallel.hpp"
#include "denise/rng.hpp"
#include "json.hpp"

namespace denise {

namespace fs = std::filesystem;

SymMatrix read_matrix_csv(const std::string& path, SymmetryPolicy policy) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_matrix_csv: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("read_matrix_csv: empty file " + path);
  std::size_t n = rows.size();
  std::vector<double> dense;
  dense.reserve(n * n);
  for (const auto& row : rows) {
    if (row.size() != n)
      throw DimensionError("read_matrix_csv: matrix is not square in " + path);
    dense.insert(dense.end(), row.begin(), row.end());
  }
  int ni = static_cast<int>(n);
  return policy == SymmetryPolicy::Reject
             ? SymMatrix::from_dense(ni, dense)
             : SymMatrix::from_dense_symmetrized(ni, dense);
}

void write_matrix_csv(const SymMatrix& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_matrix_csv: cannot open " + path);
  os.precision(17);
  for (int i = 0; i < m.dim(); ++i) {
    for (int j = 0; j < m.dim(); ++j) {
      if (j) os << ',';
      os << m(i, j);
    }
    os << '\n';
  }
}

void IngestConfig::validate() const {
  if (window < 2) throw ConfigError("IngestConfig: window must be >= 2");
  if (shift < 1) throw ConfigError("IngestConfig: shift must be >= 1");
  if (split_fraction <= 0.0 || split_fraction >= 1.0)
    throw ConfigError("IngestConfig: split_fraction must be in (0,1)");
  if (max_ffill < 0) throw ConfigError("IngestConfig: max_ffill must be >= 0");
}

IngestResult ingest_correlations(const IngestConfig& cfg) {
  cfg.validate();
  std::ifstream is(cfg.prices_csv);
  if (!is) throw std::runtime_error("ingest: cannot open " + cfg.prices_csv);
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("ingest: empty prices file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  int ncols = static_cast<int>(header.size()) - 1;  // first column is the date
  if (ncols < 2) throw ConfigError("ingest: need at least two asset columns");

  std::vector<std::vector<double>> price;   // [row][asset]
  std::vector<std::vector<bool>> valid;
  std::vector<double> last(static_cast<std::size_t>(ncols), 0.0);
  std::vector<int> staleness(static_cast<std::size_t>(ncols), -1);  // -1: never seen
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    cells.resize(static_cast<std::size_t>(ncols) + 1);
    std::vector<double> row(static_cast<std::size_t>(ncols));
    std::vector<bool> ok(static_cast<std::size_t>(ncols), false);
    for (int c = 0; c < ncols; ++c) {
      const std::string& v = cells[static_cast<std::size_t>(c) + 1];
      if (!v.empty()) {
        row[static_cast<std::size_t>(c)] = std::stod(v);
        last[static_cast<std::size_t>(c)] = row[static_cast<std::size_t>(c)];
        staleness[static_cast<std::size_t>(c)] = 0;
        ok[static_cast<std::size_t>(c)] = true;
      } else if (staleness[static_cast<std::size_t>(c)] >= 0 &&
                 staleness[static_cast<std::size_t>(c)] < cfg.max_ffill) {
        row[static_cast<std::size_t>(c)] = last[static_cast<std::size_t>(c)];
        ++staleness[static_cast<std::size_t>(c)];
        ok[static_cast<std::size_t>(c)] = true;
      }
    }
    price.push_back(std::move(row));
    valid.push_back(std::move(ok));
  }
  std::size_t ndays = price.size();
  if (ndays < static_cast<std::size_t>(cfg.window + cfg.shift))
    throw ConfigError("ingest: fewer rows than window + shift");

  // daily returns; return t is from day t to t+1
  std::size_t nret = ndays - 1;
  std::vector<std::vector<double>> ret(nret, std::vector<double>(static_cast<std::size_t>(ncols)));
  std::vector<std::vector<bool>> rok(nret, std::vector<bool>(static_cast<std::size_t>(ncols), false));
  for (std::size_t t = 0; t < nret; ++t) {
    for (int c = 0; c < ncols; ++c) {
      std::size_t cc = static_cast<std::size_t>(c);
      if (!valid[t][cc] || !valid[t + 1][cc] || price[t][cc] <= 0.0 ||
          price[t + 1][cc] <= 0.0)
        continue;
      double r = cfg.returns == ReturnKind::Log
                     ? std::log(price[t + 1][cc] / price[t][cc])
                     : price[t + 1][cc] / price[t][cc] - 1.0;
      ret[t][cc] = r;
      rok[t][cc] = true;
    }
  }

  IngestResult out;
  std::vector<SymMatrix> all;
  for (std::size_t start = 0; start + static_cast<std::size_t>(cfg.window) <= nret;
       start += static_cast<std::size_t>(cfg.shift)) {
    std::size_t w = static_cast<std::size_t>(cfg.window);
    bool complete = true;
    for (std::size_t t = start; t < start + w && complete; ++t)
      for (int c = 0; c < ncols; ++c)
        if (!rok[t][static_cast<std::size_t>(c)]) {
          complete = false;
          break;
        }
    if (!complete) {
      out.dropped.push_back("window@" + std::to_string(start) + ": missing data");
      continue;
    }
    std::vector<double> mean(static_cast<std::size_t>(ncols), 0.0);
    for (std::size_t t = start; t < start + w; ++t)
      for (int c = 0; c < ncols; ++c)
        mean[static_cast<std::size_t>(c)] += ret[t][static_cast<std::size_t>(c)];
    for (double& v : mean) v /= static_cast<double>(w);
    std::vector<double> sd(static_cast<std::size_t>(ncols), 0.0);
    for (std::size_t t = start; t < start + w; ++t)
      for (int c = 0; c < ncols; ++c) {
        double d = ret[t][static_cast<std::size_t>(c)] - mean[static_cast<std::size_t>(c)];
        sd[static_cast<std::size_t>(c)] += d * d;
      }
    bool degenerate = false;
    for (double v : sd)
      if (v <= 0.0) degenerate = true;
    if (degenerate) {
      out.dropped.push_back("window@" + std::to_string(start) + ": zero-variance column");
      continue;
    }
    SymMatrix corr(ncols);
    for (int a = 0; a < ncols; ++a) {
      corr.set(a, a, 1.0);
      for (int b = 0; b < a; ++b) {
        double cov = 0.0;
        for (std::size_t t = start; t < start + w; ++t)
          cov += (ret[t][static_cast<std::size_t>(a)] - mean[static_cast<std::size_t>(a)]) *
                 (ret[t][static_cast<std::size_t>(b)] - mean[static_cast<std::size_t>(b)]);
        corr.set(a, b, cov / std::sqrt(sd[static_cast<std::size_t>(a)] *
                                       sd[static_cast<std::size_t>(b)]));
      }
    }
    all.push_back(std::move(corr));
  }
  std::size_t n_train =
      static_cast<std::size_t>(std::floor(cfg.split_fraction * static_cast<double>(all.size())));
  for (std::size_t i = 0; i < all.size(); ++i)
    (i < n_train ? out.train : out.test).push_back(all[i]);
  return out;
}

Dataset matrices_to_dataset(const std::vector<SymMatrix>& ms, std::uint64_t seed) {
  if (ms.empty()) throw ConfigError("matrices_to_dataset: empty list");
  GenConfig cfg;
  cfg.n = ms.front().dim();
  cfg.k0 = 1;
  cfg.s0 = 0.0;
  cfg.seed = seed;
  cfg.count = static_cast<std::int64_t>(ms.size());
  Dataset ds(cfg, cfg.n);
  SymMatrix zero(cfg.n);
  for (const SymMatrix& m : ms) ds.append(m, zero);
  return ds;
}

namespace {

BaselineResult run_algo(BaselineAlgo algo, const SymMatrix& m, const BaselineConfig& cfg) {
  switch (algo) {
    case BaselineAlgo::Pcp:
      return pcp(m, cfg);
    case BaselineAlgo::Ialm:
      return ialm(m, cfg);
    default:
      return fpcp(m, cfg);
  }
}

double mean_rank_at(BaselineAlgo algo, const Dataset& ds, BaselineConfig cfg,
                    double lambda, double eps) {
  cfg.lambda = lambda;
  std::vector<double> ranks(static_cast<std::size_t>(ds.size()), 0.0);
  parallel_for(ds.size(), [&](std::int64_t i) {
    BaselineResult r = run_algo(algo, ds.matrix(i), cfg);
    ranks[static_cast<std::size_t>(i)] = approx_rank(r.L, eps);
  });
  double s = 0.0;
  for (double v : ranks) s += v;
  return s / static_cast<double>(ranks.size());
}

}  // namespace

CalibrationResult calibrate_lambda(BaselineAlgo algo, const Dataset& subsample,
                                   int target_rank, BaselineConfig base_cfg,
                                   double eps) {
  if (subsample.size() < 1) throw ConfigError("calibrate_lambda: empty subsample");
  // Mean rank is nondecreasing in lambda and typically plateaus at the target
  // over a wide range; return the smallest lambda on that plateau by bisecting
  // the crossing of rank(lambda) >= target - 0.1.
  double lo = base_cfg.lambda / 64.0;
  double hi = base_cfg.lambda * 64.0;
  double target = target_rank;
  double r_lo = mean_rank_at(algo, subsample, base_cfg, lo, eps);
  if (r_lo >= target - 0.1) {
    if (r_lo <= target + 0.1) return {lo, r_lo};
    throw NumericError("calibrate_lambda: rank exceeds the target over the whole range");
  }
  double r_hi = mean_rank_at(algo, subsample, base_cfg, hi, eps);
  if (r_hi < target - 0.1)
    throw NumericError("calibrate_lambda: search range does not bracket the target rank");
  double r_cross = r_hi;
  for (int it = 0; it < 60 && hi / lo > 1.01; ++it) {
    double mid = std::sqrt(lo * hi);  // geometric bisection
    double r_mid = mean_rank_at(algo, subsample, base_cfg, mid, eps);
    if (r_mid >= target - 0.1) {
      hi = mid;
      r_cross = r_mid;
    } else {
      lo = mid;
    }
  }
  if (std::abs(r_cross - target) <= 0.1) return {hi, r_cross};
  throw NumericError("calibrate_lambda: rank jumps past the target at the crossing");
}

// ---- compare ----

namespace {

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

nlohmann::json baseline_to_json(const BaselineConfig& c) {
  nlohmann::json j{{"lambda", c.lambda},
                   {"tol", c.tol},
                   {"max_iters", c.max_iters},
                   {"mu_init_scale", c.mu_init_scale},
                   {"mu_growth", c.mu_growth}};
  if (c.target_rank) j["target_rank"] = *c.target_rank;
  return j;
}

BaselineConfig baseline_from_json(const nlohmann::json& j) {
  BaselineConfig c;
  c.lambda = j.at("lambda").get<double>();
  c.tol = j.at("tol").get<double>();
  c.max_iters = j.at("max_iters").get<int>();
  c.mu_init_scale = j.at("mu_init_scale").get<double>();
  c.mu_growth = j.at("mu_growth").get<double>();
  if (j.contains("target_rank")) c.target_rank = j.at("target_rank").get<int>();
  return c;
}

std::string kind_name(MethodSpec::Kind k) {
  switch (k) {
    case MethodSpec::Kind::Model:
      return "model";
    case MethodSpec::Kind::Pcp:
      return "pcp";
    case MethodSpec::Kind::Ialm:
      return "ialm";
    case MethodSpec::Kind::Fpcp:
      return "fpcp";
    case MethodSpec::Kind::Oracle:
      return "oracle";
    default:
      return "zero";
  }
}

MethodSpec::Kind kind_from_name(const std::string& s) {
  if (s == "model") return MethodSpec::Kind::Model;
  if (s == "pcp") return MethodSpec::Kind::Pcp;
  if (s == "ialm") return MethodSpec::Kind::Ialm;
  if (s == "fpcp") return MethodSpec::Kind::Fpcp;
  if (s == "oracle") return MethodSpec::Kind::Oracle;
  return MethodSpec::Kind::Zero;
}

EvalSummary evaluate_oracle(const Dataset& ds, double eps) {
  EvalSummary out;
  std::vector<double> v_r, v_s;
  for (std::int64_t i = 0; i < ds.size(); ++i) {
    SymMatrix l0 = ds.low_rank(i);
    SymMatrix s0 = ds.sparse(i);
    EvalRecord rec;
    rec.r_L = approx_rank(l0, eps);
    rec.s_S = approx_sparsity(s0, eps);
    SymMatrix m = ds.matrix(i);
    double mn = frobenius_norm(m);
    if (mn > 0.0) {
      SymMatrix ml = m;
      ml -= l0;
      rec.re_ML = frobenius_norm(ml) / mn;
    }
    out.records.push_back(rec);
    v_r.push_back(rec.r_L);
    v_s.push_back(rec.s_S);
  }
  out.r_L = aggregate(v_r);
  out.s_S = aggregate(v_s);
  return out;
}

}  // namespace

std::uint64_t hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("hash_file: cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (is.read(buf, sizeof buf) || is.gcount() > 0)
    h = fnv1a64(buf, static_cast<std::size_t>(is.gcount()), h);
  return h;
}

CompareResult compare(const std::vector<MethodSpec>& methods,
                      const std::string& dataset_path, const CompareOptions& opts) {
  if (methods.empty()) throw ConfigError("compare: no methods given");
  Dataset ds = read_dataset(dataset_path);
  fs::create_directories(opts.out_dir);

  CompareResult out;
  std::vector<std::pair<std::string, std::uint64_t>> det_outputs;

  for (const MethodSpec& spec : methods) {
    EvalSummary summary;
    if (spec.kind == MethodSpec::Kind::Oracle) {
      summary = evaluate_oracle(ds, opts.eps);
    } else if (spec.kind == MethodSpec::Kind::Model) {
      LoadedModel lm = load_model(spec.model_path);
      if (lm.params.arch.n != ds.dim())
        throw ConfigError("compare: model dimension does not match dataset");
      summary = evaluate_method(
          [&lm](const SymMatrix& m) {
            Decomposition d = decompose(lm.params, m);
            return std::make_pair(d.L, d.S);
          },
          ds, opts.eps, opts.with_timing);
    } else if (spec.kind == MethodSpec::Kind::Zero) {
      summary = evaluate_method(
          [](const SymMatrix& m) { return std::make_pair(SymMatrix(m.dim()), m); }, ds,
          opts.eps, opts.with_timing);
    } else {
      BaselineAlgo algo = spec.kind == MethodSpec::Kind::Pcp   ? BaselineAlgo::Pcp
                          : spec.kind == MethodSpec::Kind::Ialm ? BaselineAlgo::Ialm
                                                                : BaselineAlgo::Fpcp;
      BaselineConfig bcfg = spec.baseline;
      summary = evaluate_method(
          [algo, bcfg](const SymMatrix& m) {
            BaselineResult r = run_algo(algo, m, bcfg);
            return std::make_pair(r.L, r.S);
          },
          ds, opts.eps, opts.with_timing);
    }
    if (summary.failures * 10 > ds.size())
      throw NumericError("compare: method " + spec.name +
                         " failed on more than 10% of samples");
    std::string res_path = opts.out_dir + "/" + sanitize(spec.name) + "_results.csv";
    write_records_csv(summary, res_path, /*include_timing=*/false);
    det_outputs.emplace_back(res_path, hash_file(res_path));
    out.rows.push_back(CompareRow{spec.name, std::move(summary)});
  }

  // timings (non-deterministic, excluded from the manifest hash set)
  double denise_mean = 0.0;
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    if (methods[i].kind == MethodSpec::Kind::Model &&
        out.rows[i].summary.wall_ms.mean > 0.0) {
      denise_mean = out.rows[i].summary.wall_ms.mean;
      break;
    }
  }
  {
    std::ofstream os(opts.out_dir + "/timings.csv");
    os << "method,mean_ms,std_ms,median_ms,speedup_vs_denise\n";
    for (const CompareRow& row : out.rows) {
      os << row.name << ',' << row.summary.wall_ms.mean << ','
         << row.summary.wall_ms.stddev << ',' << row.summary.wall_ms.median << ',';
      if (denise_mean > 0.0) os << row.summary.wall_ms.mean / denise_mean;
      os << '\n';
    }
  }
  {
    std::ofstream os(opts.out_dir + "/summary.md");
    os << "| Method | r(L) | s(S) | rel.error(L) | rel.error(S) | RE_ML | time (ms) |\n";
    os << "|---|---|---|---|---|---|---|\n";
    for (const CompareRow& row : out.rows) {
      os << "| " << row.name << " | " << format_mean_std(row.summary.r_L) << " | "
         << format_mean_std(row.summary.s_S) << " | "
         << format_mean_std(row.summary.rel_err_L) << " | "
         << format_mean_std(row.summary.rel_err_S) << " | "
         << format_mean_std(row.summary.re_ML) << " | "
         << format_mean_std(row.summary.wall_ms) << " |\n";
    }
  }

  // assertions apply to the first model row
  for (std::size_t i = 0; i < methods.size(); ++i) {
    if (methods[i].kind != MethodSpec::Kind::Model) continue;
    const EvalSummary& s = out.rows[i].summary;
    if (opts.assert_max_rel_err_L && s.rel_err_L.mean > *opts.assert_max_rel_err_L)
      out.assertions_passed = false;
    if (opts.assert_rank && std::abs(s.r_L.mean - *opts.assert_rank) > 0.1)
      out.assertions_passed = false;
    break;
  }

  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["dataset"] = {{"path", fs::absolute(dataset_path).string()},
                         {"fnv1a64", hash_file(dataset_path)}};
  manifest["options"] = {{"eps", opts.eps}, {"with_timing", opts.with_timing}};
  if (opts.assert_max_rel_err_L)
    manifest["options"]["assert_max_rel_err_L"] = *opts.assert_max_rel_err_L;
  if (opts.assert_rank) manifest["options"]["assert_rank"] = *opts.assert_rank;
  nlohmann::json jmethods = nlohmann::json::array();
  for (const MethodSpec& spec : methods) {
    nlohmann::json jm{{"kind", kind_name(spec.kind)}, {"name", spec.name}};
    if (spec.kind == MethodSpec::Kind::Model) {
      jm["model_path"] = fs::absolute(spec.model_path).string();
      jm["model_fnv1a64"] = hash_file(spec.model_path);
    } else if (spec.kind == MethodSpec::Kind::Pcp || spec.kind == MethodSpec::Kind::Ialm ||
               spec.kind == MethodSpec::Kind::Fpcp) {
      jm["baseline"] = baseline_to_json(spec.baseline);
    }
    jmethods.push_back(jm);
  }
  manifest["methods"] = jmethods;
  nlohmann::json jout = nlohmann::json::array();
  for (const auto& [path, hash] : det_outputs)
    jout.push_back({{"file", fs::path(path).filename().string()}, {"fnv1a64", hash}});
  manifest["outputs"] = jout;
  out.manifest_path = opts.out_dir + "/manifest.json";
  {
    std::ofstream os(out.manifest_path);
    os << manifest.dump(2) << '\n';
  }
  return out;
}

bool rerun_compare_from_manifest(const std::string& manifest_path,
                                 const std::string& new_out_dir) {
  std::ifstream is(manifest_path);
  if (!is) throw std::runtime_error("rerun: cannot open " + manifest_path);
  nlohmann::json manifest = nlohmann::json::parse(is);

  std::string dataset_path = manifest.at("dataset").at("path").get<std::string>();
  if (hash_file(dataset_path) != manifest.at("dataset").at("fnv1a64").get<std::uint64_t>())
    throw std::runtime_error("rerun: dataset file changed since the manifest was written");

  std::vector<MethodSpec> methods;
  for (const auto& jm : manifest.at("methods")) {
    MethodSpec spec;
    spec.kind = kind_from_name(jm.at("kind").get<std::string>());
    spec.name = jm.at("name").get<std::string>();
    if (spec.kind == MethodSpec::Kind::Model) {
      spec.model_path = jm.at("model_path").get<std::string>();
      if (hash_file(spec.model_path) != jm.at("model_fnv1a64").get<std::uint64_t>())
        throw std::runtime_error("rerun: model file changed since the manifest was written");
    } else if (jm.contains("baseline")) {
      spec.baseline = baseline_from_json(jm.at("baseline"));
    }
    methods.push_back(std::move(spec));
  }
  CompareOptions opts;
  opts.out_dir = new_out_dir;
  opts.eps = manifest.at("options").at("eps").get<double>();
  opts.with_timing = manifest.at("options").at("with_timing").get<bool>();
  if (manifest.at("options").contains("assert_max_rel_err_L"))
    opts.assert_max_rel_err_L =
        manifest.at("options").at("assert_max_rel_err_L").get<double>();
  if (manifest.at("options").contains("assert_rank"))
    opts.assert_rank = manifest.at("options").at("assert_rank").get<double>();

  compare(methods, dataset_path, opts);
  for (const auto& jo : manifest.at("outputs")) {
    std::string f = new_out_dir + "/" + jo.at("file").get<std::string>();
    if (hash_file(f) != jo.at("fnv1a64").get<std::uint64_t>()) return false;
  }
  return true;
}

}  // namespace denise
