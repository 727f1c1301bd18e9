#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "denise/harness.hpp"
#include "denise/train.hpp"
#include "json.hpp"

namespace {

using namespace denise;

StepRule parse_step(const std::string& s) {
  if (s == "adagrad") return AdagradNormRule{};
  if (s.rfind("adagrad:", 0) == 0) {
    AdagradNormRule r;
    r.l_grad_est = std::stod(s.substr(8));
    return r;
  }
  if (s.rfind("const:", 0) == 0) return ConstantRule{std::stod(s.substr(6))};
  throw ConfigError("--step must be 'adagrad', 'adagrad:L' or 'const:RATE'");
}

int cmd_gen(const std::string& out, GenConfig cfg) {
  Dataset ds = gen_dataset(cfg);
  write_dataset(ds, out);
  std::printf("wrote %lld samples (n=%d) to %s\n",
              static_cast<long long>(ds.size()), ds.dim(), out.c_str());
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string eval_data;
  std::string model_in;  // finetune only
  int rank = 3;
  std::string loss = "sup";
  int epochs = 1;
  int batch = 32;
  std::string step = "const:0.001";
  std::uint64_t seed = 0;
  double delta = 1e-3;
  double clip = 0.0;
  int eval_every = 200;
  bool resample = false;
  std::string out = "model.json";
  std::string report = "report.csv";
};

int cmd_train(const TrainArgs& a, bool is_finetune) {
  Dataset ds = read_dataset(a.data);
  TrainConfig cfg;
  cfg.loss_kind = a.loss == "unsup" ? LossKind::Unsupervised : LossKind::Supervised;
  cfg.batch_size = a.batch;
  cfg.epochs = a.epochs;
  cfg.step_rule = parse_step(a.step);
  cfg.seed = a.seed;
  cfg.delta = a.delta;
  if (a.clip > 0.0) cfg.clip_norm = a.clip;
  cfg.eval_every = a.eval_every;
  cfg.resample = a.resample;

  NetworkParams p0 = [&] {
    if (is_finetune || !a.model_in.empty()) {
      LoadedModel lm = load_model(a.model_in);
      cfg.delta = lm.delta;
      return lm.params;
    }
    return NetworkParams::init(Architecture::make(ds.dim(), a.rank), a.seed);
  }();

  Dataset eval = a.eval_data.empty() ? Dataset(ds.config(), ds.dim())
                                     : read_dataset(a.eval_data);
  const Dataset* eval_ptr = a.eval_data.empty() ? nullptr : &eval;

  TrainResult tr = is_finetune ? finetune(p0, ds, cfg, eval_ptr)
                               : train(p0, ds, cfg, eval_ptr);
  std::string prov = std::string(is_finetune ? "finetune" : "train") + " loss=" + a.loss +
                     " data=" + a.data + " epochs=" + std::to_string(a.epochs) +
                     " batch=" + std::to_string(a.batch) + " step=" + a.step +
                     " seed=" + std::to_string(a.seed);
  save_model(tr.params, cfg.delta, prov, a.out);
  write_report_csv(tr.report, a.report, prov);
  if (!tr.report.records.empty())
    std::printf("final eval loss %.6g (best %.6g at step %lld)\n",
                tr.report.records.back().eval_loss, tr.report.best_eval_loss,
                static_cast<long long>(tr.report.best_step));
  std::printf("wrote %s and %s\n", a.out.c_str(), a.report.c_str());
  return 0;
}

int cmd_baseline(const std::string& algo, BaselineConfig cfg, const std::string& in,
                 const std::string& prefix) {
  SymMatrix m = read_matrix_csv(in, SymmetryPolicy::Symmetrize);
  BaselineResult r = algo == "pcp"    ? pcp(m, cfg)
                     : algo == "ialm" ? ialm(m, cfg)
                                      : fpcp(m, cfg);
  write_matrix_csv(r.L, prefix + "L.csv");
  write_matrix_csv(r.S, prefix + "S.csv");
  SymMatrix res = m;
  res -= r.L;
  res -= r.S;
  nlohmann::json stats{{"algo", algo},
                       {"iters", r.iters},
                       {"converged", r.converged},
                       {"wall_ms", r.wall_ms},
                       {"rank", approx_rank(r.L)},
                       {"sparsity", approx_sparsity(r.S)},
                       {"reconstruction", frobenius_norm(res) /
                                              std::max(frobenius_norm(m), 1e-300)}};
  std::ofstream os(prefix + "stats.json");
  os << stats.dump(2) << '\n';
  std::printf("%s: iters=%d converged=%d rank=%d\n", algo.c_str(), r.iters,
              r.converged, approx_rank(r.L));
  return 0;
}

int cmd_decompose(const std::string& model_path, const std::string& in,
                  const std::string& prefix) {
  LoadedModel lm = load_model(model_path);
  SymMatrix m = read_matrix_csv(in, SymmetryPolicy::Symmetrize);
  Decomposition d = decompose(lm.params, m);
  write_matrix_csv(d.L, prefix + "L.csv");
  write_matrix_csv(d.S, prefix + "S.csv");
  std::printf("rank(L)=%d sparsity(S)=%.3f\n", approx_rank(d.L), approx_sparsity(d.S));
  return 0;
}

int cmd_ingest(const IngestConfig& cfg, const std::string& out_dir) {
  IngestResult r = ingest_correlations(cfg);
  std::filesystem::create_directories(out_dir);
  for (const std::string& d : r.dropped) std::fprintf(stderr, "dropped %s\n", d.c_str());
  if (!r.train.empty())
    write_dataset(matrices_to_dataset(r.train), out_dir + "/train.dns");
  if (!r.test.empty())
    write_dataset(matrices_to_dataset(r.test), out_dir + "/test.dns");
  std::printf("ingested %zu train / %zu test windows (%zu dropped)\n", r.train.size(),
              r.test.size(), r.dropped.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"denise: low-rank plus sparse decomposition of PSD matrices"};
  app.require_subcommand(1);

  // gen
  GenConfig gcfg;
  std::string gen_dist = "normal";
  std::string gen_out = "dataset.dns";
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--n", gcfg.n, "matrix dimension");
  gen->add_option("--rank", gcfg.k0, "true rank k0");
  gen->add_option("--sparsity", gcfg.s0, "target sparsity s0");
  gen->add_option("--dist", gen_dist, "normal | student_t");
  gen->add_option("--t-dof", gcfg.t_dof, "Student-t degrees of freedom");
  gen->add_option("--seed", gcfg.seed, "seed");
  gen->add_option("--count", gcfg.count, "number of samples");
  gen->add_option("--out", gen_out, "output dataset file");

  // train / finetune
  TrainArgs ta;
  auto add_train_opts = [&](CLI::App* c) {
    c->add_option("--data", ta.data, "training dataset file")->required();
    c->add_option("--eval-data", ta.eval_data, "explicit eval dataset file");
    c->add_option("--arch-rank", ta.rank, "output rank k");
    c->add_option("--loss", ta.loss, "sup | unsup");
    c->add_option("--epochs", ta.epochs, "epochs");
    c->add_option("--batch", ta.batch, "batch size");
    c->add_option("--step", ta.step, "adagrad[:L] | const:RATE");
    c->add_option("--seed", ta.seed, "seed");
    c->add_option("--delta", ta.delta, "smooth-abs delta");
    c->add_option("--clip-norm", ta.clip, "gradient norm clip (0 = off)");
    c->add_option("--eval-every", ta.eval_every, "steps between report records");
    c->add_flag("--resample", ta.resample, "i.i.d. resampling instead of epoch shuffle");
    c->add_option("--out", ta.out, "output model file");
    c->add_option("--report", ta.report, "output report CSV");
  };
  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_train_opts(train_cmd);
  train_cmd->add_option("--init-model", ta.model_in, "warm-start from a model file");
  auto* ft_cmd = app.add_subcommand("finetune", "unsupervised finetuning of a model");
  add_train_opts(ft_cmd);
  ft_cmd->add_option("--model", ta.model_in, "model to finetune")->required();

  // baseline
  std::string bl_algo = "pcp", bl_in, bl_prefix = "out_";
  BaselineConfig bcfg;
  int bl_rank = 0;
  auto* bl = app.add_subcommand("baseline", "run a classical baseline on one matrix");
  bl->add_option("--algo", bl_algo, "pcp | ialm | fpcp")->required();
  bl->add_option("--lambda", bcfg.lambda, "coupling weight");
  bl->add_option("--rank", bl_rank, "target rank (fpcp)");
  bl->add_option("--tol", bcfg.tol, "convergence tolerance");
  bl->add_option("--max-iters", bcfg.max_iters, "iteration cap");
  bl->add_option("--in", bl_in, "input matrix CSV")->required();
  bl->add_option("--out", bl_prefix, "output prefix");

  // ingest
  IngestConfig icfg;
  std::string ingest_out = "ingested";
  std::string ret_kind = "log";
  auto* ing = app.add_subcommand("ingest", "prices CSV -> rolling correlation datasets");
  ing->add_option("--prices", icfg.prices_csv, "prices CSV (date, asset columns)")->required();
  ing->add_option("--window", icfg.window, "trading days per matrix");
  ing->add_option("--shift", icfg.shift, "days between windows");
  ing->add_option("--split", icfg.split_fraction, "train share");
  ing->add_option("--returns", ret_kind, "log | simple");
  ing->add_option("--out-dir", ingest_out, "output directory");

  // decompose
  std::string dc_model, dc_in, dc_prefix = "out_";
  auto* dc = app.add_subcommand("decompose", "apply a model to one matrix CSV");
  dc->add_option("--model", dc_model, "model file")->required();
  dc->add_option("--in", dc_in, "input matrix CSV")->required();
  dc->add_option("--out", dc_prefix, "output prefix");

  // compare
  std::string cp_data, cp_outdir = "compare_out", cp_manifest;
  std::vector<std::string> cp_models;
  double cp_pcp = 0.0, cp_ialm = 0.0;
  std::string cp_fpcp;
  bool cp_oracle = false, cp_zero = false, cp_no_timing = false, cp_assert = false;
  bool cp_calibrate = false;
  int cp_rank = 3;
  double cp_eps = 0.01, cp_tol = 1e-7;
  int cp_max_iters = 500;
  double cp_assert_rel = 0.0, cp_assert_rank = 0.0;
  auto* cp = app.add_subcommand("compare", "run methods on a dataset and summarize");
  cp->add_option("--data", cp_data, "dataset file");
  cp->add_option("--model", cp_models, "model file(s), optionally NAME=PATH");
  cp->add_option("--pcp", cp_pcp, "include PCP with this lambda");
  cp->add_option("--ialm", cp_ialm, "include IALM with this lambda");
  cp->add_option("--fpcp", cp_fpcp, "include FPCP as LAMBDA:RANK");
  cp->add_flag("--oracle", cp_oracle, "include the ground-truth row");
  cp->add_flag("--zero", cp_zero, "include the L=0 sanity row");
  cp->add_flag("--calibrate", cp_calibrate, "calibrate pcp/ialm lambda to --rank first");
  cp->add_option("--rank", cp_rank, "target rank for calibration / fpcp default");
  cp->add_option("--eps", cp_eps, "metric threshold epsilon");
  cp->add_option("--tol", cp_tol, "baseline tolerance");
  cp->add_option("--max-iters", cp_max_iters, "baseline iteration cap");
  cp->add_flag("--no-timing", cp_no_timing, "skip per-matrix timing");
  cp->add_flag("--assert", cp_assert, "fail (exit 4) when thresholds are violated");
  cp->add_option("--assert-rel-err-L", cp_assert_rel, "max mean rel.error(L) for the model");
  cp->add_option("--assert-rank", cp_assert_rank, "required mean r(L) for the model");
  cp->add_option("--out-dir", cp_outdir, "output directory");
  cp->add_option("--from-manifest", cp_manifest, "re-run a recorded compare");

  try {
    app.parse(argc, argv);

    if (gen->parsed()) {
      gcfg.distribution =
          gen_dist == "student_t" ? FactorDist::StudentT : FactorDist::Normal;
      return cmd_gen(gen_out, gcfg);
    }
    if (train_cmd->parsed()) return cmd_train(ta, false);
    if (ft_cmd->parsed()) return cmd_train(ta, true);
    if (bl->parsed()) {
      if (bl_rank > 0) bcfg.target_rank = bl_rank;
      return cmd_baseline(bl_algo, bcfg, bl_in, bl_prefix);
    }
    if (ing->parsed()) {
      icfg.returns = ret_kind == "simple" ? ReturnKind::Simple : ReturnKind::Log;
      return cmd_ingest(icfg, ingest_out);
    }
    if (dc->parsed()) return cmd_decompose(dc_model, dc_in, dc_prefix);
    if (cp->parsed()) {
      if (!cp_manifest.empty()) {
        bool ok = rerun_compare_from_manifest(cp_manifest, cp_outdir);
        std::printf("rerun %s\n", ok ? "reproduced all output hashes" : "HASH MISMATCH");
        return ok ? 0 : 4;
      }
      if (cp_data.empty()) throw ConfigError("compare: --data is required");
      std::vector<MethodSpec> methods;
      for (const std::string& mspec : cp_models) {
        MethodSpec s;
        s.kind = MethodSpec::Kind::Model;
        auto eq = mspec.find('=');
        if (eq == std::string::npos) {
          s.name = "Denise";
          s.model_path = mspec;
        } else {
          s.name = mspec.substr(0, eq);
          s.model_path = mspec.substr(eq + 1);
        }
        methods.push_back(s);
      }
      BaselineConfig base;
      base.tol = cp_tol;
      base.max_iters = cp_max_iters;
      auto calibrated = [&](BaselineAlgo algo, double lam) {
        BaselineConfig c = base;
        c.lambda = lam;
        if (cp_calibrate) {
          Dataset ds = read_dataset(cp_data);
          GenConfig sub_cfg = ds.config();
          Dataset sub(sub_cfg, ds.dim());
          for (std::int64_t i = 0; i < std::min<std::int64_t>(20, ds.size()); ++i)
            sub.append(ds.matrix(i), ds.low_rank(i));
          CalibrationResult cr = calibrate_lambda(algo, sub, cp_rank, c);
          std::printf("calibrated lambda=%.6g (mean rank %.2f)\n", cr.lambda,
                      cr.achieved_mean_rank);
          c.lambda = cr.lambda;
        }
        return c;
      };
      if (cp_pcp > 0.0) {
        MethodSpec s;
        s.kind = MethodSpec::Kind::Pcp;
        s.name = "PCP";
        s.baseline = calibrated(BaselineAlgo::Pcp, cp_pcp);
        methods.push_back(s);
      }
      if (cp_ialm > 0.0) {
        MethodSpec s;
        s.kind = MethodSpec::Kind::Ialm;
        s.name = "IALM";
        s.baseline = calibrated(BaselineAlgo::Ialm, cp_ialm);
        methods.push_back(s);
      }
      if (!cp_fpcp.empty()) {
        MethodSpec s;
        s.kind = MethodSpec::Kind::Fpcp;
        s.name = "FPCP";
        s.baseline = base;
        auto colon = cp_fpcp.find(':');
        s.baseline.lambda = std::stod(cp_fpcp.substr(0, colon));
        s.baseline.target_rank = colon == std::string::npos
                                     ? cp_rank
                                     : std::stoi(cp_fpcp.substr(colon + 1));
        methods.push_back(s);
      }
      if (cp_oracle) methods.push_back({MethodSpec::Kind::Oracle, "Oracle", "", {}});
      if (cp_zero) methods.push_back({MethodSpec::Kind::Zero, "Zero", "", {}});

      CompareOptions opts;
      opts.eps = cp_eps;
      opts.with_timing = !cp_no_timing;
      opts.out_dir = cp_outdir;
      if (cp_assert_rel > 0.0) opts.assert_max_rel_err_L = cp_assert_rel;
      if (cp_assert_rank > 0.0) opts.assert_rank = cp_assert_rank;
      CompareResult res = compare(methods, cp_data, opts);
      for (const CompareRow& row : res.rows)
        std::printf("%-10s r(L)=%s s(S)=%s relL=%s\n", row.name.c_str(),
                    format_mean_std(row.summary.r_L).c_str(),
                    format_mean_std(row.summary.s_S).c_str(),
                    format_mean_std(row.summary.rel_err_L).c_str());
      std::printf("outputs in %s\n", cp_outdir.c_str());
      if (cp_assert && !res.assertions_passed) {
        std::fprintf(stderr, "assertion thresholds violated\n");
        return 4;
      }
      return 0;
    }
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
