#include "denise/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

namespace denise {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
  if (delta <= 0.0) throw ConfigError("TrainConfig: delta must be > 0");
  if (eval_every < 1) throw ConfigError("TrainConfig: eval_every must be >= 1");
  if (const auto* c = std::get_if<ConstantRule>(&step_rule)) {
    if (c->rate <= 0.0) throw ConfigError("TrainConfig: rate must be > 0");
  } else {
    const auto& a = std::get<AdagradNormRule>(step_rule);
    if (a.l_grad_est <= 0.0) throw ConfigError("TrainConfig: L_grad_est must be > 0");
    if (a.eps <= 0.0) throw ConfigError("TrainConfig: eps must be > 0");
  }
  if (holdout_frac < 0.0 || holdout_frac >= 1.0)
    throw ConfigError("TrainConfig: holdout_frac must be in [0,1)");
}

double step_size_adagrad_norm(const SgdState& state, double l_grad_est, double eps) {
  return 1.0 / std::sqrt(4.0 * l_grad_est * l_grad_est + state.grad_sq_sum + eps);
}

namespace {

const SymMatrix& target_of(const Dataset& ds, std::int64_t i, LossKind kind,
                           SymMatrix& m_buf, SymMatrix& t_buf) {
  m_buf = ds.matrix(i);
  if (kind == LossKind::Unsupervised) return m_buf;
  t_buf = ds.low_rank(i);
  return t_buf;
}

}  // namespace

void sgd_step(NetworkParams& params, const Dataset& dataset,
              std::span<const std::int64_t> batch_indices, const TrainConfig& cfg,
              SgdState& state, double* batch_loss_out) {
  if (batch_indices.empty()) throw ConfigError("sgd_step: empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch_indices.size());
  SmoothAbs mu(cfg.delta);

  ParamGrad g = ParamGrad::zeros(params.arch);
  double loss = 0.0;
  SymMatrix m_buf(params.arch.n), t_buf(params.arch.n);
  for (std::size_t bi = 0; bi < batch_indices.size(); ++bi) {
    std::int64_t i = batch_indices[bi];
    const SymMatrix& target = target_of(dataset, i, cfg.loss_kind, m_buf, t_buf);
    BackwardResult br = backward(params, m_buf, target, mu);
    if (!std::isfinite(br.loss))
      throw NumericError("sgd_step: non-finite loss at step " +
                         std::to_string(state.step) + ", sample " + std::to_string(i));
    loss += br.loss;
    g.axpy(inv_n, br.grad);
  }
  loss *= inv_n;

  double gnorm2 = g.squared_norm();
  if (!std::isfinite(gnorm2))
    throw NumericError("sgd_step: non-finite gradient at step " +
                       std::to_string(state.step));
  if (cfg.clip_norm && gnorm2 > (*cfg.clip_norm) * (*cfg.clip_norm))
    g.scale(*cfg.clip_norm / std::sqrt(gnorm2));

  double h;
  if (const auto* c = std::get_if<ConstantRule>(&cfg.step_rule)) {
    h = c->rate;
  } else {
    const auto& a = std::get<AdagradNormRule>(cfg.step_rule);
    h = step_size_adagrad_norm(state, a.l_grad_est, a.eps);
    if (state.last_step_size > 0.0 && h > state.last_step_size + 1e-15)
      throw NumericError("sgd_step: adaptive step size increased");
  }
  state.last_step_size = h;

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    for (std::size_t i = 0; i < params.layers[l].w.a.size(); ++i)
      params.layers[l].w.a[i] -= h * g.layers[l].w.a[i];
    for (std::size_t i = 0; i < params.layers[l].b.size(); ++i)
      params.layers[l].b[i] -= h * g.layers[l].b[i];
  }
  state.grad_sq_sum += g.squared_norm();
  ++state.step;
  if (batch_loss_out) *batch_loss_out = loss;
}

namespace {

double mean_loss(const NetworkParams& params, const Dataset& ds,
                 std::span<const std::int64_t> idx, LossKind kind, double delta) {
  if (idx.empty()) return 0.0;
  SmoothAbs mu(delta);
  double s = 0.0;
  for (std::int64_t i : idx) {
    SymMatrix m = ds.matrix(i);
    if (kind == LossKind::Supervised)
      s += loss_supervised(params, m, ds.low_rank(i), mu);
    else
      s += loss_unsupervised(params, m, mu);
  }
  return s / static_cast<double>(idx.size());
}

}  // namespace

TrainResult train(const NetworkParams& params0, const Dataset& dataset,
                  const TrainConfig& cfg, const Dataset* eval_set) {
  cfg.validate();
  if (dataset.dim() != params0.arch.n)
    throw ConfigError("train: dataset dimension does not match architecture");
  if (dataset.size() < 1) throw ConfigError("train: empty dataset");

  std::vector<std::int64_t> train_idx, hold_idx;
  if (eval_set) {
    train_idx.resize(static_cast<std::size_t>(dataset.size()));
    std::iota(train_idx.begin(), train_idx.end(), 0);
    hold_idx.resize(static_cast<std::size_t>(eval_set->size()));
    std::iota(hold_idx.begin(), hold_idx.end(), 0);
  } else {
    // last holdout_frac of the dataset is reserved for monitoring
    std::int64_t n_hold = static_cast<std::int64_t>(
        std::floor(cfg.holdout_frac * static_cast<double>(dataset.size())));
    for (std::int64_t i = 0; i < dataset.size() - n_hold; ++i) train_idx.push_back(i);
    for (std::int64_t i = dataset.size() - n_hold; i < dataset.size(); ++i)
      hold_idx.push_back(i);
  }
  const Dataset& eval_ds = eval_set ? *eval_set : dataset;

  TrainResult out{params0, params0, {}};
  if (cfg.epochs == 0) return out;

  Rng order_rng(cfg.seed ^ 0x7261696e64ULL);
  SgdState state;
  auto t0 = std::chrono::steady_clock::now();
  bool have_best = false;

  std::vector<std::int64_t> perm = train_idx;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (!cfg.resample) {
      // Fisher-Yates with the seeded stream
      for (std::size_t i = perm.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(order_rng.uniform() * i);
        if (j >= i) j = i - 1;
        std::swap(perm[i - 1], perm[j]);
      }
    }
    std::size_t nsteps =
        (perm.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
        static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t s = 0; s < nsteps; ++s) {
      std::vector<std::int64_t> batch;
      if (cfg.resample) {
        batch.resize(static_cast<std::size_t>(cfg.batch_size));
        for (auto& b : batch) {
          std::size_t j = static_cast<std::size_t>(order_rng.uniform() * perm.size());
          if (j >= perm.size()) j = perm.size() - 1;
          b = perm[j];
        }
      } else {
        std::size_t lo = s * static_cast<std::size_t>(cfg.batch_size);
        std::size_t hi = std::min(perm.size(), lo + static_cast<std::size_t>(cfg.batch_size));
        batch.assign(perm.begin() + static_cast<std::ptrdiff_t>(lo),
                     perm.begin() + static_cast<std::ptrdiff_t>(hi));
      }
      double batch_loss = 0.0;
      sgd_step(out.params, dataset, batch, cfg, state, &batch_loss);

      if (state.step % cfg.eval_every == 0 || (epoch == cfg.epochs - 1 && s == nsteps - 1)) {
        double ev = mean_loss(out.params, eval_ds, hold_idx, cfg.loss_kind, cfg.delta);
        double ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
        out.report.records.push_back(TrainRecord{state.step, batch_loss, ev, ms});
        if (!have_best || ev < out.report.best_eval_loss) {
          have_best = true;
          out.report.best_eval_loss = ev;
          out.report.best_step = state.step;
          out.best_params = out.params;
        }
      }
    }
  }
  return out;
}

TrainResult finetune(const NetworkParams& params, const Dataset& matrices,
                     TrainConfig cfg, const Dataset* eval_set) {
  cfg.loss_kind = LossKind::Unsupervised;
  return train(params, matrices, cfg, eval_set);
}

void write_report_csv(const TrainReport& report, const std::string& path,
                      const std::string& header_comment) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_report_csv: cannot open " + path);
  if (!header_comment.empty()) os << "# " << header_comment << '\n';
  os << "step,train_loss,eval_loss,wall_ms\n";
  os.precision(17);
  for (const TrainRecord& r : report.records)
    os << r.step << ',' << r.train_loss << ',' << r.eval_loss << ',' << r.wall_ms << '\n';
}

}  // namespace denise
