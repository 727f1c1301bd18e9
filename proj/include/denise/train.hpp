#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "denise/datagen.hpp"
#include "denise/model.hpp"

namespace denise {

enum class LossKind { Supervised, Unsupervised };

struct AdagradNormRule {
  double l_grad_est = 1.0;  // stands in for the Lipschitz constant of grad Phi
  double eps = 1e-8;
};
struct ConstantRule {
  double rate = 1e-3;
};
using StepRule = std::variant<AdagradNormRule, ConstantRule>;

struct TrainConfig {
  LossKind loss_kind = LossKind::Supervised;
  int batch_size = 32;
  int epochs = 1;
  StepRule step_rule = ConstantRule{};
  std::uint64_t seed = 0;
  double delta = 1e-3;
  std::optional<double> clip_norm;
  int eval_every = 100;          // steps between report records
  bool resample = false;         // i.i.d. with replacement instead of epoch shuffle
  double holdout_frac = 0.02;    // ignored when an explicit eval set is given

  void validate() const;
};

struct TrainRecord {
  std::int64_t step = 0;
  double train_loss = 0.0;  // minibatch Monte Carlo loss at this step
  double eval_loss = 0.0;   // mean held-out loss
  double wall_ms = 0.0;
};

struct TrainReport {
  std::vector<TrainRecord> records;
  double best_eval_loss = 0.0;
  std::int64_t best_step = 0;
};

struct SgdState {
  std::int64_t step = 0;            // j, 1-based for the step-size formula
  double grad_sq_sum = 0.0;         // sum of ||G_i||^2 over past steps
  double last_step_size = 0.0;
};

// h_j = (4 L^2 + sum_{i<j} ||G_i||^2 + eps)^{-1/2}; monotone nonincreasing.
double step_size_adagrad_norm(const SgdState& state, double l_grad_est, double eps);

// One SGD step over a batch of (M, target) pairs taken from `dataset` at the
// given indices. Updates params in place and advances state.
void sgd_step(NetworkParams& params, const Dataset& dataset,
              std::span<const std::int64_t> batch_indices, const TrainConfig& cfg,
              SgdState& state, double* batch_loss_out = nullptr);

struct TrainResult {
  NetworkParams params;       // final
  NetworkParams best_params;  // lowest held-out loss seen
  TrainReport report;
};

TrainResult train(const NetworkParams& params0, const Dataset& dataset,
                  const TrainConfig& cfg, const Dataset* eval_set = nullptr);

// Unsupervised continuation on unlabeled matrices; L0 fields are ignored.
TrainResult finetune(const NetworkParams& params, const Dataset& matrices,
                     TrainConfig cfg, const Dataset* eval_set = nullptr);

void write_report_csv(const TrainReport& report, const std::string& path,
                      const std::string& header_comment = "");

}  // namespace denise
