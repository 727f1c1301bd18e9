#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "denise/train.hpp"
#include "doctest.h"

using namespace denise;

namespace {

Dataset toy_dataset(int n, int k0, std::int64_t count, std::uint64_t seed) {
  GenConfig cfg;
  cfg.n = n;
  cfg.k0 = k0;
  cfg.s0 = 0.8;
  cfg.seed = seed;
  cfg.count = count;
  return gen_dataset(cfg);
}

double param_l1_diff(const NetworkParams& a, const NetworkParams& b) {
  double d = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    for (std::size_t i = 0; i < a.layers[l].w.a.size(); ++i)
      d += std::abs(a.layers[l].w.a[i] - b.layers[l].w.a[i]);
    for (std::size_t i = 0; i < a.layers[l].b.size(); ++i)
      d += std::abs(a.layers[l].b[i] - b.layers[l].b[i]);
  }
  return d;
}

}  // namespace

TEST_CASE("adagrad-norm step size matches the closed form") {
  SgdState st;
  st.step = 1;
  st.grad_sq_sum = 0.0;
  // (4 * 1^2 + 0 + 0)^{-1/2} = 1/2 at eps -> 0
  CHECK(step_size_adagrad_norm(st, 1.0, 1e-300) == doctest::Approx(0.5));
  st.grad_sq_sum = 5.0;
  CHECK(step_size_adagrad_norm(st, 1.0, 1e-300) ==
        doctest::Approx(1.0 / std::sqrt(9.0)));
  CHECK(step_size_adagrad_norm(st, 2.0, 1.0) ==
        doctest::Approx(1.0 / std::sqrt(16.0 + 5.0 + 1.0)));
}

TEST_CASE("adagrad-norm step size never increases as gradients accumulate") {
  SgdState st;
  double prev = step_size_adagrad_norm(st, 1.0, 1e-8);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    st.grad_sq_sum += rng.uniform();
    double h = step_size_adagrad_norm(st, 1.0, 1e-8);
    CHECK(h <= prev + 1e-15);
    prev = h;
  }
}

TEST_CASE("sgd_step averages the gradient over the batch") {
  int n = 5, k = 2;
  Dataset ds = toy_dataset(n, k, 4, 3);
  Architecture arch = Architecture::make(n, k);
  TrainConfig cfg;
  cfg.step_rule = ConstantRule{0.01};

  // one sample versus that sample repeated: identical update
  NetworkParams p1 = NetworkParams::init(arch, 7);
  NetworkParams p2 = p1;
  SgdState s1, s2;
  std::vector<std::int64_t> single{2};
  std::vector<std::int64_t> repeated{2, 2, 2};
  sgd_step(p1, ds, single, cfg, s1);
  sgd_step(p2, ds, repeated, cfg, s2);
  CHECK(param_l1_diff(p1, p2) <= 1e-14);

  // a mixed batch moves less far than the worst of its members (averaging)
  NetworkParams q = NetworkParams::init(arch, 7);
  SgdState sq;
  double loss = 0.0;
  std::vector<std::int64_t> batch{0, 1, 2, 3};
  sgd_step(q, ds, batch, cfg, sq, &loss);
  CHECK(loss > 0.0);
  CHECK(sq.step == 1);
  CHECK(sq.grad_sq_sum > 0.0);
}

TEST_CASE("training for zero epochs returns the initial parameters") {
  int n = 5, k = 2;
  Dataset ds = toy_dataset(n, k, 8, 5);
  NetworkParams p0 = NetworkParams::init(Architecture::make(n, k), 11);
  TrainConfig cfg;
  cfg.epochs = 0;
  TrainResult r = train(p0, ds, cfg);
  CHECK(param_l1_diff(r.params, p0) == 0.0);
  CHECK(r.report.records.empty());
}

TEST_CASE("constant-rate training reduces the loss on a toy problem") {
  int n = 5, k = 2;
  Dataset ds = toy_dataset(n, k, 512, 13);
  NetworkParams p0 = NetworkParams::init(Architecture::make(n, k), 1);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 10;
  cfg.step_rule = ConstantRule{1e-2};
  cfg.eval_every = 10;
  cfg.holdout_frac = 0.125;
  TrainResult r = train(p0, ds, cfg);
  REQUIRE(r.report.records.size() >= 2);
  double first = r.report.records.front().eval_loss;
  double last = r.report.records.back().eval_loss;
  CHECK(last < first);
  CHECK(r.report.best_eval_loss <= last + 1e-12);
}

TEST_CASE("adagrad-norm training descends and its step sizes shrink") {
  int n = 5, k = 2;
  Dataset ds = toy_dataset(n, k, 64, 17);
  NetworkParams p0 = NetworkParams::init(Architecture::make(n, k), 2);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 40;
  cfg.step_rule = AdagradNormRule{0.5, 1e-8};
  cfg.eval_every = 20;
  cfg.holdout_frac = 0.125;
  TrainResult r = train(p0, ds, cfg);
  REQUIRE(r.report.records.size() >= 2);
  CHECK(r.report.records.back().eval_loss < r.report.records.front().eval_loss);
  // the rule itself asserts monotonicity inside sgd_step; exercise it directly
  SgdState st;
  NetworkParams p = p0;
  std::vector<std::int64_t> batch{0, 1};
  double prev = 0.0;
  for (int i = 0; i < 5; ++i) {
    sgd_step(p, ds, batch, cfg, st);
    if (i > 0) CHECK(st.last_step_size <= prev + 1e-15);
    prev = st.last_step_size;
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  int n = 4, k = 2;
  Dataset ds = toy_dataset(n, k, 32, 19);
  NetworkParams p0 = NetworkParams::init(Architecture::make(n, k), 3);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 3;
  cfg.seed = 1234;
  cfg.step_rule = ConstantRule{1e-3};
  TrainResult a = train(p0, ds, cfg);
  TrainResult b = train(p0, ds, cfg);
  CHECK(param_l1_diff(a.params, b.params) == 0.0);
  cfg.seed = 1235;
  TrainResult c = train(p0, ds, cfg);
  CHECK(param_l1_diff(a.params, c.params) > 0.0);
}

TEST_CASE("finetune is unsupervised: the stored low-rank parts are ignored") {
  int n = 4, k = 2;
  Dataset ds = toy_dataset(n, k, 16, 23);
  // same matrices, garbage L0
  Dataset junk(ds.config(), n);
  SymMatrix fake(n);
  for (int i = 0; i < n; ++i) fake.set(i, i, 1e6);
  for (std::int64_t i = 0; i < ds.size(); ++i) junk.append(ds.matrix(i), fake);

  NetworkParams p0 = NetworkParams::init(Architecture::make(n, k), 4);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.seed = 9;
  cfg.step_rule = ConstantRule{1e-3};
  cfg.loss_kind = LossKind::Supervised;  // finetune must override this
  TrainResult a = finetune(p0, ds, cfg);
  TrainResult b = finetune(p0, junk, cfg);
  CHECK(param_l1_diff(a.params, b.params) == 0.0);
}

TEST_CASE("train config validation rejects bad settings") {
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.epochs = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.delta = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.step_rule = ConstantRule{0.0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.step_rule = AdagradNormRule{0.0, 1e-8};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.holdout_frac = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(TrainConfig{}.validate());
}

TEST_CASE("training report CSV has the expected shape") {
  int n = 4, k = 1;
  Dataset ds = toy_dataset(n, k, 16, 29);
  NetworkParams p0 = NetworkParams::init(Architecture::make(n, k), 5);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.eval_every = 2;
  cfg.step_rule = ConstantRule{1e-3};
  TrainResult r = train(p0, ds, cfg);
  std::string path = "test_train_report.csv";
  write_report_csv(r.report, path, "toy run");
  std::ifstream in(path);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line.rfind("#", 0) == 0);  // comment first
  REQUIRE(std::getline(in, line));
  CHECK(line == "step,train_loss,eval_loss,wall_ms");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == static_cast<int>(r.report.records.size()));
  in.close();
  std::remove(path.c_str());
}
