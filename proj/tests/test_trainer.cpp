#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ddlab/trainer.hpp"
#include "test_util.hpp"

using namespace ddlab;

namespace {

DataSpec tiny_spec() {
  DataSpec spec;
  spec.latent_dim = 2;
  spec.n_features = 4;
  spec.n_train = 12;
  spec.n_test = 30;
  spec.snr = 10.0;
  spec.seed = 9;
  return spec;
}

TrainConfig schedule(std::int64_t epochs, std::int64_t batch_size) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = batch_size;
  return c;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(schedule(1, 1).validate());
  TrainConfig zero_lr;
  zero_lr.lr = 0.0;
  CHECK_NOTHROW(zero_lr.validate());
  TrainConfig bad = zero_lr;
  bad.lr = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = zero_lr;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = zero_lr;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = zero_lr;
  bad.eval_every = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("defaults encode the two training schedules") {
  CHECK(default_ae_train() == TrainConfig{});
  const TrainConfig lin = default_linear_ae_train();
  CHECK(lin.epochs == 1000);
  CHECK(lin.batch_size == 20);
  CHECK(lin.lr == 0.001);
}

TEST_CASE("lr zero leaves the initial model untouched") {
  const Dataset ds = generate_dataset(tiny_spec());
  const ArchSpec arch = nonlinear_arch(4, 6, 2);
  TrainConfig config = schedule(3, 5);
  config.lr = 0.0;
  config.eval_every = 1;

  Model trained;
  const RunRecord rec = train(ds, arch, config, 17, &trained);
  const Model fresh = init_model(arch, 17);
  for (std::size_t k = 0; k < fresh.layers.size(); ++k) {
    REQUIRE(trained.layers[k].weight == fresh.layers[k].weight);
    REQUIRE(trained.layers[k].bias == fresh.layers[k].bias);
  }
  CHECK(rec.final_train_mse == evaluate(fresh, ds.x_train));
  CHECK(rec.final_test_mse == evaluate(fresh, ds.x_test));
  REQUIRE(rec.trace.size() == 3);
  for (const auto& entry : rec.trace) {
    CHECK(entry.train_mse == rec.final_train_mse);
    CHECK(entry.test_mse == rec.final_test_mse);
  }
}

TEST_CASE("training is bit-identical across repeats") {
  const Dataset ds = generate_dataset(tiny_spec());
  const ArchSpec arch = nonlinear_arch(4, 8, 2);
  TrainConfig config = schedule(6, 5);
  config.eval_every = 2;
  config.shuffle_seed = 5;

  Model ma, mb;
  const RunRecord a = train(ds, arch, config, 3, &ma);
  const RunRecord b = train(ds, arch, config, 3, &mb);
  REQUIRE(a.final_train_mse == b.final_train_mse);
  REQUIRE(a.final_test_mse == b.final_test_mse);
  REQUIRE(a.total_steps == b.total_steps);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    REQUIRE(a.trace[i].epoch == b.trace[i].epoch);
    REQUIRE(a.trace[i].train_mse == b.trace[i].train_mse);
    REQUIRE(a.trace[i].test_mse == b.trace[i].test_mse);
  }
  for (std::size_t k = 0; k < ma.layers.size(); ++k) {
    REQUIRE(ma.layers[k].weight == mb.layers[k].weight);
    REQUIRE(ma.layers[k].bias == mb.layers[k].bias);
  }

  // A different shuffle stream must actually change the outcome.
  config.shuffle_seed = 6;
  const RunRecord c = train(ds, arch, config, 3);
  CHECK(c.final_train_mse != a.final_train_mse);
}

TEST_CASE("evaluate is chunk-size invariant up to rounding") {
  const Dataset ds = generate_dataset(tiny_spec());
  const Model m = init_model(nonlinear_arch(4, 6, 2), 2);
  const double whole = evaluate(m, ds.x_test, 1 << 20);
  const double small = evaluate(m, ds.x_test, 7);
  CHECK(std::abs(whole - small) <= 1e-12 * std::abs(whole));
  CHECK_THROWS_AS(evaluate(m, Matrix::Zero(2, 5)), std::invalid_argument);
  CHECK_THROWS_AS(evaluate(m, ds.x_test, 0), std::invalid_argument);
}

TEST_CASE("evaluate of the zero model is the mean squared entry") {
  const Dataset ds = generate_dataset(tiny_spec());
  Model m = init_model(nonlinear_arch(4, 3, 2), 0);
  for (auto& layer : m.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  const double expected = ds.x_test.squaredNorm() / static_cast<double>(ds.x_test.size());
  CHECK(std::abs(evaluate(m, ds.x_test) - expected) < 1e-14);
}

TEST_CASE("step accounting covers partial batches") {
  DataSpec spec = tiny_spec();
  spec.n_train = 7;
  const Dataset ds = generate_dataset(spec);
  const ArchSpec arch = nonlinear_arch(4, 3, 2);

  // 7 rows in batches of 3 is 3 steps per epoch, short batch included.
  const RunRecord rec = train(ds, arch, schedule(4, 3), 0);
  CHECK(rec.total_steps == 12);
  CHECK_FALSE(rec.step_capped);

  const RunRecord full = train(ds, arch, schedule(4, 100), 0);
  CHECK(full.total_steps == 4);
}

TEST_CASE("trace cadence follows eval_every") {
  const Dataset ds = generate_dataset(tiny_spec());
  TrainConfig config = schedule(5, 6);
  config.eval_every = 2;
  const RunRecord rec = train(ds, nonlinear_arch(4, 3, 2), config, 1);
  REQUIRE(rec.trace.size() == 2);
  CHECK(rec.trace[0].epoch == 2);
  CHECK(rec.trace[1].epoch == 4);

  config.eval_every = 0;
  CHECK(train(ds, nonlinear_arch(4, 3, 2), config, 1).trace.empty());
}

TEST_CASE("max_steps caps the run and flags it") {
  DataSpec spec = tiny_spec();
  spec.n_train = 10;
  const Dataset ds = generate_dataset(spec);
  const ArchSpec arch = nonlinear_arch(4, 3, 2);

  TrainConfig config = schedule(10, 5);
  config.max_steps = 7;
  const RunRecord capped = train(ds, arch, config, 0);
  CHECK(capped.total_steps == 7);
  CHECK(capped.step_capped);

  // A cap that lands exactly on the natural last step is not a truncation.
  config.max_steps = 20;
  const RunRecord exact = train(ds, arch, config, 0);
  CHECK(exact.total_steps == 20);
  CHECK_FALSE(exact.step_capped);

  config.max_steps = 0;
  CHECK(train(ds, arch, config, 0).total_steps == 20);
}

TEST_CASE("an exploding run is flagged instead of throwing") {
  const Dataset ds = generate_dataset(tiny_spec());
  TrainConfig config = schedule(5, 5);
  config.lr = 1e120;
  const RunRecord rec = train(ds, nonlinear_arch(4, 8, 2), config, 0);
  CHECK(rec.diverged);
  CHECK(std::isinf(rec.final_train_mse));
  CHECK(std::isinf(rec.final_test_mse));
  CHECK(rec.total_steps < 5 * 3);
}

TEST_CASE("a short run reduces the training loss") {
  DataSpec spec = tiny_spec();
  spec.n_train = 64;
  const Dataset ds = generate_dataset(spec);
  const ArchSpec arch = nonlinear_arch(4, 16, 2);

  TrainConfig frozen = schedule(1, 10);
  frozen.lr = 0.0;
  const double initial = train(ds, arch, frozen, 11).final_train_mse;
  const RunRecord rec = train(ds, arch, schedule(200, 10), 11);
  REQUIRE_FALSE(rec.diverged);
  CHECK(rec.final_train_mse < 0.5 * initial);
}

TEST_CASE("mismatched arch and dataset widths are rejected") {
  const Dataset ds = generate_dataset(tiny_spec());
  CHECK_THROWS_AS(train(ds, nonlinear_arch(5, 3, 2), schedule(1, 5), 0), std::invalid_argument);
}

TEST_CASE("the linear family interpolates a tiny training set") {
  DataSpec spec = default_linear_ae_data();
  spec.n_train = 8;
  spec.n_test = 100;
  spec.seed = 3;
  const Dataset ds = generate_dataset(spec);

  const RunRecord rec = train(ds, linear_ae_arch(), default_linear_ae_train(), 40);
  REQUIRE_FALSE(rec.diverged);
  CHECK(rec.param_count == 29445);
  CHECK(rec.final_train_mse < 1e-4);
  CHECK(rec.final_test_mse > rec.final_train_mse);
}
