#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ddlab/datagen.hpp"
#include "ddlab/nn.hpp"
#include "ddlab/rng.hpp"

namespace ddlab {

// Optimization schedule for one run. The AE family trains 200 epochs with
// batches of 10; the linear family 1000 epochs with batches of 20; both at
// lr 0.001. max_steps bounds total optimizer steps so huge-N runs stay at
// desk scale (<= 0 disables the cap).
struct TrainConfig {
  double lr = 0.001;
  std::int64_t epochs = 200;
  std::int64_t batch_size = 10;
  std::uint64_t shuffle_seed = 0;
  std::int64_t eval_every = 0;  // epochs between trace points; 0 = no trace
  std::int64_t max_steps = 500000;

  void validate() const {
    if (!(lr >= 0.0)) throw std::invalid_argument("TrainConfig: lr must be >= 0");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (eval_every < 0) throw std::invalid_argument("TrainConfig: eval_every must be >= 0");
  }

  bool operator==(const TrainConfig&) const = default;
};

inline TrainConfig default_ae_train() { return TrainConfig{}; }

inline TrainConfig default_linear_ae_train() {
  TrainConfig c;
  c.epochs = 1000;
  c.batch_size = 20;
  return c;
}

struct TraceEntry {
  std::int64_t epoch = 0;
  double train_mse = 0.0;
  double test_mse = 0.0;
};

// Everything one training run produced. wall_time is timing metadata and is
// the only field outside the determinism contract.
struct RunRecord {
  ArchSpec arch;
  DataSpec data_spec;
  TrainConfig train_config;
  std::uint64_t data_seed = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t shuffle_seed = 0;
  std::int64_t param_count = 0;
  double final_train_mse = 0.0;
  double final_test_mse = 0.0;
  std::vector<TraceEntry> trace;
  double wall_time = 0.0;
  bool diverged = false;
  std::int64_t total_steps = 0;
  bool step_capped = false;
};

// Full-batch reconstruction MSE, computed in fixed row chunks. The chunk size
// only affects summation order, not the result beyond 64-bit rounding.
inline double evaluate(const Model& model, const Matrix& data, std::int64_t chunk = 1024) {
  if (data.cols() != model.arch.n_features)
    throw std::invalid_argument("evaluate: data width does not match n_features");
  if (chunk < 1) throw std::invalid_argument("evaluate: chunk must be >= 1");
  ForwardCache cache;
  double sq_sum = 0.0;
  for (std::int64_t start = 0; start < data.rows(); start += chunk) {
    const auto rows = std::min(chunk, data.rows() - start);
    const Matrix block = data.middleRows(start, rows);
    sq_sum += (forward(model, block, cache) - block).squaredNorm();
  }
  return sq_sum / static_cast<double>(data.size());
}

// Mini-batch Adam on reconstruction MSE. Each epoch visits x_train once under
// a fresh permutation from the shuffle_seed stream; a short final batch is
// kept and weighted naturally by the mean reduction. A non-finite batch loss
// flags the record as diverged instead of throwing, so sweeps survive bad
// corners. Deterministic in (dataset, arch, config, init_seed).
inline RunRecord train(const Dataset& dataset, const ArchSpec& arch, const TrainConfig& config,
                       std::uint64_t init_seed, Model* out_model = nullptr) {
  arch.validate();
  config.validate();
  if (arch.n_features != dataset.spec.n_features)
    throw std::invalid_argument("train: arch.n_features does not match dataset");

  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.arch = arch;
  rec.data_spec = dataset.spec;
  rec.train_config = config;
  rec.data_seed = dataset.spec.seed;
  rec.init_seed = init_seed;
  rec.shuffle_seed = config.shuffle_seed;
  rec.param_count = param_count(arch);

  Model model = init_model(arch, init_seed);
  AdamState adam = AdamState::for_model(model, AdamHyper{.lr = config.lr});
  Rng shuffle_rng(config.shuffle_seed);

  const std::int64_t n_rows = dataset.x_train.rows();
  const std::int64_t bs = std::min(config.batch_size, n_rows);
  Matrix batch(bs, dataset.x_train.cols());
  ForwardCache cache;
  Gradients grads;

  bool stop = false;
  for (std::int64_t epoch = 0; epoch < config.epochs && !stop; ++epoch) {
    const auto perm = random_permutation(static_cast<std::uint64_t>(n_rows), shuffle_rng);
    for (std::int64_t start = 0; start < n_rows && !stop; start += bs) {
      const auto rows = std::min(bs, n_rows - start);
      if (batch.rows() != rows) batch.resize(rows, dataset.x_train.cols());
      for (std::int64_t i = 0; i < rows; ++i)
        batch.row(i) = dataset.x_train.row(static_cast<std::int64_t>(perm[start + i]));

      const Matrix& pred = forward(model, batch, cache);
      const double loss = mse_loss(pred, batch);
      if (!std::isfinite(loss)) {
        rec.diverged = true;
        stop = true;
        break;
      }
      backward(model, cache, batch, grads);
      adam_step(model, grads, adam);
      rec.total_steps += 1;
      if (config.max_steps > 0 && rec.total_steps >= config.max_steps) {
        const bool last = epoch == config.epochs - 1 && start + rows >= n_rows;
        rec.step_capped = !last;
        stop = true;
      }
    }
    if (!stop && config.eval_every > 0 && (epoch + 1) % config.eval_every == 0)
      rec.trace.push_back({epoch + 1, evaluate(model, dataset.x_train),
                           evaluate(model, dataset.x_test)});
  }

  if (rec.diverged) {
    rec.final_train_mse = std::numeric_limits<double>::infinity();
    rec.final_test_mse = std::numeric_limits<double>::infinity();
  } else {
    rec.final_train_mse = evaluate(model, dataset.x_train);
    rec.final_test_mse = evaluate(model, dataset.x_test);
    if (!std::isfinite(rec.final_train_mse) || !std::isfinite(rec.final_test_mse))
      rec.diverged = true;
  }
  rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (out_model) *out_model = std::move(model);
  return rec;
}

}  // namespace ddlab
