#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ddlab/datagen.hpp"
#include "ddlab/nn.hpp"
#include "ddlab/results.hpp"
#include "ddlab/trainer.hpp"

namespace ddlab {

// params / (n_train * out_dim). Ratio 1 marks where classical theory predicts
// the interpolation peak.
inline double parameterization_ratio(std::int64_t params, std::int64_t n_train,
                                     std::int64_t out_dim) {
  if (params < 1 || n_train < 1 || out_dim < 1)
    throw std::invalid_argument("parameterization_ratio: all inputs must be positive");
  return static_cast<double>(params) /
         (static_cast<double>(n_train) * static_cast<double>(out_dim));
}

// Grid for the nonlinear-AE family. Cells are either the latent x hidden
// cross product or, when `cells` is non-empty, exactly that list (used for
// unions of slices at desk scale). Cell order is canonical: as listed.
struct SweepGrid {
  std::vector<std::int64_t> latent_values;
  std::vector<std::int64_t> hidden_values;
  std::vector<std::pair<std::int64_t, std::int64_t>> cells;  // explicit (latent, hidden)
  std::int64_t seeds_per_cell = 3;
  DataSpec base_data;
  TrainConfig base_train;

  std::vector<std::pair<std::int64_t, std::int64_t>> resolved_cells() const {
    if (!cells.empty()) return cells;
    std::vector<std::pair<std::int64_t, std::int64_t>> out;
    out.reserve(latent_values.size() * hidden_values.size());
    for (auto l : latent_values)
      for (auto h : hidden_values) out.emplace_back(l, h);
    return out;
  }

  void validate() const {
    if (seeds_per_cell < 1) throw std::invalid_argument("SweepGrid: seeds_per_cell must be >= 1");
    const auto cs = resolved_cells();
    if (cs.empty()) throw std::invalid_argument("SweepGrid: no cells (empty value lists)");
    std::set<std::pair<std::int64_t, std::int64_t>> seen;
    for (const auto& [l, h] : cs) {
      if (l < 1 || h < 1) throw std::invalid_argument("SweepGrid: widths must be >= 1");
      if (!seen.insert({l, h}).second) throw std::invalid_argument("SweepGrid: duplicate cell");
    }
    base_data.validate();
    base_train.validate();
  }
};

// Full-scale default grid, densified near latent 20 and hidden 28 where the
// transition to interpolation sits.
inline SweepGrid default_ae_grid() {
  SweepGrid g;
  g.latent_values = {2, 5, 10, 15, 20, 25, 30, 50, 100, 200};
  g.hidden_values = {4, 8, 16, 28, 64, 128, 256, 512, 1024};
  return g;
}

// Desk-scale grid: the union of one latent slice (hidden 200), one hidden
// slice (latent 20), and a short latent slice at hidden 128 probing the
// interpolation boundary.
inline SweepGrid desk_ae_grid() {
  SweepGrid g;
  for (std::int64_t l : {2, 5, 10, 15, 20, 25, 30, 50, 100}) g.cells.emplace_back(l, 200);
  for (std::int64_t h : {4, 8, 16, 28, 64, 128, 256, 512}) g.cells.emplace_back(20, h);
  for (std::int64_t l : {2, 5, 10, 30}) g.cells.emplace_back(l, 128);
  return g;
}

inline std::vector<std::int64_t> desk_linear_sizes() {
  return {8, 30, 100, 300, 1000, 1178, 1500, 3000, 10000, 30000, 100000};
}

// Full-scale sizes: 25 log-spaced points over [8, 1.1e6] plus the two sizes
// bracketing the interpolation threshold of the 29445-parameter model at
// out_dim 25 (1178) and out_dim 20 (1473).
inline std::vector<std::int64_t> full_linear_sizes() {
  std::set<std::int64_t> sizes{1178, 1473};
  const double lo = std::log(8.0), hi = std::log(1.1e6);
  for (int k = 0; k < 25; ++k)
    sizes.insert(static_cast<std::int64_t>(std::llround(std::exp(lo + (hi - lo) * k / 24.0))));
  return {sizes.begin(), sizes.end()};
}

// Key for per-task wall-time bookkeeping in metadata files.
inline std::string task_time_key(const std::string& experiment_id, std::int64_t latent,
                                 std::int64_t hidden, std::int64_t n_train,
                                 std::int64_t replicate) {
  return experiment_id + "/" + std::to_string(latent) + ":" + std::to_string(hidden) + ":" +
         std::to_string(n_train) + ":" + std::to_string(replicate);
}

// Seed derivation from the master seed S. Every task has a canonical index t
// (enumeration order, continued across the sweeps of one invocation):
//   init_seed    = S + 1000 * t
//   shuffle_seed = S + 2000 * t
//   data_seed    = S + replicate          (AE family: one dataset per
//                                          replicate, shared across cells)
//   data_seed    = S + 3000 * t           (linear family: fresh dataset per
//                                          task)
inline std::uint64_t derive_init_seed(std::uint64_t master, std::int64_t task) {
  return master + 1000u * static_cast<std::uint64_t>(task);
}
inline std::uint64_t derive_shuffle_seed(std::uint64_t master, std::int64_t task) {
  return master + 2000u * static_cast<std::uint64_t>(task);
}
inline std::uint64_t derive_ae_data_seed(std::uint64_t master, std::int64_t replicate) {
  return master + static_cast<std::uint64_t>(replicate);
}
inline std::uint64_t derive_linear_data_seed(std::uint64_t master, std::int64_t task) {
  return master + 3000u * static_cast<std::uint64_t>(task);
}

struct SweepOptions {
  std::string experiment_id;
  std::uint64_t master_seed = 0;
  std::int64_t workers = 1;
  std::int64_t task_index_base = 0;  // first canonical task index of this sweep
};

namespace detail {

// Runs tasks on a bounded pool but hands results to `write_one` strictly in
// task order, so the results store is byte-identical for any worker count.
inline void run_pool_ordered(std::int64_t workers, std::int64_t n_tasks,
                             const std::function<ResultRow(std::int64_t)>& run_one,
                             const std::function<void(ResultRow)>& write_one) {
  if (n_tasks <= 0) return;
  workers = std::max<std::int64_t>(1, std::min(workers, n_tasks));
  if (workers == 1) {
    for (std::int64_t i = 0; i < n_tasks; ++i) write_one(run_one(i));
    return;
  }

  std::vector<std::optional<ResultRow>> slots(static_cast<std::size_t>(n_tasks));
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<std::int64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;

  const auto worker = [&] {
    while (!failed.load()) {
      const auto i = next.fetch_add(1);
      if (i >= n_tasks) return;
      try {
        ResultRow row = run_one(i);
        std::lock_guard lk(mu);
        slots[static_cast<std::size_t>(i)] = std::move(row);
      } catch (...) {
        std::lock_guard lk(mu);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
      }
      cv.notify_all();
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (std::int64_t k = 0; k < workers; ++k) threads.emplace_back(worker);

  std::int64_t w = 0;
  {
    std::unique_lock lk(mu);
    while (w < n_tasks && !failed.load()) {
      cv.wait(lk, [&] { return slots[static_cast<std::size_t>(w)].has_value() || failed.load(); });
      if (failed.load()) break;
      ResultRow row = std::move(*slots[static_cast<std::size_t>(w)]);
      slots[static_cast<std::size_t>(w)].reset();
      lk.unlock();
      write_one(std::move(row));
      lk.lock();
      ++w;
    }
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

// Trains every (cell, replicate) of the grid and appends one row each to the
// store, skipping rows already present (resume). Returns this sweep's rows in
// canonical task order. One dataset per replicate, shared across cells, so
// within a replicate the only varying factor is capacity.
inline ResultsTable run_ae_sweep(const SweepGrid& grid, const SweepOptions& opt,
                                 ResultsStore& store,
                                 std::map<std::string, double>* run_seconds = nullptr) {
  grid.validate();
  const auto cells = grid.resolved_cells();

  struct Task {
    std::int64_t latent, hidden, replicate, index;
  };
  std::vector<Task> tasks;
  tasks.reserve(cells.size() * static_cast<std::size_t>(grid.seeds_per_cell));
  std::int64_t position = 0;
  for (const auto& [l, h] : cells)
    for (std::int64_t r = 0; r < grid.seeds_per_cell; ++r)
      tasks.push_back({l, h, r, opt.task_index_base + position++});

  std::vector<std::int64_t> todo;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const RowKey key{opt.experiment_id, tasks[i].latent, tasks[i].hidden, grid.base_data.n_train,
                     tasks[i].replicate};
    if (!store.contains(key)) todo.push_back(static_cast<std::int64_t>(i));
  }

  std::map<std::int64_t, Dataset> datasets;
  for (auto i : todo) {
    const auto r = tasks[static_cast<std::size_t>(i)].replicate;
    if (!datasets.count(r)) {
      DataSpec spec = grid.base_data;
      spec.seed = derive_ae_data_seed(opt.master_seed, r);
      datasets.emplace(r, generate_dataset(spec));
    }
  }

  std::vector<double> task_seconds(todo.size(), 0.0);

  const auto run_one = [&](std::int64_t j) -> ResultRow {
    const Task& task = tasks[static_cast<std::size_t>(todo[static_cast<std::size_t>(j)])];
    const Dataset& ds = datasets.at(task.replicate);
    const ArchSpec arch = nonlinear_arch(grid.base_data.n_features, task.hidden, task.latent);
    TrainConfig config = grid.base_train;
    config.shuffle_seed = derive_shuffle_seed(opt.master_seed, task.index);
    const RunRecord rec = train(ds, arch, config, derive_init_seed(opt.master_seed, task.index));
    task_seconds[static_cast<std::size_t>(j)] = rec.wall_time;

    ResultRow row;
    row.experiment_id = opt.experiment_id;
    row.latent = task.latent;
    row.hidden = task.hidden;
    row.n_train = ds.spec.n_train;
    row.n_features = ds.spec.n_features;
    row.data_latent_dim = ds.spec.latent_dim;
    row.snr = ds.spec.snr;
    row.param_count = rec.param_count;
    row.seed = task.replicate;
    row.epochs = config.epochs;
    row.lr = config.lr;
    row.batch_size = config.batch_size;
    row.train_mse = rec.final_train_mse;
    row.test_mse = rec.final_test_mse;
    row.diverged = rec.diverged;
    return row;
  };

  detail::run_pool_ordered(opt.workers, static_cast<std::int64_t>(todo.size()), run_one,
                           [&](ResultRow row) { store.append(row); });

  if (run_seconds)
    for (std::size_t j = 0; j < todo.size(); ++j) {
      const Task& task = tasks[static_cast<std::size_t>(todo[j])];
      (*run_seconds)[task_time_key(opt.experiment_id, task.latent, task.hidden,
                                   grid.base_data.n_train, task.replicate)] = task_seconds[j];
    }

  ResultsTable table;
  table.reserve(tasks.size());
  for (const auto& task : tasks) {
    const RowKey key{opt.experiment_id, task.latent, task.hidden, grid.base_data.n_train,
                     task.replicate};
    const ResultRow* row = store.find(key);
    if (!row) throw std::runtime_error("sweep finished but a row is missing from the store");
    table.push_back(*row);
  }
  return table;
}

// Size sweep of the fixed linear AE. One fresh dataset per (n_train,
// replicate) task; everything else mirrors run_ae_sweep.
inline ResultsTable run_linear_ae_sweep(const std::vector<std::int64_t>& n_train_values,
                                        const DataSpec& base_data, const TrainConfig& base_train,
                                        std::int64_t seeds, const SweepOptions& opt,
                                        ResultsStore& store,
                                        std::map<std::string, double>* run_seconds = nullptr) {
  if (n_train_values.empty())
    throw std::invalid_argument("run_linear_ae_sweep: no n_train values");
  {
    std::set<std::int64_t> seen;
    for (auto n : n_train_values) {
      if (n < 1) throw std::invalid_argument("run_linear_ae_sweep: n_train must be >= 1");
      if (!seen.insert(n).second)
        throw std::invalid_argument("run_linear_ae_sweep: duplicate n_train value");
    }
  }
  if (seeds < 1) throw std::invalid_argument("run_linear_ae_sweep: seeds must be >= 1");
  base_train.validate();
  const ArchSpec arch = linear_ae_arch();
  if (base_data.n_features != arch.n_features)
    throw std::invalid_argument("run_linear_ae_sweep: base data must have n_features 25");

  struct Task {
    std::int64_t n_train, replicate, index;
  };
  std::vector<Task> tasks;
  tasks.reserve(n_train_values.size() * static_cast<std::size_t>(seeds));
  std::int64_t position = 0;
  for (auto n : n_train_values)
    for (std::int64_t r = 0; r < seeds; ++r)
      tasks.push_back({n, r, opt.task_index_base + position++});

  const std::int64_t row_latent = arch.latent;
  const std::int64_t row_hidden = arch.encoder_hidden.front();

  std::vector<std::int64_t> todo;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const RowKey key{opt.experiment_id, row_latent, row_hidden, tasks[i].n_train,
                     tasks[i].replicate};
    if (!store.contains(key)) todo.push_back(static_cast<std::int64_t>(i));
  }

  std::vector<double> task_seconds(todo.size(), 0.0);

  const auto run_one = [&](std::int64_t j) -> ResultRow {
    const Task& task = tasks[static_cast<std::size_t>(todo[static_cast<std::size_t>(j)])];
    DataSpec spec = base_data;
    spec.n_train = task.n_train;
    spec.seed = derive_linear_data_seed(opt.master_seed, task.index);
    const Dataset ds = generate_dataset(spec);
    TrainConfig config = base_train;
    config.shuffle_seed = derive_shuffle_seed(opt.master_seed, task.index);
    const RunRecord rec = train(ds, arch, config, derive_init_seed(opt.master_seed, task.index));
    task_seconds[static_cast<std::size_t>(j)] = rec.wall_time;

    ResultRow row;
    row.experiment_id = opt.experiment_id;
    row.latent = row_latent;
    row.hidden = row_hidden;
    row.n_train = task.n_train;
    row.n_features = spec.n_features;
    row.data_latent_dim = spec.latent_dim;
    row.snr = spec.snr;
    row.param_count = rec.param_count;
    row.seed = task.replicate;
    row.epochs = config.epochs;
    row.lr = config.lr;
    row.batch_size = config.batch_size;
    row.train_mse = rec.final_train_mse;
    row.test_mse = rec.final_test_mse;
    row.diverged = rec.diverged;
    return row;
  };

  detail::run_pool_ordered(opt.workers, static_cast<std::int64_t>(todo.size()), run_one,
                           [&](ResultRow row) { store.append(row); });

  if (run_seconds)
    for (std::size_t j = 0; j < todo.size(); ++j) {
      const Task& task = tasks[static_cast<std::size_t>(todo[j])];
      (*run_seconds)[task_time_key(opt.experiment_id, row_latent, row_hidden, task.n_train,
                                   task.replicate)] = task_seconds[j];
    }

  ResultsTable table;
  table.reserve(tasks.size());
  for (const auto& task : tasks) {
    const RowKey key{opt.experiment_id, row_latent, row_hidden, task.n_train, task.replicate};
    const ResultRow* row = store.find(key);
    if (!row) throw std::runtime_error("sweep finished but a row is missing from the store");
    table.push_back(*row);
  }
  return table;
}

}  // namespace ddlab
