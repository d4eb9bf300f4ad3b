#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "ddlab/analysis.hpp"
#include "ddlab/config.hpp"
#include "ddlab/datagen.hpp"
#include "ddlab/nn.hpp"
#include "ddlab/render.hpp"
#include "ddlab/report.hpp"
#include "ddlab/results.hpp"
#include "ddlab/sweep.hpp"
#include "ddlab/trainer.hpp"
#include "ddlab/version.hpp"

namespace ddlab {

namespace detail {

inline std::int64_t default_workers() {
  if (const char* env = std::getenv("DDLAB_WORKERS")) {
    const auto v = parse_int(env);
    if (v < 1) throw std::runtime_error("DDLAB_WORKERS must be >= 1");
    return v;
  }
  const auto hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<std::int64_t>(hw);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Reads, patches and rewrites <dir>/metadata.json so that staged commands
// (and resumed reproduce runs) accumulate into one document.
template <typename Fn>
void update_metadata(const std::filesystem::path& dir, Fn&& patch) {
  const auto path = dir / "metadata.json";
  Json meta = std::filesystem::exists(path) ? read_json(path) : Json::object();
  meta["tool"] = kToolName;
  meta["version"] = kVersion;
  patch(meta);
  write_json(meta, path);
}

inline ResultsTable filter_experiment(const ResultsTable& table, const std::string& id) {
  ResultsTable out;
  for (const auto& row : table)
    if (row.experiment_id == id) out.push_back(row);
  if (out.empty()) throw std::runtime_error("no rows for experiment id " + id);
  return out;
}

// With no explicit id, pick the experiment that looks most like the wanted
// family: most distinct n_train values for a size sweep, most distinct
// (latent, hidden) cells for a grid.
inline std::string pick_experiment(const ResultsTable& table, bool want_size_sweep) {
  std::map<std::string, std::set<std::int64_t>> sizes;
  std::map<std::string, std::set<std::pair<std::int64_t, std::int64_t>>> cells;
  for (const auto& row : table) {
    sizes[row.experiment_id].insert(row.n_train);
    cells[row.experiment_id].insert({row.latent, row.hidden});
  }
  std::string best_id;
  std::size_t best = 0;
  if (want_size_sweep) {
    for (const auto& [id, s] : sizes)
      if (s.size() > best) best = s.size(), best_id = id;
  } else {
    for (const auto& [id, s] : cells)
      if (s.size() > best) best = s.size(), best_id = id;
  }
  if (best_id.empty()) throw std::runtime_error("results table is empty");
  return best_id;
}

inline void save_control_csv(const LossCurve& curve, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "n_train,mean_risk\n";
  for (const auto& p : curve.points)
    os << format_double(p.capacity) << ',' << format_double(p.loss) << '\n';
  if (!os) throw std::runtime_error("short write to " + path.string());
}

inline LossCurve load_control_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(is, line) || detail::trim(line) != "n_train,mean_risk")
    throw std::runtime_error("unexpected control csv header in " + path.string());
  LossCurve curve;
  curve.axis_label = "n_train";
  curve.name = "minnorm_regression";
  while (std::getline(is, line)) {
    if (detail::trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 2) throw std::runtime_error("bad control csv row: " + line);
    curve.points.push_back({parse_double(fields[0]), parse_double(fields[1])});
  }
  curve.validate();
  return curve;
}

// Builds the grid heatmap figure from a results table: seed-mean losses as
// log-nearest samples, optional peak loci overlays, log color scale whenever
// every value is positive.
inline void render_grid_heatmap(const ResultsTable& table, const std::string& metric,
                                const std::string& loci_mode, std::int64_t resolution,
                                const std::filesystem::path& path, const std::string& title) {
  std::vector<HeatmapSample> samples;
  std::set<std::int64_t> latents, n_trains;
  for (const auto& c : aggregate_cells(table)) {
    if (c.n_seeds == c.n_diverged) continue;
    const double v = metric == "train" ? c.mean_train_mse : c.mean_test_mse;
    samples.push_back({static_cast<double>(c.hidden), static_cast<double>(c.latent), v});
    latents.insert(c.latent);
    n_trains.insert(c.n_train);
  }
  if (samples.empty()) throw std::runtime_error("no usable cells to render");

  double x_min = samples.front().hidden, x_max = x_min;
  double y_min = samples.front().latent, y_max = y_min;
  bool positive = true;
  for (const auto& s : samples) {
    x_min = std::min(x_min, s.hidden);
    x_max = std::max(x_max, s.hidden);
    y_min = std::min(y_min, s.latent);
    y_max = std::max(y_max, s.latent);
    positive = positive && s.loss > 0.0;
  }
  if (x_min == x_max) x_min *= 0.5, x_max *= 2.0;
  if (y_min == y_max) y_min *= 0.5, y_max *= 2.0;

  const HeatmapRaster raster =
      nearest_log_heatmap(samples, resolution, resolution, x_min, x_max, y_min, y_max);

  std::vector<std::vector<LocusPoint>> loci;
  if (loci_mode != "none") {
    if (n_trains.size() != 1)
      throw std::runtime_error("peak loci need a grid with a single n_train");
    const std::int64_t n_train = *n_trains.begin();
    const std::int64_t n_features = table.front().n_features;
    const std::vector<std::int64_t> ls(latents.begin(), latents.end());
    if (loci_mode == "features" || loci_mode == "both")
      loci.push_back(peak_loci(n_features, n_train, OutDimAssumption::features, ls));
    if (loci_mode == "latent" || loci_mode == "both")
      loci.push_back(peak_loci(n_features, n_train, OutDimAssumption::latent, ls));
  }

  emit_heatmap(raster, loci, positive ? AxisScale::log : AxisScale::linear, path, title);
}

inline void render_size_sweep_figure(const ResultsTable& table, const std::filesystem::path& path) {
  LossCurve features = ratio_curve(table, table.front().n_features);
  features.name = "out_dim = n_features";
  LossCurve latent = ratio_curve(table, table.front().latent);
  latent.name = "out_dim = latent";
  emit_curve({features, latent}, AxisScale::log, AxisScale::log, {1.0}, path,
             "test MSE vs parameterization ratio", "test MSE");
}

inline void render_control_figure(const LossCurve& curve, std::int64_t n_features,
                                  const std::filesystem::path& path) {
  emit_curve({curve}, AxisScale::log, AxisScale::log, {static_cast<double>(n_features)}, path,
             "ridgeless regression positive control", "test risk");
}

}  // namespace detail

struct ReproduceConfig {
  std::string scale = "desk";
  std::filesystem::path out;
  std::uint64_t master_seed = 0;
  std::int64_t workers = 1;
  std::int64_t control_trials = 200;
};

// End-to-end pipeline: both sweeps, the positive control, analysis and all
// figures into one directory. Resumable through the results store; all
// value-bearing outputs (results.csv, report.json) are deterministic in
// (seed, scale) and independent of the worker count.
inline void run_reproduce(const ReproduceConfig& rc) {
  namespace fs = std::filesystem;
  fs::create_directories(rc.out);

  const bool desk = rc.scale == "desk";
  if (!desk && rc.scale != "full")
    throw std::runtime_error("unknown scale " + rc.scale + " (expected desk or full)");

  SweepGrid grid = desk ? desk_ae_grid() : default_ae_grid();
  const std::vector<std::int64_t> sizes = desk ? desk_linear_sizes() : full_linear_sizes();
  const std::int64_t linear_seeds = 3;

  ResultsStore store(rc.out / "results.csv");
  std::map<std::string, double> run_seconds;

  const auto ae_tasks =
      static_cast<std::int64_t>(grid.resolved_cells().size()) * grid.seeds_per_cell;
  std::cout << "[1/5] autoencoder grid: " << ae_tasks << " runs\n";
  auto t0 = std::chrono::steady_clock::now();
  SweepOptions ae_opt{"ae_grid", rc.master_seed, rc.workers, 0};
  const ResultsTable ae_table = run_ae_sweep(grid, ae_opt, store, &run_seconds);
  const double ae_seconds = detail::seconds_since(t0);

  const auto linear_tasks = static_cast<std::int64_t>(sizes.size()) * linear_seeds;
  std::cout << "[2/5] linear autoencoder size sweep: " << linear_tasks << " runs\n";
  t0 = std::chrono::steady_clock::now();
  SweepOptions linear_opt{"linear_ae", rc.master_seed, rc.workers, ae_tasks};
  const ResultsTable linear_table =
      run_linear_ae_sweep(sizes, default_linear_ae_data(), default_linear_ae_train(), linear_seeds,
                          linear_opt, store, &run_seconds);
  const double linear_seconds = detail::seconds_since(t0);

  std::cout << "[3/5] regression positive control\n";
  t0 = std::chrono::steady_clock::now();
  const LossCurve control = minnorm_regression_control(
      25, {5, 10, 15, 20, 24, 25, 26, 30, 40, 80, 200}, 0.5, rc.control_trials, rc.master_seed);
  detail::save_control_csv(control, rc.out / "control.csv");
  const double control_seconds = detail::seconds_since(t0);

  std::cout << "[4/5] analysis report\n";
  t0 = std::chrono::steady_clock::now();
  Json report = build_analysis_report(store.rows(), control);
  report["master_seed"] = rc.master_seed;
  report["scale"] = rc.scale;
  write_json(report, rc.out / "report.json");
  const double analyze_seconds = detail::seconds_since(t0);

  std::cout << "[5/5] figures\n";
  t0 = std::chrono::steady_clock::now();
  const std::int64_t resolution = 256;
  detail::render_grid_heatmap(ae_table, "test", "both", resolution, rc.out / "fig1.svg",
                              "test MSE across autoencoder widths");
  detail::render_grid_heatmap(ae_table, "train", "both", resolution, rc.out / "fig2.svg",
                              "train MSE across autoencoder widths");
  detail::render_size_sweep_figure(linear_table, rc.out / "fig3.svg");
  detail::render_control_figure(control, 25, rc.out / "control.svg");
  const double render_seconds = detail::seconds_since(t0);

  std::int64_t diverged = 0;
  for (const auto& row : store.rows()) diverged += row.diverged ? 1 : 0;

  detail::update_metadata(rc.out, [&](Json& meta) {
    meta["command"] = "reproduce";
    meta["scale"] = rc.scale;
    meta["master_seed"] = rc.master_seed;
    meta["workers"] = rc.workers;
    meta["diverged_runs"] = diverged;
    Json& stages = meta["stages"];
    stages["ae_sweep"] = ae_seconds;
    stages["linear_sweep"] = linear_seconds;
    stages["control"] = control_seconds;
    stages["analyze"] = analyze_seconds;
    stages["render"] = render_seconds;
    Json& rs = meta["run_seconds"];
    for (const auto& [key, secs] : run_seconds) rs[key] = secs;
  });

  if (diverged > 0) std::cout << "warning: " << diverged << " diverged runs recorded\n";
  std::cout << "done: " << (rc.out / "report.json").string() << "\n";
}

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"ddlab: a desk-scale laboratory probing double descent in autoencoders"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  try {
    // datagen
    auto* datagen = app.add_subcommand("datagen", "generate a synthetic dataset file");
    std::string dg_spec, dg_family = "ae", dg_out;
    std::uint64_t dg_seed = 0;
    datagen->add_option("--spec", dg_spec, "config file with a [data] section");
    datagen->add_option("--family", dg_family, "defaults family when no --spec")
        ->check(CLI::IsMember({"ae", "linear-ae"}));
    datagen->add_option("--out", dg_out, "output dataset file")->required();
    auto* dg_seed_opt = datagen->add_option("--seed", dg_seed, "data seed");
    datagen->callback([&] {
      DataSpec spec = dg_family == "linear-ae" ? default_linear_ae_data() : default_ae_data();
      if (!dg_spec.empty()) spec = data_spec_from_config(load_config(dg_spec), spec);
      if (dg_seed_opt->count() > 0) spec.seed = dg_seed;
      const Dataset ds = generate_dataset(spec);
      save_dataset(ds, dg_out);
      std::cout << "wrote " << dg_out << ": train " << ds.x_train.rows() << "x"
                << ds.x_train.cols() << ", test " << ds.x_test.rows() << "x" << ds.x_test.cols()
                << ", measured snr " << format_double(measure_snr(ds)) << "\n";
    });

    // train
    auto* train_cmd = app.add_subcommand("train", "train one autoencoder on a dataset file");
    std::string tr_data, tr_out;
    std::int64_t tr_latent = 20, tr_hidden = 200;
    bool tr_linear = false;
    std::uint64_t tr_init_seed = 0, tr_shuffle_seed = 0;
    double tr_lr = -1.0;
    std::int64_t tr_epochs = -1, tr_batch = -1, tr_eval_every = -1, tr_max_steps = -2;
    train_cmd->add_option("--data", tr_data, "dataset file from ddlab datagen")->required();
    train_cmd->add_option("--out", tr_out, "output directory")->required();
    train_cmd->add_option("--latent", tr_latent, "bottleneck width");
    train_cmd->add_option("--hidden", tr_hidden, "hidden width");
    train_cmd->add_flag("--linear", tr_linear, "use the fixed deep linear architecture");
    train_cmd->add_option("--init-seed", tr_init_seed, "parameter init seed");
    train_cmd->add_option("--shuffle-seed", tr_shuffle_seed, "epoch shuffling seed");
    train_cmd->add_option("--lr", tr_lr, "learning rate override");
    train_cmd->add_option("--epochs", tr_epochs, "epoch count override");
    train_cmd->add_option("--batch-size", tr_batch, "batch size override");
    train_cmd->add_option("--eval-every", tr_eval_every, "trace cadence in epochs (0 = off)");
    train_cmd->add_option("--max-steps", tr_max_steps, "step cap override (0 = uncapped)");
    train_cmd->callback([&] {
      const Dataset ds = load_dataset(tr_data);
      ArchSpec arch;
      TrainConfig config;
      if (tr_linear) {
        arch = linear_ae_arch();
        config = default_linear_ae_train();
      } else {
        arch = nonlinear_arch(ds.spec.n_features, tr_hidden, tr_latent);
        config = default_ae_train();
      }
      if (tr_lr >= 0.0) config.lr = tr_lr;
      if (tr_epochs >= 1) config.epochs = tr_epochs;
      if (tr_batch >= 1) config.batch_size = tr_batch;
      if (tr_eval_every >= 0) config.eval_every = tr_eval_every;
      if (tr_max_steps >= 0) config.max_steps = tr_max_steps;
      config.shuffle_seed = tr_shuffle_seed;

      std::filesystem::create_directories(tr_out);
      Model model;
      const RunRecord rec = train(ds, arch, config, tr_init_seed, &model);
      write_json(run_record_to_json(rec), std::filesystem::path(tr_out) / "run.json");
      save_model(model, std::filesystem::path(tr_out) / "model.bin");
      std::cout << "params " << rec.param_count << ", train mse "
                << format_double(rec.final_train_mse) << ", test mse "
                << format_double(rec.final_test_mse) << (rec.diverged ? " (diverged)" : "")
                << "\n";
    });

    // sweep ae | linear-ae
    auto* sweep_cmd = app.add_subcommand("sweep", "run an experiment family");
    sweep_cmd->require_subcommand(1);
    std::string sw_grid, sw_out, sw_id;
    std::string sw_sizes;
    std::int64_t sw_workers = detail::default_workers(), sw_seeds = -1;
    std::uint64_t sw_seed = 0;

    auto* sweep_ae = sweep_cmd->add_subcommand("ae", "latent x hidden grid of nonlinear AEs");
    sweep_ae->add_option("--grid", sw_grid, "grid config file (defaults to the full grid)");
    sweep_ae->add_option("--out", sw_out, "output directory")->required();
    sweep_ae->add_option("--workers", sw_workers, "worker threads");
    sweep_ae->add_option("--seeds", sw_seeds, "replicates per cell override");
    sweep_ae->add_option("--seed", sw_seed, "master seed");
    sweep_ae->add_option("--id", sw_id, "experiment id (default ae_grid)");
    sweep_ae->callback([&] {
      SweepGrid grid = sw_grid.empty() ? default_ae_grid() : sweep_grid_from_config(load_config(sw_grid));
      if (sw_seeds >= 1) grid.seeds_per_cell = sw_seeds;
      std::filesystem::create_directories(sw_out);
      ResultsStore store(std::filesystem::path(sw_out) / "results.csv");
      const auto t0 = std::chrono::steady_clock::now();
      SweepOptions opt{sw_id.empty() ? "ae_grid" : sw_id, sw_seed, sw_workers, 0};
      const ResultsTable table = run_ae_sweep(grid, opt, store);
      std::int64_t diverged = 0;
      for (const auto& row : table) diverged += row.diverged ? 1 : 0;
      detail::update_metadata(sw_out, [&](Json& meta) {
        meta["command"] = "sweep ae";
        meta["master_seed"] = sw_seed;
        meta["workers"] = sw_workers;
        Json& stages = meta["stages"];
        stages["ae_sweep"] = detail::seconds_since(t0);
      });
      std::cout << table.size() << " rows (" << diverged << " diverged) in "
                << (std::filesystem::path(sw_out) / "results.csv").string() << "\n";
    });

    auto* sweep_linear =
        sweep_cmd->add_subcommand("linear-ae", "dataset-size sweep of the fixed linear AE");
    sweep_linear->add_option("--sizes", sw_sizes, "n_train list or file (defaults to desk sizes)");
    sweep_linear->add_option("--out", sw_out, "output directory")->required();
    sweep_linear->add_option("--workers", sw_workers, "worker threads");
    sweep_linear->add_option("--seeds", sw_seeds, "replicates per size override");
    sweep_linear->add_option("--seed", sw_seed, "master seed");
    sweep_linear->add_option("--id", sw_id, "experiment id (default linear_ae)");
    sweep_linear->callback([&] {
      const std::vector<std::int64_t> sizes =
          sw_sizes.empty() ? desk_linear_sizes() : parse_sizes_arg(sw_sizes);
      std::filesystem::create_directories(sw_out);
      ResultsStore store(std::filesystem::path(sw_out) / "results.csv");
      const auto t0 = std::chrono::steady_clock::now();
      SweepOptions opt{sw_id.empty() ? "linear_ae" : sw_id, sw_seed, sw_workers, 0};
      const ResultsTable table =
          run_linear_ae_sweep(sizes, default_linear_ae_data(), default_linear_ae_train(),
                              sw_seeds >= 1 ? sw_seeds : 3, opt, store);
      std::int64_t diverged = 0;
      for (const auto& row : table) diverged += row.diverged ? 1 : 0;
      detail::update_metadata(sw_out, [&](Json& meta) {
        meta["command"] = "sweep linear-ae";
        meta["master_seed"] = sw_seed;
        meta["workers"] = sw_workers;
        Json& stages = meta["stages"];
        stages["linear_sweep"] = detail::seconds_since(t0);
      });
      std::cout << table.size() << " rows (" << diverged << " diverged) in "
                << (std::filesystem::path(sw_out) / "results.csv").string() << "\n";
    });

    // analyze
    auto* analyze = app.add_subcommand("analyze", "turn a results table into verdicts");
    std::string an_results, an_report, an_control;
    double an_threshold = 0.1, an_train_threshold = 1e-2;
    analyze->add_option("--results", an_results, "results.csv path")->required();
    analyze->add_option("--report", an_report, "output report json")->required();
    analyze->add_option("--control", an_control, "control csv to include");
    analyze->add_option("--threshold", an_threshold, "peak prominence threshold");
    analyze->add_option("--train-threshold", an_train_threshold, "interpolation train MSE bound");
    analyze->callback([&] {
      const ResultsTable table = load_results(an_results);
      std::optional<LossCurve> control;
      if (!an_control.empty()) control = detail::load_control_csv(an_control);
      const Json report = build_analysis_report(table, control, an_threshold, an_train_threshold);
      write_json(report, an_report);
      for (const auto& [id, exp] : report.at("experiments").items()) {
        if (exp.at("type") == "grid") {
          std::cout << id << ": latent slice "
                    << exp.at("slices").at("latent_slice").at("detector").at("classification")
                           .get<std::string>()
                    << ", hidden slice "
                    << exp.at("slices").at("hidden_slice").at("detector").at("classification")
                           .get<std::string>()
                    << "\n";
        } else {
          std::cout << id << ": peak "
                    << (exp.at("curves").at("ratio_features").at("detector").at("has_peak")
                                .get<bool>()
                            ? "found"
                            : "absent")
                    << " on the feature-output ratio curve\n";
        }
      }
      if (report.contains("control"))
        std::cout << "control: peak "
                  << (report.at("control").at("detector").at("has_peak").get<bool>() ? "found"
                                                                                     : "absent")
                  << "\n";
    });

    // control regression
    auto* control_cmd = app.add_subcommand("control", "positive controls");
    control_cmd->require_subcommand(1);
    auto* control_reg =
        control_cmd->add_subcommand("regression", "ridgeless regression risk vs dataset size");
    std::string ct_out, ct_sizes;
    std::int64_t ct_features = 25, ct_trials = 200;
    double ct_noise = 0.5;
    std::uint64_t ct_seed = 0;
    control_reg->add_option("--out", ct_out, "output csv")->required();
    control_reg->add_option("--n-features", ct_features, "regression dimension");
    control_reg->add_option("--noise-std", ct_noise, "label noise standard deviation");
    control_reg->add_option("--trials", ct_trials, "Monte Carlo trials per size");
    control_reg->add_option("--seed", ct_seed, "seed");
    control_reg->add_option("--sizes", ct_sizes, "n_train list or file");
    control_reg->callback([&] {
      const std::vector<std::int64_t> sizes =
          ct_sizes.empty() ? std::vector<std::int64_t>{5, 10, 15, 20, 24, 25, 26, 30, 40, 80, 200}
                           : parse_sizes_arg(ct_sizes);
      const LossCurve curve =
          minnorm_regression_control(ct_features, sizes, ct_noise, ct_trials, ct_seed);
      detail::save_control_csv(curve, ct_out);
      const PeakReport det = analyze_curve(curve);
      std::cout << "wrote " << ct_out << "; peak " << (det.has_peak ? "found" : "absent");
      if (det.peak_index)
        std::cout << " at n_train " << format_double(curve.points[*det.peak_index].capacity);
      std::cout << "\n";
    });

    // render heatmap | curve
    auto* render_cmd = app.add_subcommand("render", "emit SVG figures from results");
    render_cmd->require_subcommand(1);
    std::string rd_results, rd_out, rd_id, rd_metric = "test", rd_loci = "both", rd_x = "ratio";
    std::string rd_out_dim = "features", rd_y = "log";
    std::int64_t rd_resolution = 256;

    auto* render_heatmap = render_cmd->add_subcommand("heatmap", "log-nearest loss heatmap");
    render_heatmap->add_option("--results", rd_results, "results.csv path")->required();
    render_heatmap->add_option("--metric", rd_metric, "loss to color")
        ->check(CLI::IsMember({"test", "train"}));
    render_heatmap->add_option("--loci", rd_loci, "predicted-peak overlays")
        ->check(CLI::IsMember({"features", "latent", "both", "none"}));
    render_heatmap->add_option("--out", rd_out, "output svg")->required();
    render_heatmap->add_option("--id", rd_id, "experiment id (default: auto)");
    render_heatmap->add_option("--resolution", rd_resolution, "raster cells per axis");
    render_heatmap->callback([&] {
      const ResultsTable all = load_results(rd_results);
      const std::string id = rd_id.empty() ? detail::pick_experiment(all, false) : rd_id;
      const ResultsTable table = detail::filter_experiment(all, id);
      detail::render_grid_heatmap(table, rd_metric, rd_loci, rd_resolution, rd_out,
                                  id + " " + rd_metric + " MSE");
      std::cout << "wrote " << rd_out << "\n";
    });

    auto* render_curve = render_cmd->add_subcommand("curve", "loss curve figure");
    render_curve->add_option("--results", rd_results, "results.csv path")->required();
    render_curve->add_option("--x", rd_x, "x axis")
        ->check(CLI::IsMember({"ratio", "n_train", "latent", "hidden"}));
    render_curve->add_option("--out", rd_out, "output svg")->required();
    render_curve->add_option("--id", rd_id, "experiment id (default: auto)");
    render_curve->add_option("--out-dim", rd_out_dim, "ratio out-dim assumption")
        ->check(CLI::IsMember({"features", "latent"}));
    render_curve->add_option("--y", rd_y, "y axis scale")->check(CLI::IsMember({"log", "linear"}));
    render_curve->callback([&] {
      const ResultsTable all = load_results(rd_results);
      const bool size_axis = rd_x == "ratio" || rd_x == "n_train";
      const std::string id = rd_id.empty() ? detail::pick_experiment(all, size_axis) : rd_id;
      const ResultsTable table = detail::filter_experiment(all, id);
      LossCurve curve;
      std::vector<double> markers;
      if (rd_x == "ratio") {
        const std::int64_t out_dim =
            rd_out_dim == "features" ? table.front().n_features : table.front().latent;
        curve = ratio_curve(table, out_dim);
        markers.push_back(1.0);
      } else {
        std::vector<CurvePoint> pts;
        const auto cells = aggregate_cells(table);
        if (rd_x == "n_train") {
          for (const auto& c : cells)
            if (c.n_diverged < c.n_seeds)
              pts.push_back({static_cast<double>(c.n_train), c.mean_test_mse});
        } else {
          const AeSliceReports slices = classify_ae_slices(table);
          pts = rd_x == "latent" ? slices.latent_slice.curve.points
                                 : slices.hidden_slice.curve.points;
        }
        std::sort(pts.begin(), pts.end(),
                  [](const CurvePoint& a, const CurvePoint& b) { return a.capacity < b.capacity; });
        curve.points = std::move(pts);
        curve.axis_label = rd_x;
        curve.name = "test_mse";
        curve.validate();
      }
      emit_curve({curve}, AxisScale::log, rd_y == "log" ? AxisScale::log : AxisScale::linear,
                 markers, rd_out, id);
      std::cout << "wrote " << rd_out << "\n";
    });

    // reproduce
    auto* reproduce = app.add_subcommand("reproduce", "run the full pipeline into one directory");
    ReproduceConfig rc;
    rc.workers = detail::default_workers();
    std::string rp_out;
    reproduce->add_option("--scale", rc.scale, "desk or full")
        ->check(CLI::IsMember({"desk", "full"}));
    reproduce->add_option("--out", rp_out, "output directory")->required();
    reproduce->add_option("--seed", rc.master_seed, "master seed");
    reproduce->add_option("--workers", rc.workers, "worker threads");
    reproduce->callback([&] {
      rc.out = rp_out;
      run_reproduce(rc);
    });

    // config print-defaults
    auto* config_cmd = app.add_subcommand("config", "configuration helpers");
    config_cmd->require_subcommand(1);
    auto* print_defaults = config_cmd->add_subcommand("print-defaults", "emit default config text");
    std::string cf_family = "ae";
    print_defaults->add_option("--family", cf_family, "ae or linear-ae")
        ->check(CLI::IsMember({"ae", "linear-ae"}));
    print_defaults->callback([&] { print_default_config(std::cout, cf_family); });

    app.parse(argc, argv);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ddlab
