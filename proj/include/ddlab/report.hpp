#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddlab/analysis.hpp"
#include "ddlab/results.hpp"
#include "ddlab/trainer.hpp"
#include "ddlab/version.hpp"

namespace ddlab {

using Json = nlohmann::json;

inline Json curve_to_json(const LossCurve& curve) {
  Json points = Json::array();
  for (const auto& p : curve.points) points.push_back({{"capacity", p.capacity}, {"loss", p.loss}});
  return {{"axis", curve.axis_label}, {"name", curve.name}, {"points", points}};
}

inline LossCurve curve_from_json(const Json& j) {
  LossCurve curve;
  curve.axis_label = j.at("axis").get<std::string>();
  curve.name = j.at("name").get<std::string>();
  for (const auto& p : j.at("points"))
    curve.points.push_back({p.at("capacity").get<double>(), p.at("loss").get<double>()});
  curve.validate();
  return curve;
}

inline Json peak_report_to_json(const PeakReport& r) {
  Json j{{"has_peak", r.has_peak},
         {"prominence_fraction", r.prominence_fraction},
         {"classification", to_string(r.classification)}};
  if (r.peak_index)
    j["peak_index"] = static_cast<std::int64_t>(*r.peak_index);
  else
    j["peak_index"] = nullptr;
  return j;
}

inline Json slice_report_to_json(const SliceReport& s) {
  return {{"fixed_value", s.fixed_value},
          {"argmin_capacity", s.argmin_capacity},
          {"curve", curve_to_json(s.curve)},
          {"detector", peak_report_to_json(s.report)}};
}

inline Json cells_to_json(const std::vector<CellStats>& cells) {
  Json out = Json::array();
  for (const auto& c : cells) {
    Json j{{"latent", c.latent},
           {"hidden", c.hidden},
           {"n_train", c.n_train},
           {"param_count", c.param_count},
           {"n_seeds", c.n_seeds},
           {"n_diverged", c.n_diverged}};
    if (c.n_diverged < c.n_seeds) {
      j["mean_train_mse"] = c.mean_train_mse;
      j["min_train_mse"] = c.min_train_mse;
      j["max_train_mse"] = c.max_train_mse;
      j["mean_test_mse"] = c.mean_test_mse;
      j["min_test_mse"] = c.min_test_mse;
      j["max_test_mse"] = c.max_test_mse;
    }
    out.push_back(std::move(j));
  }
  return out;
}

inline Json run_record_to_json(const RunRecord& r) {
  Json arch{{"n_features", r.arch.n_features},
            {"encoder_hidden", r.arch.encoder_hidden},
            {"latent", r.arch.latent},
            {"decoder_hidden", r.arch.decoder_hidden},
            {"activation", to_string(r.arch.activation)}};
  Json data{{"latent_dim", r.data_spec.latent_dim},
            {"n_features", r.data_spec.n_features},
            {"n_train", r.data_spec.n_train},
            {"n_test", r.data_spec.n_test},
            {"snr", r.data_spec.snr},
            {"seed", r.data_spec.seed}};
  Json train{{"lr", r.train_config.lr},
             {"epochs", r.train_config.epochs},
             {"batch_size", r.train_config.batch_size},
             {"eval_every", r.train_config.eval_every},
             {"max_steps", r.train_config.max_steps}};
  Json trace = Json::array();
  for (const auto& t : r.trace)
    trace.push_back({{"epoch", t.epoch}, {"train_mse", t.train_mse}, {"test_mse", t.test_mse}});
  return {{"arch", arch},
          {"data_spec", data},
          {"train_config", train},
          {"seeds", {{"data", r.data_seed}, {"init", r.init_seed}, {"shuffle", r.shuffle_seed}}},
          {"param_count", r.param_count},
          {"final_train_mse", r.final_train_mse},
          {"final_test_mse", r.final_test_mse},
          {"trace", trace},
          {"wall_time", r.wall_time},
          {"diverged", r.diverged},
          {"total_steps", r.total_steps},
          {"step_capped", r.step_capped}};
}

inline Json loci_to_json(const std::vector<LocusPoint>& loci) {
  Json out = Json::array();
  for (const auto& p : loci) out.push_back({{"latent", p.latent}, {"hidden", p.hidden}});
  return out;
}

inline Json interpolation_to_json(const InterpolationMap& m) {
  Json cells = Json::array();
  for (const auto& c : m.cells)
    cells.push_back({{"latent", c.latent},
                     {"hidden", c.hidden},
                     {"mean_train_mse", c.mean_train_mse},
                     {"interpolating", c.interpolating}});
  Json boundary = Json::array();
  for (const auto& [l, h] : m.boundary) boundary.push_back({{"latent", l}, {"hidden", h}});
  return {{"threshold", m.threshold}, {"cells", cells}, {"boundary", boundary}};
}

// The verdict document: per-experiment slices, detector reports, and the
// positive control, everything the acceptance checks read. Built purely from
// the results table (plus the control curve), so its bytes are reproducible.
inline Json build_analysis_report(const ResultsTable& table,
                                  const std::optional<LossCurve>& control_curve,
                                  double threshold = 0.1, double train_threshold = 1e-2) {
  Json experiments = Json::object();
  std::map<std::string, ResultsTable> by_experiment;
  for (const auto& row : table) by_experiment[row.experiment_id].push_back(row);

  std::int64_t diverged = 0;
  for (const auto& row : table) diverged += row.diverged ? 1 : 0;

  for (const auto& [id, rows] : by_experiment) {
    std::set<std::int64_t> n_trains, latents;
    for (const auto& r : rows) {
      n_trains.insert(r.n_train);
      latents.insert(r.latent);
    }
    Json exp;
    exp["rows"] = static_cast<std::int64_t>(rows.size());
    exp["cells"] = cells_to_json(aggregate_cells(rows));
    if (n_trains.size() > 1) {
      // Size sweep of a fixed architecture: ratio curves under both
      // output-dimension readings.
      exp["type"] = "size_sweep";
      const std::int64_t params = rows.front().param_count;
      exp["param_count"] = params;
      const std::int64_t out_features = rows.front().n_features;
      const std::int64_t out_latent = rows.front().latent;
      Json curves = Json::object();
      for (const auto& [key, out_dim] :
           std::vector<std::pair<std::string, std::int64_t>>{{"ratio_features", out_features},
                                                             {"ratio_latent", out_latent}}) {
        const LossCurve curve = ratio_curve(rows, out_dim);
        curves[key] = {{"out_dim", out_dim},
                       {"curve", curve_to_json(curve)},
                       {"detector", peak_report_to_json(analyze_curve(curve, threshold))}};
      }
      exp["curves"] = curves;
    } else {
      exp["type"] = "grid";
      const AeSliceReports slices = classify_ae_slices(rows, threshold);
      exp["slices"] = {{"latent_slice", slice_report_to_json(slices.latent_slice)},
                       {"hidden_slice", slice_report_to_json(slices.hidden_slice)}};
      exp["interpolation"] = interpolation_to_json(interpolation_boundary(rows, train_threshold));
      const std::int64_t n_train = rows.front().n_train;
      const std::int64_t n_features = rows.front().n_features;
      const std::vector<std::int64_t> latent_values(latents.begin(), latents.end());
      exp["loci"] = {
          {"features",
           loci_to_json(peak_loci(n_features, n_train, OutDimAssumption::features, latent_values))},
          {"latent",
           loci_to_json(peak_loci(n_features, n_train, OutDimAssumption::latent, latent_values))}};
    }
    experiments[id] = std::move(exp);
  }

  Json report{{"version", kVersion},
              {"detector_threshold", threshold},
              {"interpolation_train_threshold", train_threshold},
              {"experiments", experiments},
              {"warnings", {{"diverged_runs", diverged}}}};
  if (control_curve) {
    const PeakReport det = analyze_curve(*control_curve, threshold);
    Json control{{"curve", curve_to_json(*control_curve)},
                 {"detector", peak_report_to_json(det)}};
    control["peak_capacity"] =
        det.peak_index ? Json(control_curve->points[*det.peak_index].capacity) : Json(nullptr);
    report["control"] = std::move(control);
  }
  return report;
}

inline void write_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error("short write to " + path.string());
}

inline Json read_json(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return Json::parse(is);
}

}  // namespace ddlab
