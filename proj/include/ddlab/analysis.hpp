#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddlab/common.hpp"
#include "ddlab/results.hpp"
#include "ddlab/rng.hpp"
#include "ddlab/sweep.hpp"

namespace ddlab {

struct CurvePoint {
  double capacity = 0.0;
  double loss = 0.0;
};

struct LossCurve {
  std::vector<CurvePoint> points;
  std::string axis_label;  // latent, hidden, n_train or ratio
  std::string name;

  void validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!std::isfinite(points[i].loss)) throw std::invalid_argument("LossCurve: non-finite loss");
      if (i > 0 && !(points[i].capacity > points[i - 1].capacity))
        throw std::invalid_argument("LossCurve: capacities must be strictly increasing");
    }
  }
};

enum class CurveClass : std::uint8_t {
  u_shape,
  monotone_decreasing,
  monotone_increasing,
  double_descent,
  irregular
};

inline std::string to_string(CurveClass c) {
  switch (c) {
    case CurveClass::u_shape: return "u_shape";
    case CurveClass::monotone_decreasing: return "monotone_decreasing";
    case CurveClass::monotone_increasing: return "monotone_increasing";
    case CurveClass::double_descent: return "double_descent";
    case CurveClass::irregular: return "irregular";
  }
  return "irregular";
}

struct PeakReport {
  bool has_peak = false;
  std::optional<std::size_t> peak_index;
  double prominence_fraction = 0.0;
  CurveClass classification = CurveClass::irregular;
};

// 3-point moving average with truncated end windows; capacities unchanged.
inline LossCurve smooth_curve(const LossCurve& curve) {
  LossCurve out = curve;
  const auto n = curve.points.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = std::min(n - 1, i + 1);
    double sum = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) sum += curve.points[j].loss;
    out.points[i].loss = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

// Peak rule: a candidate is an interior local maximum; its flanking minima
// are the lowest losses between it and the nearest strictly higher point on
// each side (or the curve end); prominence is the candidate's height above
// the HIGHER flanking minimum, normalized by the curve range. A candidate
// qualifies when its prominence reaches the threshold and the loss descends
// again after it, below the left flanking minimum (that re-descent is what
// separates double descent from a plain terminal upswing). has_peak reports
// whether any candidate qualifies; prominence_fraction is the qualifying
// maximum, or the best candidate's value when none qualifies.
inline PeakReport detect_interpolation_peak(const LossCurve& curve, double threshold) {
  if (curve.points.size() < 4)
    throw std::invalid_argument("detect_interpolation_peak: need at least 4 points");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("detect_interpolation_peak: threshold must be in (0,1)");
  curve.validate();

  const auto n = curve.points.size();
  std::vector<double> loss(n);
  for (std::size_t i = 0; i < n; ++i) loss[i] = curve.points[i].loss;
  const double lo = *std::min_element(loss.begin(), loss.end());
  const double hi = *std::max_element(loss.begin(), loss.end());
  const double range = hi - lo;

  PeakReport report;
  report.prominence_fraction = 0.0;

  double best_any = 0.0;
  double best_qualifying = -1.0;
  std::size_t best_qualifying_index = 0;
  if (range > 0.0) {
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (!(loss[i] >= loss[i - 1] && loss[i] >= loss[i + 1])) continue;
      double left_min = loss[i - 1];
      for (std::size_t j = i; j-- > 0;) {
        if (loss[j] > loss[i]) break;
        left_min = std::min(left_min, loss[j]);
      }
      double right_min = loss[i + 1];
      for (std::size_t j = i + 1; j < n; ++j) {
        if (loss[j] > loss[i]) break;
        right_min = std::min(right_min, loss[j]);
      }
      const double prominence = (loss[i] - std::max(left_min, right_min)) / range;
      best_any = std::max(best_any, prominence);
      double suffix_min = loss[i + 1];
      for (std::size_t j = i + 1; j < n; ++j) suffix_min = std::min(suffix_min, loss[j]);
      const bool redescends = suffix_min < left_min;
      if (prominence >= threshold && redescends && prominence > best_qualifying) {
        best_qualifying = prominence;
        best_qualifying_index = i;
      }
    }
  }

  if (best_qualifying >= 0.0) {
    report.has_peak = true;
    report.peak_index = best_qualifying_index;
    report.prominence_fraction = best_qualifying;
    report.classification = CurveClass::double_descent;
    return report;
  }
  report.prominence_fraction = best_any;

  // Shape classification with adjacent moves within 5% of range treated as
  // noise.
  const double tol = 0.05 * range;
  const auto non_increasing = [&](std::size_t a, std::size_t b) {
    for (std::size_t i = a; i < b; ++i)
      if (loss[i + 1] - loss[i] > tol) return false;
    return true;
  };
  const auto non_decreasing = [&](std::size_t a, std::size_t b) {
    for (std::size_t i = a; i < b; ++i)
      if (loss[i] - loss[i + 1] > tol) return false;
    return true;
  };
  if (non_increasing(0, n - 1))
    report.classification = CurveClass::monotone_decreasing;
  else if (non_decreasing(0, n - 1))
    report.classification = CurveClass::monotone_increasing;
  else {
    const std::size_t m = static_cast<std::size_t>(
        std::min_element(loss.begin(), loss.end()) - loss.begin());
    const bool u = m > 0 && m + 1 < n && non_increasing(0, m) && non_decreasing(m, n - 1) &&
                   loss[0] - loss[m] > tol && loss[n - 1] - loss[m] > tol;
    report.classification = u ? CurveClass::u_shape : CurveClass::irregular;
  }
  return report;
}

// The analysis pipeline's single entry point: smooth, then detect. Both the
// autoencoder verdicts and the regression positive control go through here,
// so one code path produces the two opposite verdicts.
inline PeakReport analyze_curve(const LossCurve& curve, double threshold = 0.1) {
  return detect_interpolation_peak(smooth_curve(curve), threshold);
}

// One 1-D slice of the grid: the raw seed-mean curve plus the smoothed
// detector verdict on it.
struct SliceReport {
  std::int64_t fixed_value = 0;  // the held-fixed width
  LossCurve curve;               // raw seed-mean test MSE
  PeakReport report;
  double argmin_capacity = 0.0;  // from the raw curve
};

struct AeSliceReports {
  SliceReport latent_slice;  // test MSE vs latent at fixed hidden
  SliceReport hidden_slice;  // test MSE vs hidden at fixed latent
};

namespace detail {

inline SliceReport build_slice(std::vector<CurvePoint> points, std::int64_t fixed_value,
                               const std::string& axis, double threshold) {
  std::sort(points.begin(), points.end(),
            [](const CurvePoint& a, const CurvePoint& b) { return a.capacity < b.capacity; });
  SliceReport slice;
  slice.fixed_value = fixed_value;
  slice.curve.points = std::move(points);
  slice.curve.axis_label = axis;
  slice.curve.name = axis + "_slice";
  if (slice.curve.points.size() < 4)
    throw std::runtime_error("grid has no " + axis + " slice of at least 4 cells");
  slice.curve.validate();
  slice.report = analyze_curve(slice.curve, threshold);
  std::size_t argmin = 0;
  for (std::size_t i = 1; i < slice.curve.points.size(); ++i)
    if (slice.curve.points[i].loss < slice.curve.points[argmin].loss) argmin = i;
  slice.argmin_capacity = slice.curve.points[argmin].capacity;
  return slice;
}

}  // namespace detail

// Extracts the two 1-D slices of an AE grid table: test MSE vs latent at the
// hidden width covering the most latents, and vs hidden at the latent width
// covering the most hiddens (ties to the smaller width). Seed means exclude
// diverged replicates; cells with no surviving replicate are dropped.
inline AeSliceReports classify_ae_slices(const ResultsTable& table, double threshold = 0.1) {
  const auto cells = aggregate_cells(table);
  std::map<std::int64_t, std::set<std::int64_t>> latents_by_hidden, hiddens_by_latent;
  for (const auto& c : cells) {
    if (c.n_seeds == c.n_diverged) continue;
    latents_by_hidden[c.hidden].insert(c.latent);
    hiddens_by_latent[c.latent].insert(c.hidden);
  }
  if (latents_by_hidden.empty()) throw std::runtime_error("table has no usable cells");

  std::int64_t slice_hidden = 0, slice_latent = 0;
  std::size_t best = 0;
  for (const auto& [h, ls] : latents_by_hidden)
    if (ls.size() > best) best = ls.size(), slice_hidden = h;
  best = 0;
  for (const auto& [l, hs] : hiddens_by_latent)
    if (hs.size() > best) best = hs.size(), slice_latent = l;

  std::vector<CurvePoint> latent_points, hidden_points;
  for (const auto& c : cells) {
    if (c.n_seeds == c.n_diverged) continue;
    if (c.hidden == slice_hidden)
      latent_points.push_back({static_cast<double>(c.latent), c.mean_test_mse});
    if (c.latent == slice_latent)
      hidden_points.push_back({static_cast<double>(c.hidden), c.mean_test_mse});
  }
  AeSliceReports out;
  out.latent_slice = detail::build_slice(std::move(latent_points), slice_hidden, "latent",
                                         threshold);
  out.hidden_slice = detail::build_slice(std::move(hidden_points), slice_latent, "hidden",
                                         threshold);
  return out;
}

struct InterpolationCell {
  std::int64_t latent = 0;
  std::int64_t hidden = 0;
  double mean_train_mse = 0.0;
  bool interpolating = false;
};

struct InterpolationMap {
  double threshold = 0.0;
  std::vector<InterpolationCell> cells;                     // sorted by (latent, hidden)
  std::vector<std::pair<std::int64_t, std::int64_t>> boundary;  // interpolating cells with a
                                                                // non-interpolating neighbor
};

// Marks cells whose seed-mean train MSE is below the threshold as
// interpolating. Neighbors are the nearest present cells along each grid
// axis; the boundary is the set of interpolating cells touching a
// non-interpolating one.
inline InterpolationMap interpolation_boundary(const ResultsTable& table, double train_threshold) {
  InterpolationMap out;
  out.threshold = train_threshold;
  std::map<std::pair<std::int64_t, std::int64_t>, bool> interp;
  for (const auto& c : aggregate_cells(table)) {
    if (c.n_seeds == c.n_diverged) continue;
    out.cells.push_back({c.latent, c.hidden, c.mean_train_mse,
                         c.mean_train_mse < train_threshold});
    interp[{c.latent, c.hidden}] = out.cells.back().interpolating;
  }
  std::sort(out.cells.begin(), out.cells.end(), [](const auto& a, const auto& b) {
    return std::tie(a.latent, a.hidden) < std::tie(b.latent, b.hidden);
  });

  std::set<std::int64_t> latents, hiddens;
  for (const auto& c : out.cells) latents.insert(c.latent), hiddens.insert(c.hidden);
  const auto neighbors = [](const std::set<std::int64_t>& axis, std::int64_t v) {
    std::vector<std::int64_t> out_v;
    auto it = axis.find(v);
    if (it != axis.begin()) out_v.push_back(*std::prev(it));
    if (std::next(it) != axis.end()) out_v.push_back(*std::next(it));
    return out_v;
  };
  for (const auto& c : out.cells) {
    if (!c.interpolating) continue;
    bool on_boundary = false;
    for (auto l : neighbors(latents, c.latent)) {
      const auto it = interp.find({l, c.hidden});
      if (it != interp.end() && !it->second) on_boundary = true;
    }
    for (auto h : neighbors(hiddens, c.hidden)) {
      const auto it = interp.find({c.latent, h});
      if (it != interp.end() && !it->second) on_boundary = true;
    }
    if (on_boundary) out.boundary.emplace_back(c.latent, c.hidden);
  }
  return out;
}

enum class OutDimAssumption : std::uint8_t { features, latent };

struct LocusPoint {
  std::int64_t latent = 0;
  double hidden = 0.0;
};

// Where the interpolation peak would sit for the symmetric AE family: solve
// param_count(h, l) = n_train * out_dim for h, per latent value. Latents with
// no positive solution are omitted.
inline std::vector<LocusPoint> peak_loci(std::int64_t n_features, std::int64_t n_train,
                                         OutDimAssumption assumption,
                                         const std::vector<std::int64_t>& latent_values) {
  if (n_features < 1 || n_train < 1)
    throw std::invalid_argument("peak_loci: n_features and n_train must be positive");
  std::vector<LocusPoint> out;
  for (const auto l : latent_values) {
    if (l < 1) throw std::invalid_argument("peak_loci: latent values must be positive");
    const double o =
        assumption == OutDimAssumption::features ? static_cast<double>(n_features)
                                                 : static_cast<double>(l);
    const double numerator = static_cast<double>(n_train) * o - static_cast<double>(l) -
                             static_cast<double>(n_features);
    const double denominator = static_cast<double>(2 * n_features + 2 * l + 2);
    const double h = numerator / denominator;
    if (h > 0.0) out.push_back({l, h});
  }
  return out;
}

// Supervised positive control: ridgeless (minimum-norm) least squares on
// y = X beta + noise, whose fresh-sample risk ||betahat - beta||^2 +
// noise_std^2 is exact for standard normal covariates. The risk diverges at
// n_train = n_features, giving the detector a true peak to find.
inline LossCurve minnorm_regression_control(std::int64_t n_features,
                                            const std::vector<std::int64_t>& n_train_values,
                                            double noise_std, std::int64_t trials,
                                            std::uint64_t seed) {
  if (n_features < 1) throw std::invalid_argument("control: n_features must be >= 1");
  if (trials < 1) throw std::invalid_argument("control: trials must be >= 1");
  if (!(noise_std >= 0.0)) throw std::invalid_argument("control: noise_std must be >= 0");
  if (n_train_values.empty()) throw std::invalid_argument("control: no n_train values");
  for (std::size_t i = 0; i < n_train_values.size(); ++i) {
    if (n_train_values[i] < 1) throw std::invalid_argument("control: n_train must be >= 1");
    if (i > 0 && n_train_values[i] <= n_train_values[i - 1])
      throw std::invalid_argument("control: n_train values must be strictly increasing");
  }

  LossCurve curve;
  curve.axis_label = "n_train";
  curve.name = "minnorm_regression";
  for (std::size_t si = 0; si < n_train_values.size(); ++si) {
    const auto N = n_train_values[si];
    double risk_sum = 0.0;
    for (std::int64_t t = 0; t < trials; ++t) {
      // Per-trial stream, so results do not depend on evaluation order.
      Rng rng(seed + 100003u * static_cast<std::uint64_t>(si) + static_cast<std::uint64_t>(t));
      Vector beta(n_features);
      for (std::int64_t k = 0; k < n_features; ++k) beta[k] = rng.gaussian();
      Matrix x(N, n_features);
      for (std::int64_t r = 0; r < N; ++r)
        for (std::int64_t c = 0; c < n_features; ++c) x(r, c) = rng.gaussian();
      Vector y = x * beta;
      for (std::int64_t r = 0; r < N; ++r) y[r] += noise_std * rng.gaussian();
      const Vector beta_hat = x.completeOrthogonalDecomposition().solve(y);
      risk_sum += (beta_hat - beta).squaredNorm() + noise_std * noise_std;
    }
    curve.points.push_back({static_cast<double>(N), risk_sum / static_cast<double>(trials)});
  }
  return curve;
}

// Seed-mean test MSE of a size sweep against the parameterization ratio
// (ascending, so descending in n_train).
inline LossCurve ratio_curve(const ResultsTable& table, std::int64_t out_dim) {
  const auto cells = aggregate_cells(table);
  LossCurve curve;
  curve.axis_label = "ratio";
  curve.name = "test_mse_vs_ratio";
  std::vector<CurvePoint> pts;
  for (const auto& c : cells) {
    if (c.n_seeds == c.n_diverged) continue;
    pts.push_back({parameterization_ratio(c.param_count, c.n_train, out_dim), c.mean_test_mse});
  }
  std::sort(pts.begin(), pts.end(),
            [](const CurvePoint& a, const CurvePoint& b) { return a.capacity < b.capacity; });
  curve.points = std::move(pts);
  curve.validate();
  return curve;
}

}  // namespace ddlab
