#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ddlab/analysis.hpp"
#include "ddlab/common.hpp"

namespace ddlab {

enum class AxisScale : std::uint8_t { linear, log };

namespace detail {

// Fixed 2-decimal formatting keeps SVG output byte-stable.
inline std::string fmt_fixed2(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 2);
  std::string s(buf, res.ptr);
  if (s == "-0.00") return "0.00";
  return s;
}

inline double axis_position(double v, double lo, double hi, AxisScale scale) {
  if (scale == AxisScale::log) {
    v = std::log(v);
    lo = std::log(lo);
    hi = std::log(hi);
  }
  if (hi == lo) return 0.5;
  return (v - lo) / (hi - lo);
}

}  // namespace detail

// Position of a loss value on the color ramp, clamped to [0,1].
inline double color_ramp_position(double v, double vmin, double vmax, AxisScale scale) {
  if (scale == AxisScale::log) {
    if (!(v > 0.0 && vmin > 0.0 && vmax > 0.0))
      throw std::invalid_argument("log color scale needs positive losses");
    v = std::log10(v);
    vmin = std::log10(vmin);
    vmax = std::log10(vmax);
  }
  if (vmax == vmin) return 0.5;
  return std::clamp((v - vmin) / (vmax - vmin), 0.0, 1.0);
}

// Perceptually uniform dark-violet-to-yellow ramp (viridis anchor points,
// linearly interpolated).
inline std::string ramp_color(double t) {
  static constexpr std::array<std::array<double, 3>, 9> anchors{{{68, 1, 84},
                                                                 {71, 44, 122},
                                                                 {59, 81, 139},
                                                                 {44, 113, 142},
                                                                 {33, 144, 141},
                                                                 {39, 173, 129},
                                                                 {92, 200, 99},
                                                                 {170, 220, 50},
                                                                 {253, 231, 37}}};
  t = std::clamp(t, 0.0, 1.0);
  const double pos = t * (anchors.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(pos), anchors.size() - 2);
  const double f = pos - static_cast<double>(i);
  std::string out = "#";
  for (int c = 0; c < 3; ++c) {
    const auto v = static_cast<int>(std::lround(anchors[i][c] * (1.0 - f) + anchors[i + 1][c] * f));
    constexpr char digits[] = "0123456789abcdef";
    out += digits[(v >> 4) & 0xf];
    out += digits[v & 0xf];
  }
  return out;
}

struct HeatmapSample {
  double hidden = 0.0;  // x axis
  double latent = 0.0;  // y axis
  double loss = 0.0;
};

struct HeatmapRaster {
  std::int64_t width = 0, height = 0;
  double x_min = 0.0, x_max = 0.0;  // hidden range
  double y_min = 0.0, y_max = 0.0;  // latent range
  std::vector<double> values;       // row-major, row 0 at y_min
  std::vector<HeatmapSample> samples;

  double at(std::int64_t row, std::int64_t col) const {
    return values[static_cast<std::size_t>(row * width + col)];
  }
};

// Assigns each cell the loss of the sample nearest in squared log distance,
// ties to the first sample in input order. Log distance keeps the assignment
// faithful on log-scaled axes, where 100 is closer to 1000 than it is to 1.
inline HeatmapRaster nearest_log_heatmap(const std::vector<HeatmapSample>& samples,
                                         std::int64_t width, std::int64_t height, double x_min,
                                         double x_max, double y_min, double y_max) {
  if (samples.empty()) throw std::invalid_argument("nearest_log_heatmap: no samples");
  if (width < 1 || height < 1) throw std::invalid_argument("nearest_log_heatmap: bad resolution");
  if (!(x_min > 0.0 && x_max >= x_min && y_min > 0.0 && y_max >= y_min))
    throw std::invalid_argument("nearest_log_heatmap: ranges must be positive and ordered");

  std::vector<double> lx(samples.size()), ly(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!(samples[i].hidden > 0.0 && samples[i].latent > 0.0))
      throw std::invalid_argument("nearest_log_heatmap: coordinates must be positive");
    lx[i] = std::log(samples[i].hidden);
    ly[i] = std::log(samples[i].latent);
  }

  HeatmapRaster raster;
  raster.width = width;
  raster.height = height;
  raster.x_min = x_min;
  raster.x_max = x_max;
  raster.y_min = y_min;
  raster.y_max = y_max;
  raster.samples = samples;
  raster.values.resize(static_cast<std::size_t>(width * height));

  const double lx0 = std::log(x_min), lx1 = std::log(x_max);
  const double ly0 = std::log(y_min), ly1 = std::log(y_max);
  for (std::int64_t r = 0; r < height; ++r) {
    const double cy = ly0 + (static_cast<double>(r) + 0.5) / static_cast<double>(height) *
                                (ly1 - ly0);
    for (std::int64_t c = 0; c < width; ++c) {
      const double cx = lx0 + (static_cast<double>(c) + 0.5) / static_cast<double>(width) *
                                  (lx1 - lx0);
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const double dx = cx - lx[i], dy = cy - ly[i];
        const double d = dx * dx + dy * dy;
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      raster.values[static_cast<std::size_t>(r * width + c)] = samples[best].loss;
    }
  }
  return raster;
}

namespace detail {

struct SvgCanvas {
  std::string body;
  double width, height;

  SvgCanvas(double w, double h) : width(w), height(h) {
    body += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_fixed2(w) +
            "\" height=\"" + fmt_fixed2(h) + "\" viewBox=\"0 0 " + fmt_fixed2(w) + " " +
            fmt_fixed2(h) + "\">\n";
    body += "<rect x=\"0\" y=\"0\" width=\"" + fmt_fixed2(w) + "\" height=\"" + fmt_fixed2(h) +
            "\" fill=\"#ffffff\"/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& fill) {
    body += "<rect x=\"" + fmt_fixed2(x) + "\" y=\"" + fmt_fixed2(y) + "\" width=\"" +
            fmt_fixed2(w) + "\" height=\"" + fmt_fixed2(h) + "\" fill=\"" + fill + "\"/>\n";
  }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double stroke_width, bool dashed = false) {
    body += "<line x1=\"" + fmt_fixed2(x1) + "\" y1=\"" + fmt_fixed2(y1) + "\" x2=\"" +
            fmt_fixed2(x2) + "\" y2=\"" + fmt_fixed2(y2) + "\" stroke=\"" + stroke +
            "\" stroke-width=\"" + fmt_fixed2(stroke_width) + "\"";
    if (dashed) body += " stroke-dasharray=\"4 3\"";
    body += "/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                double stroke_width) {
    if (pts.size() < 2) return;
    body += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" +
            fmt_fixed2(stroke_width) + "\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i) body += ' ';
      body += fmt_fixed2(pts[i].first) + "," + fmt_fixed2(pts[i].second);
    }
    body += "\"/>\n";
  }

  void text(double x, double y, const std::string& s, double size, const std::string& anchor,
            double rotate_deg = 0.0) {
    body += "<text x=\"" + fmt_fixed2(x) + "\" y=\"" + fmt_fixed2(y) +
            "\" font-family=\"sans-serif\" font-size=\"" + fmt_fixed2(size) + "\" text-anchor=\"" +
            anchor + "\"";
    if (rotate_deg != 0.0)
      body += " transform=\"rotate(" + fmt_fixed2(rotate_deg) + " " + fmt_fixed2(x) + " " +
              fmt_fixed2(y) + ")\"";
    body += ">" + s + "</text>\n";
  }

  void save(const std::filesystem::path& path) {
    body += "</svg>\n";
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << body;
    if (!os) throw std::runtime_error("short write to " + path.string());
  }
};

// Decade tick positions within [lo, hi], plus the endpoints.
inline std::vector<double> axis_ticks(double lo, double hi, AxisScale scale) {
  std::vector<double> ticks{lo};
  if (scale == AxisScale::log) {
    for (int e = -12; e <= 12; ++e) {
      const double v = std::pow(10.0, e);
      if (v > lo && v < hi) ticks.push_back(v);
    }
  } else {
    for (int i = 1; i < 4; ++i) ticks.push_back(lo + (hi - lo) * i / 4.0);
  }
  if (hi > lo) ticks.push_back(hi);
  return ticks;
}

inline std::string tick_label(double v) {
  const double r = std::round(v);
  if (std::abs(v - r) < 1e-9 && std::abs(r) < 1e15) return format_double(r);
  return format_double(v);
}

}  // namespace detail

// Heatmap SVG: colored cells, black loci polylines, axes, color bar. Pure
// function of its inputs; identical calls produce identical bytes.
inline void emit_heatmap(const HeatmapRaster& raster, const std::vector<std::vector<LocusPoint>>& loci,
                         AxisScale color_scale, const std::filesystem::path& path,
                         const std::string& title = "", const std::string& x_label = "hidden width",
                         const std::string& y_label = "latent width") {
  if (raster.width < 1 || raster.height < 1 || raster.values.empty())
    throw std::invalid_argument("emit_heatmap: empty raster");

  const double ml = 70, mr = 110, mt = 40, mb = 50;
  const double pw = 560, ph = 420;
  detail::SvgCanvas svg(ml + pw + mr, mt + ph + mb);

  double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
  for (double v : raster.values)
    if (std::isfinite(v)) {
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  if (!std::isfinite(vmin)) vmin = vmax = 1.0;

  const double cw = pw / static_cast<double>(raster.width);
  const double ch = ph / static_cast<double>(raster.height);
  for (std::int64_t r = 0; r < raster.height; ++r) {
    for (std::int64_t c = 0; c < raster.width; ++c) {
      const double v = raster.at(r, c);
      const std::string fill =
          std::isfinite(v) ? ramp_color(color_ramp_position(v, vmin, vmax, color_scale))
                           : std::string("#808080");
      // Row 0 sits at y_min, the bottom of the plot.
      svg.rect(ml + static_cast<double>(c) * cw,
               mt + ph - static_cast<double>(r + 1) * ch, cw + 0.05, ch + 0.05, fill);
    }
  }

  for (const auto& locus : loci) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : locus) {
      const double l = static_cast<double>(p.latent);
      const bool inside = p.hidden >= raster.x_min && p.hidden <= raster.x_max &&
                          l >= raster.y_min && l <= raster.y_max;
      if (!inside) {
        svg.polyline(pts, "#000000", 1.5);
        pts.clear();
        continue;
      }
      pts.emplace_back(
          ml + detail::axis_position(p.hidden, raster.x_min, raster.x_max, AxisScale::log) * pw,
          mt + ph - detail::axis_position(l, raster.y_min, raster.y_max, AxisScale::log) * ph);
    }
    svg.polyline(pts, "#000000", 1.5);
  }

  svg.line(ml, mt + ph, ml + pw, mt + ph, "#000000", 1.0);
  svg.line(ml, mt, ml, mt + ph, "#000000", 1.0);
  for (double t : detail::axis_ticks(raster.x_min, raster.x_max, AxisScale::log)) {
    const double x = ml + detail::axis_position(t, raster.x_min, raster.x_max, AxisScale::log) * pw;
    svg.line(x, mt + ph, x, mt + ph + 5, "#000000", 1.0);
    svg.text(x, mt + ph + 18, detail::tick_label(t), 11, "middle");
  }
  for (double t : detail::axis_ticks(raster.y_min, raster.y_max, AxisScale::log)) {
    const double y =
        mt + ph - detail::axis_position(t, raster.y_min, raster.y_max, AxisScale::log) * ph;
    svg.line(ml - 5, y, ml, y, "#000000", 1.0);
    svg.text(ml - 8, y + 4, detail::tick_label(t), 11, "end");
  }
  svg.text(ml + pw / 2, mt + ph + 38, x_label, 13, "middle");
  svg.text(18, mt + ph / 2, y_label, 13, "middle", -90);
  if (!title.empty()) svg.text(ml + pw / 2, 24, title, 15, "middle");

  const double bx = ml + pw + 30, bw = 18;
  const int segments = 64;
  for (int i = 0; i < segments; ++i) {
    const double t0 = static_cast<double>(i) / segments;
    const double y = mt + ph - (static_cast<double>(i + 1) / segments) * ph;
    svg.rect(bx, y, bw, ph / segments + 0.05, ramp_color(t0 + 0.5 / segments));
  }
  svg.text(bx + bw + 6, mt + ph + 4, detail::tick_label(vmin), 11, "start");
  svg.text(bx + bw + 6, mt + 10, detail::tick_label(vmax), 11, "start");
  svg.text(bx + bw / 2, mt - 8, color_scale == AxisScale::log ? "loss (log)" : "loss", 11,
           "middle");

  svg.save(path);
}

// Multi-curve SVG with optional vertical marker lines. The y axis falls back
// to linear whenever a loss is non-positive.
inline void emit_curve(const std::vector<LossCurve>& curves, AxisScale x_scale, AxisScale y_scale,
                       const std::vector<double>& markers, const std::filesystem::path& path,
                       const std::string& title = "", const std::string& y_label = "loss") {
  if (curves.empty()) throw std::invalid_argument("emit_curve: no curves");
  for (const auto& c : curves) {
    c.validate();
    if (c.points.empty()) throw std::invalid_argument("emit_curve: empty curve");
  }

  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const auto& c : curves)
    for (const auto& p : c.points) {
      x_lo = std::min(x_lo, p.capacity);
      x_hi = std::max(x_hi, p.capacity);
      y_lo = std::min(y_lo, p.loss);
      y_hi = std::max(y_hi, p.loss);
    }
  if (x_scale == AxisScale::log && !(x_lo > 0.0))
    throw std::invalid_argument("emit_curve: log x axis needs positive capacities");
  if (y_scale == AxisScale::log && !(y_lo > 0.0)) y_scale = AxisScale::linear;
  if (x_hi == x_lo) {
    x_lo *= 0.5;
    x_hi = x_hi == 0.0 ? 1.0 : x_hi * 2.0;
  }
  if (y_hi == y_lo) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }

  const double ml = 70, mr = 30, mt = 40, mb = 50;
  const double pw = 560, ph = 420;
  detail::SvgCanvas svg(ml + pw + mr, mt + ph + mb);

  static const std::array<const char*, 6> palette{"#1f77b4", "#d62728", "#2ca02c",
                                                  "#9467bd", "#ff7f0e", "#8c564b"};

  const auto x_of = [&](double v) { return ml + detail::axis_position(v, x_lo, x_hi, x_scale) * pw; };
  const auto y_of = [&](double v) {
    return mt + ph - detail::axis_position(v, y_lo, y_hi, y_scale) * ph;
  };

  for (double m : markers)
    if (m >= x_lo && m <= x_hi) svg.line(x_of(m), mt, x_of(m), mt + ph, "#555555", 1.0, true);

  for (std::size_t k = 0; k < curves.size(); ++k) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(curves[k].points.size());
    for (const auto& p : curves[k].points) pts.emplace_back(x_of(p.capacity), y_of(p.loss));
    const std::string color = palette[k % palette.size()];
    svg.polyline(pts, color, 1.8);
    for (const auto& [px, py] : pts)
      svg.rect(px - 2.0, py - 2.0, 4.0, 4.0, color);
  }

  svg.line(ml, mt + ph, ml + pw, mt + ph, "#000000", 1.0);
  svg.line(ml, mt, ml, mt + ph, "#000000", 1.0);
  for (double t : detail::axis_ticks(x_lo, x_hi, x_scale)) {
    svg.line(x_of(t), mt + ph, x_of(t), mt + ph + 5, "#000000", 1.0);
    svg.text(x_of(t), mt + ph + 18, detail::tick_label(t), 11, "middle");
  }
  for (double t : detail::axis_ticks(y_lo, y_hi, y_scale)) {
    svg.line(ml - 5, y_of(t), ml, y_of(t), "#000000", 1.0);
    svg.text(ml - 8, y_of(t) + 4, detail::tick_label(t), 11, "end");
  }
  svg.text(ml + pw / 2, mt + ph + 38, curves.front().axis_label, 13, "middle");
  svg.text(18, mt + ph / 2, y_label, 13, "middle", -90);
  if (!title.empty()) svg.text(ml + pw / 2, 24, title, 15, "middle");

  double ly = mt + 14;
  for (std::size_t k = 0; k < curves.size(); ++k) {
    if (curves[k].name.empty()) continue;
    svg.rect(ml + pw - 150, ly - 8, 10, 10, palette[k % palette.size()]);
    svg.text(ml + pw - 135, ly, curves[k].name, 11, "start");
    ly += 16;
  }

  svg.save(path);
}

}  // namespace ddlab
