#include "cli/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "diffcore/errors.hpp"

namespace svgplot {
namespace {

using diffcore::ContractError;

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                    "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"};
constexpr int kPaletteSize = 10;

std::string fmt_px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = 0.0, hi = 1.0;
};

// Pads the span by 5% a side; a zero span widens around the value so the
// chart never divides by zero.
Range padded(double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0.0) {
    const double pad = std::max(0.5, std::abs(lo) * 0.1);
    return {lo - pad, hi + pad};
  }
  return {lo - 0.05 * span, hi + 0.05 * span};
}

struct Frame {
  Range x, y;
  double px0, px1, py0, py1;  // plot rectangle in pixels; SVG y grows down

  double px(double x_data) const {
    return px0 + (x_data - x.lo) / (x.hi - x.lo) * (px1 - px0);
  }
  double py(double y_data) const {
    return py1 - (y_data - y.lo) / (y.hi - y.lo) * (py1 - py0);
  }
};

void validate(const std::vector<Series>& series) {
  if (series.empty()) throw ContractError("svgplot: no series to draw");
  for (const auto& s : series) {
    if (s.x.empty()) throw ContractError("svgplot: series '" + s.label + "' is empty");
    if (s.x.size() != s.y.size())
      throw ContractError("svgplot: series '" + s.label + "' has ragged x/y");
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]))
        throw ContractError("svgplot: series '" + s.label + "' contains non-finite points");
  }
}

Frame make_frame(const ChartSpec& spec, const std::vector<Series>& series, bool with_legend) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
  double ylo = xlo, yhi = -xlo;
  for (const auto& s : series) {
    for (double v : s.x) { xlo = std::min(xlo, v); xhi = std::max(xhi, v); }
    for (double v : s.y) { ylo = std::min(ylo, v); yhi = std::max(yhi, v); }
  }
  Frame f;
  f.x = spec.x_range ? padded(spec.x_range->first, spec.x_range->second) : padded(xlo, xhi);
  f.y = spec.y_range ? padded(spec.y_range->first, spec.y_range->second) : padded(ylo, yhi);
  const double margin_right = with_legend ? 170.0 : 24.0;
  f.px0 = 64.0;
  f.px1 = spec.width - margin_right;
  f.py0 = 44.0;
  f.py1 = spec.height - 52.0;
  if (f.px1 <= f.px0 || f.py1 <= f.py0)
    throw ContractError("svgplot: chart dimensions too small for the margins");
  return f;
}

void emit_frame(std::string& svg, const ChartSpec& spec, const Frame& f) {
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(spec.width) +
         "\" height=\"" + std::to_string(spec.height) + "\" viewBox=\"0 0 " +
         std::to_string(spec.width) + " " + std::to_string(spec.height) + "\">\n";
  svg += "<rect width=\"" + std::to_string(spec.width) + "\" height=\"" +
         std::to_string(spec.height) + "\" fill=\"#ffffff\"/>\n";
  svg += "<text x=\"" + fmt_px((f.px0 + f.px1) / 2) +
         "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">" +
         escape(spec.title) + "</text>\n";

  // Five evenly spaced ticks per axis, with faint grid lines.
  for (int i = 0; i < 5; ++i) {
    const double tx = f.x.lo + (f.x.hi - f.x.lo) * i / 4.0;
    const double ty = f.y.lo + (f.y.hi - f.y.lo) * i / 4.0;
    const std::string gx = fmt_px(f.px(tx)), gy = fmt_px(f.py(ty));
    svg += "<line x1=\"" + gx + "\" y1=\"" + fmt_px(f.py0) + "\" x2=\"" + gx + "\" y2=\"" +
           fmt_px(f.py1) + "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"" + fmt_px(f.px0) + "\" y1=\"" + gy + "\" x2=\"" + fmt_px(f.px1) +
           "\" y2=\"" + gy + "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + gx + "\" y=\"" + fmt_px(f.py1 + 18) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" +
           fmt_tick(tx) + "</text>\n";
    svg += "<text x=\"" + fmt_px(f.px0 - 6) + "\" y=\"" + fmt_px(f.py(ty) + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" + fmt_tick(ty) +
           "</text>\n";
  }

  svg += "<rect x=\"" + fmt_px(f.px0) + "\" y=\"" + fmt_px(f.py0) + "\" width=\"" +
         fmt_px(f.px1 - f.px0) + "\" height=\"" + fmt_px(f.py1 - f.py0) +
         "\" fill=\"none\" stroke=\"#404040\" stroke-width=\"1\"/>\n";
  svg += "<text x=\"" + fmt_px((f.px0 + f.px1) / 2) + "\" y=\"" +
         fmt_px(f.py1 + 38) +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" +
         escape(spec.x_label) + "</text>\n";
  svg += "<text x=\"18\" y=\"" + fmt_px((f.py0 + f.py1) / 2) +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         fmt_px((f.py0 + f.py1) / 2) + ")\">" + escape(spec.y_label) + "</text>\n";
}

void emit_legend(std::string& svg, const Frame& f, const std::vector<Series>& series) {
  double y = f.py0 + 8;
  int color = 0;
  for (const auto& s : series) {
    const char* stroke = kPalette[color % kPaletteSize];
    ++color;
    if (s.label.empty()) continue;
    svg += "<line x1=\"" + fmt_px(f.px1 + 12) + "\" y1=\"" + fmt_px(y) + "\" x2=\"" +
           fmt_px(f.px1 + 34) + "\" y2=\"" + fmt_px(y) + "\" stroke=\"" + stroke +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt_px(f.px1 + 40) + "\" y=\"" + fmt_px(y + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(s.label) + "</text>\n";
    y += 18;
  }
}

void emit_identity(std::string& svg, const Frame& f) {
  const double lo = std::max(f.x.lo, f.y.lo);
  const double hi = std::min(f.x.hi, f.y.hi);
  if (lo >= hi) return;  // no overlap to draw through
  svg += "<line x1=\"" + fmt_px(f.px(lo)) + "\" y1=\"" + fmt_px(f.py(lo)) + "\" x2=\"" +
         fmt_px(f.px(hi)) + "\" y2=\"" + fmt_px(f.py(hi)) +
         "\" stroke=\"#909090\" stroke-width=\"1\" stroke-dasharray=\"5,4\"/>\n";
}

std::string render(const ChartSpec& spec, const std::vector<Series>& series, bool lines) {
  validate(series);
  bool with_legend = false;
  for (const auto& s : series) with_legend = with_legend || !s.label.empty();
  const Frame f = make_frame(spec, series, with_legend);

  std::string svg;
  emit_frame(svg, spec, f);
  if (spec.identity_line) emit_identity(svg, f);

  int color = 0;
  for (const auto& s : series) {
    const char* stroke = kPalette[color++ % kPaletteSize];
    if (lines) {
      std::string points;
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (i) points += " ";
        points += fmt_px(f.px(s.x[i])) + "," + fmt_px(f.py(s.y[i]));
      }
      svg += "<polyline fill=\"none\" stroke=\"" + std::string(stroke) +
             "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
    } else {
      for (std::size_t i = 0; i < s.x.size(); ++i)
        svg += "<circle cx=\"" + fmt_px(f.px(s.x[i])) + "\" cy=\"" + fmt_px(f.py(s.y[i])) +
               "\" r=\"3.5\" fill=\"" + stroke + "\" fill-opacity=\"0.8\"/>\n";
    }
  }
  if (with_legend) emit_legend(svg, f, series);
  svg += "</svg>\n";
  return svg;
}

}  // namespace

std::string line_chart(const ChartSpec& spec, const std::vector<Series>& series) {
  return render(spec, series, true);
}

std::string scatter_chart(const ChartSpec& spec, const std::vector<Series>& series) {
  return render(spec, series, false);
}

}  // namespace svgplot
