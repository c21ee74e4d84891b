#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace svgplot {

// One plotted sequence; x and y must be equally long and non-empty.
struct Series {
  std::string label;  // legend entry; empty labels are omitted from the legend
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 720;
  int height = 440;
  bool identity_line = false;  // dashed y = x reference (scatter charts)
  // Data-space axis ranges; when absent, the data's span padded by 5%.
  std::optional<std::pair<double, double>> x_range;
  std::optional<std::pair<double, double>> y_range;
};

// Self-contained SVG text (fixed palette, axes with five ticks, legend).
// Output is a pure function of the inputs: no timestamps, fixed number
// formatting. Non-finite data or empty/ragged series are rejected.
std::string line_chart(const ChartSpec& spec, const std::vector<Series>& series);
std::string scatter_chart(const ChartSpec& spec, const std::vector<Series>& series);

}  // namespace svgplot
