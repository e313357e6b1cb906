#pragma once

// Line charts of a per-round metric as standalone SVG text.

#include <filesystem>
#include <string>
#include <vector>

namespace fedsurg::plot {

struct Series {
  std::string label;
  std::vector<double> rounds;
  std::vector<double> values;
};

/// Per-round mean of `metric` over the sites of one run that report it.
/// MismatchError when no site reports the metric.
Series load_series(const std::filesystem::path& run_dir, const std::string& metric);

struct Point {
  double x = 0.0, y = 0.0;
};

struct Frame {
  double width = 640, height = 400;
  double left = 60, right = 160, top = 30, bottom = 50;
};

/// Maps every series into SVG coordinates on a shared axis range. Larger
/// values sit higher on the page, i.e. have smaller y.
std::vector<std::vector<Point>> layout(const std::vector<Series>& series, const Frame& frame = {});

std::string render_svg(const std::vector<Series>& series, const std::string& metric, const Frame& frame = {});

}  // namespace fedsurg::plot
