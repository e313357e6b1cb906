#include "fedsurg/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "fedsurg/errors.hpp"

namespace fedsurg::plot {

namespace {

std::string fmt(double v, const char* spec = "%.2f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

Series load_series(const std::filesystem::path& run_dir, const std::string& metric) {
  const auto csv = run_dir / "metrics.csv";
  std::ifstream in(csv);
  if (!in) throw MissingInputError("cannot read " + csv.string());
  std::string line;
  std::getline(in, line);
  std::map<long, std::pair<double, int>> acc;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string round, site, name, value;
    if (!std::getline(ss, round, ',') || !std::getline(ss, site, ',') || !std::getline(ss, name, ',') ||
        !std::getline(ss, value))
      continue;
    if (name != metric) continue;
    auto& a = acc[std::stol(round)];
    a.first += std::stod(value);
    a.second += 1;
  }
  if (acc.empty()) throw MismatchError("run " + run_dir.string() + " has no metric '" + metric + "'");
  Series s;
  s.label = run_dir.filename().empty() ? run_dir.parent_path().filename().string() : run_dir.filename().string();
  for (const auto& [r, a] : acc) {
    s.rounds.push_back(static_cast<double>(r));
    s.values.push_back(a.first / a.second);
  }
  return s;
}

std::vector<std::vector<Point>> layout(const std::vector<Series>& series, const Frame& f) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const Series& s : series) {
    for (double r : s.rounds) x0 = std::min(x0, r), x1 = std::max(x1, r);
    for (double v : s.values) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) y0 -= 0.5, y1 += 0.5;
  const double pw = f.width - f.left - f.right, ph = f.height - f.top - f.bottom;
  std::vector<std::vector<Point>> out;
  for (const Series& s : series) {
    std::vector<Point> pts;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      pts.push_back({f.left + (s.rounds[i] - x0) / (x1 - x0) * pw, f.top + (y1 - s.values[i]) / (y1 - y0) * ph});
    }
    out.push_back(std::move(pts));
  }
  return out;
}

std::string render_svg(const std::vector<Series>& series, const std::string& metric, const Frame& f) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const Series& s : series) {
    for (double r : s.rounds) x0 = std::min(x0, r), x1 = std::max(x1, r);
    for (double v : s.values) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  const auto points = layout(series, f);
  const double bottom = f.height - f.bottom, right = f.width - f.right;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
    << "\" viewBox=\"0 0 " << f.width << ' ' << f.height << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<line class=\"axis\" x1=\"" << f.left << "\" y1=\"" << bottom << "\" x2=\"" << right << "\" y2=\"" << bottom
    << "\" stroke=\"black\"/>\n";
  o << "<line class=\"axis\" x1=\"" << f.left << "\" y1=\"" << f.top << "\" x2=\"" << f.left << "\" y2=\"" << bottom
    << "\" stroke=\"black\"/>\n";
  o << "<text x=\"" << (f.left + right) / 2 << "\" y=\"" << f.height - 12
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">round</text>\n";
  o << "<text x=\"14\" y=\"" << (f.top + bottom) / 2 << "\" transform=\"rotate(-90 14 " << (f.top + bottom) / 2
    << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape(metric) << "</text>\n";
  if (!series.empty() && std::isfinite(x0)) {
    o << "<text x=\"" << f.left << "\" y=\"" << bottom + 16 << "\" font-family=\"sans-serif\" font-size=\"10\">"
      << fmt(x0, "%g") << "</text>\n";
    o << "<text x=\"" << right << "\" y=\"" << bottom + 16
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(x1, "%g") << "</text>\n";
    o << "<text x=\"" << f.left - 4 << "\" y=\"" << bottom
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(y0, "%.4g") << "</text>\n";
    o << "<text x=\"" << f.left - 4 << "\" y=\"" << f.top + 10
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(y1, "%.4g") << "</text>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kColors[i % (sizeof kColors / sizeof *kColors)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" data-label=\""
      << escape(series[i].label) << "\" points=\"";
    for (std::size_t j = 0; j < points[i].size(); ++j) {
      o << (j ? " " : "") << fmt(points[i][j].x) << ',' << fmt(points[i][j].y);
    }
    o << "\"/>\n";
    const double ly = f.top + 16.0 * static_cast<double>(i);
    o << "<line x1=\"" << right + 10 << "\" y1=\"" << ly << "\" x2=\"" << right + 30 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    o << "<text class=\"legend\" x=\"" << right + 34 << "\" y=\"" << ly + 4
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(series[i].label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace fedsurg::plot
