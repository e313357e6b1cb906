#pragma once

// Reported per-site results of the five-site surgical benchmark (two-decimal
// rounded): segmentation sites give IoU and Dice, depth sites give RMSE, and
// each site has a printed delta-m against local training.

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "fedsurg/metrics.hpp"

namespace fedsurg::reference {

struct SiteColumns {
  const char* site;
  bool segmentation;
};

inline constexpr std::array<SiteColumns, 5> kSites{{{"EndoVis2017", true},
                                                    {"EndoVis2018", true},
                                                    {"AutoLaparo", true},
                                                    {"SCARED", false},
                                                    {"StereoMIS", false}}};

struct SiteResult {
  double iou = 0, dice = 0, rmse = 0;  // unused fields stay 0
  double delta_m = 0;
};

struct Row {
  std::string method;
  std::array<SiteResult, 5> sites;
  double average = 0;
};

inline Row seg3(std::string m, std::array<double, 9> seg, std::array<double, 4> dep, double avg) {
  Row r{std::move(m), {}, avg};
  for (int s = 0; s < 3; ++s) r.sites[s] = {seg[3 * s], seg[3 * s + 1], 0, seg[3 * s + 2]};
  for (int s = 0; s < 2; ++s) r.sites[3 + s] = {0, 0, dep[2 * s], dep[2 * s + 1]};
  return r;
}

inline const Row& local_row() {
  static const Row r = seg3("Local Train", {58.77, 70.47, 0.00, 71.53, 80.06, 0.00, 82.39, 88.04, 0.00},
                            {10.76, 0.00, 14.75, 0.00}, 0.00);
  return r;
}

inline const std::vector<Row>& method_rows() {
  static const std::vector<Row> rows{
      seg3("FedAvg", {54.59, 66.38, -6.46, 65.06, 74.21, -8.18, 83.19, 88.59, 0.80}, {28.61, -165.75, 14.77, -0.17},
           -35.95),
      seg3("FedAvg+Cluster", {57.21, 69.44, -2.06, 65.76, 75.51, -6.87, 83.26, 88.71, 0.91},
           {34.09, -216.67, 15.71, -6.57}, -46.25),
      seg3("FedRep", {58.59, 70.58, -0.08, 70.94, 79.32, -0.87, 83.37, 88.86, 1.06}, {16.78, -55.86, 14.63, 0.77},
           -10.99),
      seg3("FedProx", {53.22, 64.85, -8.71, 67.35, 76.28, -5.28, 83.66, 89.06, 1.35}, {128.59, -1094.62, 16.20, -9.88},
           -223.43),
      seg3("MaT-FL", {56.19, 67.80, -4.09, 71.01, 79.48, -0.73, 83.27, 88.75, 0.94}, {10.58, 1.67, 15.38, -4.29},
           -1.30),
      seg3("FedHCA2", {59.73, 71.27, 1.38, 70.25, 78.67, -1.76, 83.61, 89.03, 1.30}, {10.25, 4.79, 18.81, -27.57},
           -4.37),
      seg3("SurgFed", {62.17, 73.76, 5.23, 73.33, 81.44, 2.12, 83.45, 88.89, 1.13}, {8.78, 18.42, 14.34, 2.73}, 5.92),
  };
  return rows;
}

inline const Row& row(const std::string& method) {
  for (const Row& r : method_rows())
    if (r.method == method) return r;
  throw std::out_of_range(method);
}

inline metrics::MetricSet metric_set(const Row& r, std::size_t site) {
  metrics::MetricSet m;
  if (kSites[site].segmentation) {
    m.add("iou", r.sites[site].iou);
    m.add("dice", r.sites[site].dice);
  } else {
    m.add("rmse", r.sites[site].rmse);
  }
  return m;
}

/// Range of delta-m over every input within +-0.005 of its printed value.
/// Independent of metrics::delta_m: corners are evaluated directly.
inline std::pair<double, double> rounding_interval(const Row& r, std::size_t site) {
  const SiteResult& run = r.sites[site];
  const SiteResult& base = local_row().sites[site];
  const double h = 0.005;
  auto rel = [](double m, double b, int s) { return s * (m - b) / b * 100.0; };
  std::vector<std::pair<double, double>> parts;  // (min, max) of each metric's term
  auto corners = [&](double m, double b, int s) {
    double lo = 1e300, hi = -1e300;
    for (double dm : {-h, h})
      for (double db : {-h, h}) {
        const double v = rel(m + dm, b + db, s);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    parts.emplace_back(lo, hi);
  };
  if (kSites[site].segmentation) {
    corners(run.iou, base.iou, +1);
    corners(run.dice, base.dice, +1);
  } else {
    corners(run.rmse, base.rmse, -1);
  }
  double lo = 0, hi = 0;
  for (auto [a, b] : parts) {
    lo += a;
    hi += b;
  }
  return {lo / static_cast<double>(parts.size()), hi / static_cast<double>(parts.size())};
}

}  // namespace fedsurg::reference
