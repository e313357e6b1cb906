#include "fedsurg/metrics.hpp"

#include <cmath>

#include "fedsurg/errors.hpp"

namespace fedsurg::metrics {

int direction_of(const std::string& metric) {
  if (metric == "dice" || metric == "iou") return +1;
  if (metric == "rmse") return -1;
  throw InputError("unknown metric '" + metric + "' (expected dice, iou or rmse)");
}

void MetricSet::add(const std::string& name, double value) { entries.push_back({name, value, direction_of(name)}); }

namespace {

struct ClassCounts {
  std::vector<double> inter, pred, truth;
};

ClassCounts count_classes(const Tensor& prediction, const Tensor& target, std::size_t classes) {
  if (prediction.shape() != target.shape()) {
    throw DimensionError("dice_iou: prediction " + shape_str(prediction.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  ClassCounts c{std::vector<double>(classes), std::vector<double>(classes), std::vector<double>(classes)};
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double p = prediction[i], t = target[i];
    if (p < 0 || t < 0 || p >= static_cast<double>(classes) || t >= static_cast<double>(classes) ||
        p != std::floor(p) || t != std::floor(t)) {
      throw InputError("dice_iou: label outside [0, " + std::to_string(classes) + ")");
    }
    const auto pi = static_cast<std::size_t>(p), ti = static_cast<std::size_t>(t);
    c.pred[pi] += 1;
    c.truth[ti] += 1;
    if (pi == ti) c.inter[pi] += 1;
  }
  return c;
}

SegScore score(const std::vector<double>& inter, const std::vector<double>& pred, const std::vector<double>& truth) {
  double dice = 0.0, iou = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 1; c < inter.size(); ++c) {
    const double sizes = pred[c] + truth[c];
    if (sizes == 0) continue;
    dice += 2.0 * inter[c] / sizes;
    iou += inter[c] / (sizes - inter[c]);
    ++present;
  }
  if (present == 0) return {};
  const double n = static_cast<double>(present);
  return {100.0 * dice / n, 100.0 * iou / n};
}

}  // namespace

SegScore dice_iou(const Tensor& prediction, const Tensor& target, std::size_t classes) {
  const ClassCounts c = count_classes(prediction, target, classes);
  return score(c.inter, c.pred, c.truth);
}

double rmse(const Tensor& prediction, const Tensor& target) {
  if (prediction.size() != target.size()) throw DimensionError("rmse: operand sizes differ");
  if (target.size() == 0) throw InputError("rmse: empty operands");
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = prediction[i] - target[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(target.size()));
}

Tensor argmax_labels(const Tensor& logits) {
  if (logits.rank() < 1) throw DimensionError("argmax_labels: expected [..., C]");
  const std::size_t c = logits.shape().back(), n = logits.size() / c;
  Shape out_shape(logits.shape().begin(), logits.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  Tensor out(out_shape);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (logits[i * c + j] > logits[i * c + best]) best = j;
    out[i] = static_cast<double>(best);
  }
  return out;
}

Averaging parse_averaging(std::string_view name) {
  if (name == "per_image") return Averaging::per_image;
  if (name == "pooled") return Averaging::pooled;
  throw InputError("unknown averaging '" + std::string(name) + "' (expected per_image or pooled)");
}

std::string_view to_string(Averaging mode) { return mode == Averaging::per_image ? "per_image" : "pooled"; }

SegmentationEvaluator::SegmentationEvaluator(std::size_t classes, Averaging mode)
    : classes_(classes), mode_(mode), inter_(classes), pred_(classes), truth_(classes) {}

void SegmentationEvaluator::add(const Tensor& prediction, const Tensor& target) {
  const ClassCounts c = count_classes(prediction, target, classes_);
  if (mode_ == Averaging::pooled) {
    for (std::size_t k = 0; k < classes_; ++k) {
      inter_[k] += c.inter[k];
      pred_[k] += c.pred[k];
      truth_[k] += c.truth[k];
    }
    return;
  }
  const SegScore s = score(c.inter, c.pred, c.truth);
  if (!s.dice) return;
  dice_sum_ += *s.dice;
  iou_sum_ += *s.iou;
  ++scored_;
}

SegScore SegmentationEvaluator::result() const {
  if (mode_ == Averaging::pooled) return score(inter_, pred_, truth_);
  if (scored_ == 0) return {};
  const double n = static_cast<double>(scored_);
  return {dice_sum_ / n, iou_sum_ / n};
}

nlohmann::json DeltaM::to_json() const {
  nlohmann::json parts = nlohmann::json::object();
  for (const auto& [name, v] : contributions) parts[name] = v;
  return {{"delta_m", value}, {"contributions", parts}};
}

DeltaM delta_m(const MetricSet& run, const MetricSet& baseline) {
  if (run.entries.size() != baseline.entries.size() || run.entries.empty()) {
    throw ContractViolation("delta_m: run has " + std::to_string(run.entries.size()) + " metrics, baseline " +
                            std::to_string(baseline.entries.size()));
  }
  DeltaM out;
  double total = 0.0;
  for (const MetricEntry& m : run.entries) {
    const MetricEntry* b = nullptr;
    for (const MetricEntry& e : baseline.entries)
      if (e.name == m.name) b = &e;
    if (b == nullptr) throw ContractViolation("delta_m: baseline lacks metric '" + m.name + "'");
    if (b->direction != m.direction) throw ContractViolation("delta_m: direction differs for '" + m.name + "'");
    if (!(b->value > 0.0)) throw InputError("delta_m: baseline " + m.name + " must be positive");
    const double part = m.direction * (m.value - b->value) / b->value * 100.0;
    out.contributions.emplace_back(m.name, part);
    total += part;
  }
  out.value = total / static_cast<double>(run.entries.size());
  return out;
}

Summary summarize(const std::vector<double>& values) {
  if (values.empty()) throw InputError("summarize: no values");
  Summary s;
  s.count = values.size();
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::map<std::string, Summary> summarize(const std::vector<std::map<std::string, double>>& runs) {
  if (runs.empty()) throw InputError("summarize: no runs");
  std::map<std::string, Summary> out;
  for (const auto& [name, _] : runs.front()) {
    std::vector<double> values;
    for (const auto& r : runs) {
      auto it = r.find(name);
      if (it == r.end()) throw ContractViolation("summarize: metric '" + name + "' missing from a run");
      values.push_back(it->second);
    }
    out[name] = summarize(values);
  }
  return out;
}

}  // namespace fedsurg::metrics
