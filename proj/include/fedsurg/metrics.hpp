#pragma once

// Evaluation metrics: Dice/IoU for segmentation, RMSE for depth, and the
// signed mean relative change of a run against a local-training baseline.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedsurg/tensor.hpp"

namespace fedsurg::metrics {

/// +1 when higher is better (dice, iou), -1 when lower is better (rmse).
int direction_of(const std::string& metric);

struct MetricEntry {
  std::string name;
  double value = 0.0;
  int direction = +1;
};

struct MetricSet {
  std::vector<MetricEntry> entries;

  /// Entry with the direction looked up from the name.
  void add(const std::string& name, double value);
};

/// Percentages. Empty when neither map contains a foreground class.
struct SegScore {
  std::optional<double> dice;
  std::optional<double> iou;
};

/// Per foreground class c >= 1 present in either map, averaged, x100.
SegScore dice_iou(const Tensor& prediction, const Tensor& target, std::size_t classes);

double rmse(const Tensor& prediction, const Tensor& target);

/// Argmax over the last axis: [..., C] -> [...] class ids.
Tensor argmax_labels(const Tensor& logits);

enum class Averaging { per_image, pooled };
Averaging parse_averaging(std::string_view name);
std::string_view to_string(Averaging mode);

/// Dice/IoU over an evaluation split. per_image averages image scores and
/// skips images without foreground; pooled sums class counts over images.
class SegmentationEvaluator {
 public:
  SegmentationEvaluator(std::size_t classes, Averaging mode);
  void add(const Tensor& prediction, const Tensor& target);
  SegScore result() const;

 private:
  std::size_t classes_;
  Averaging mode_;
  double dice_sum_ = 0.0, iou_sum_ = 0.0;
  std::size_t scored_ = 0;
  std::vector<double> inter_, pred_, truth_;
};

struct DeltaM {
  double value = 0.0;  // percent
  std::vector<std::pair<std::string, double>> contributions;

  nlohmann::json to_json() const;
};

/// (1/K) sum_k s_k (M_k - B_k) / B_k * 100 over metrics matched by name.
/// ContractViolation when names or directions differ; InputError when a
/// baseline value is not positive.
DeltaM delta_m(const MetricSet& run, const MetricSet& baseline);

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n-1); 0 for one value
  std::size_t count = 0;
};

Summary summarize(const std::vector<double>& values);
std::map<std::string, Summary> summarize(const std::vector<std::map<std::string, double>>& runs);

}  // namespace fedsurg::metrics
