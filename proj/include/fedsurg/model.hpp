#pragma once

// Toy multi-task encoder/decoder standing in for a large pretrained
// backbone: a shared strided-conv encoder, an optional LCS gate on the
// encoder output, a nearest-upsampling decoder and a task-specific 1x1 head.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "fedsurg/autograd.hpp"
#include "fedsurg/tensor.hpp"
#include "fedsurg/text_embed.hpp"

namespace fedsurg::model {

enum class TaskKind { segmentation, depth };

struct TaskSpec {
  TaskKind kind = TaskKind::segmentation;
  std::size_t class_count = 2;  // segmentation only
  double depth_min = 1.0;       // depth only
  double depth_max = 10.0;

  static TaskSpec segmentation(std::size_t classes);
  static TaskSpec depth(double lo, double hi);

  /// Channels emitted by the head.
  std::size_t output_channels() const { return kind == TaskKind::segmentation ? class_count : 1; }
  void validate() const;
};

std::string_view to_string(TaskKind kind);

/// {"kind": "segmentation", "classes": C} or {"kind": "depth", "range": [lo, hi]}
nlohmann::json to_json(const TaskSpec& task);
TaskSpec task_from_json(const nlohmann::json& j);

enum class GateAxis { channel, spatial };
std::string_view to_string(GateAxis axis);
GateAxis parse_gate_axis(std::string_view name);

struct ModelConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t clip_length = 1;
  std::vector<std::size_t> encoder_widths{8, 16};
  std::vector<std::size_t> encoder_strides{2, 2};
  std::vector<std::size_t> decoder_widths{16, 8};
  bool lcs_enabled = true;
  GateAxis gate_axis = GateAxis::channel;
  std::size_t indicator_dim = text::kDefaultDim;

  std::size_t feature_channels() const { return encoder_widths.back(); }
  void validate() const;
};

enum class Group { shared, personalized, head };
std::string_view to_string(Group group);
Group parse_group(std::string_view name);

struct Parameter {
  std::string name;
  Tensor value;
  Group group = Group::shared;

  /// First dot-separated component of the name ("enc", "dec", "lcs", "head").
  std::string layer_group() const;
};

/// Named parameter tensors in fixed construction order.
class ParameterSet {
 public:
  void add(std::string name, Tensor value, Group group);

  std::size_t size() const { return entries_.size(); }
  const std::vector<Parameter>& entries() const { return entries_; }
  std::vector<Parameter>& entries() { return entries_; }
  Parameter& operator[](std::size_t i) { return entries_[i]; }
  const Parameter& operator[](std::size_t i) const { return entries_[i]; }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t index_of(const std::string& name) const;
  const Tensor& at(const std::string& name) const { return entries_[index_of(name)].value; }
  Tensor& at(const std::string& name) { return entries_[index_of(name)].value; }

  std::vector<std::string> names() const;
  std::size_t parameter_count() const;
  /// Parameters whose layer_group() is `prefix` (e.g. "lcs").
  ParameterSet filtered(const std::function<bool(const Parameter&)>& keep) const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b);

 private:
  std::vector<Parameter> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Throws ContractViolation unless names, shapes, groups and order agree.
void require_compatible(const ParameterSet& a, const ParameterSet& b);
ParameterSet subtract(const ParameterSet& a, const ParameterSet& b);
ParameterSet add(const ParameterSet& a, const ParameterSet& b);

ParameterSet build_model(const ModelConfig& config, const TaskSpec& task, const text::TextIndicator& indicator,
                         std::uint64_t init_seed);

/// Variables bound to each entry of a ParameterSet on one tape.
class BoundParameters {
 public:
  BoundParameters(ag::Tape& tape, const ParameterSet& params, bool trainable = true);
  /// Binds pre-made variables, one per entry in order.
  BoundParameters(const ParameterSet& params, std::vector<ag::Var> vars);
  ag::Var operator()(const std::string& name) const;
  const std::vector<ag::Var>& vars() const { return vars_; }

 private:
  const ParameterSet* params_;
  std::vector<ag::Var> vars_;
};

/// Differentiable forward pass. `x` is [l,h,w,3].
ag::Var forward(const ModelConfig& config, const BoundParameters& params, ag::Var x,
                const text::TextIndicator& indicator, const TaskSpec& task);

/// Plain forward pass returning logits [l,h,w,C] or depths [l,h,w,1].
Tensor forward(const ModelConfig& config, const ParameterSet& params, const Tensor& x,
               const text::TextIndicator& indicator, const TaskSpec& task);

/// Encoder features F [l,h',w',c] before the LCS gate.
Tensor encode(const ModelConfig& config, const ParameterSet& params, const Tensor& x);

ag::Var compute_loss(ag::Var prediction, const Tensor& target, const TaskSpec& task);
double compute_loss(const Tensor& prediction, const Tensor& target, const TaskSpec& task);

// Checkpoints: one TDF file per parameter plus manifest.json.
void save_checkpoint(const std::filesystem::path& dir, const ParameterSet& params, const nlohmann::json& config);
ParameterSet load_checkpoint(const std::filesystem::path& dir);

}  // namespace fedsurg::model
