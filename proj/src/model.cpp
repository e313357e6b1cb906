#include "fedsurg/model.hpp"

#include <cmath>
#include <fstream>

#include "fedsurg/errors.hpp"
#include "fedsurg/lcs.hpp"
#include "fedsurg/rng.hpp"
#include "fedsurg/tdf.hpp"

namespace fedsurg::model {

using json = nlohmann::json;

TaskSpec TaskSpec::segmentation(std::size_t classes) {
  TaskSpec t;
  t.kind = TaskKind::segmentation;
  t.class_count = classes;
  t.validate();
  return t;
}

TaskSpec TaskSpec::depth(double lo, double hi) {
  TaskSpec t;
  t.kind = TaskKind::depth;
  t.depth_min = lo;
  t.depth_max = hi;
  t.validate();
  return t;
}

void TaskSpec::validate() const {
  if (kind == TaskKind::segmentation && class_count < 2) throw InputError("segmentation task needs at least 2 classes");
  if (kind == TaskKind::depth && !(depth_min > 0.0 && depth_min < depth_max)) {
    throw InputError("depth task needs 0 < d_min < d_max");
  }
}

std::string_view to_string(TaskKind kind) { return kind == TaskKind::segmentation ? "segmentation" : "depth"; }

std::string_view to_string(GateAxis axis) { return axis == GateAxis::channel ? "channel" : "spatial"; }

json to_json(const TaskSpec& task) {
  if (task.kind == TaskKind::segmentation) return json{{"kind", "segmentation"}, {"classes", task.class_count}};
  return json{{"kind", "depth"}, {"range", {task.depth_min, task.depth_max}}};
}

TaskSpec task_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "segmentation") return TaskSpec::segmentation(j.at("classes").get<std::size_t>());
  if (kind == "depth") {
    const auto& r = j.at("range");
    if (!r.is_array() || r.size() != 2) throw InputError("depth task range must be [lo, hi]");
    return TaskSpec::depth(r[0].get<double>(), r[1].get<double>());
  }
  throw InputError("unknown task kind '" + kind + "' (expected segmentation or depth)");
}

GateAxis parse_gate_axis(std::string_view name) {
  if (name == "channel") return GateAxis::channel;
  if (name == "spatial") return GateAxis::spatial;
  throw InputError("unknown gate axis '" + std::string(name) + "' (valid: channel, spatial)");
}

void ModelConfig::validate() const {
  if (height == 0 || width == 0 || clip_length == 0) throw InputError("model: input size must be positive");
  if (encoder_widths.empty() || encoder_widths.size() != encoder_strides.size()) {
    throw InputError("model: encoder widths and strides must be non-empty and of equal length");
  }
  std::size_t downsample = 1;
  for (auto s : encoder_strides) {
    if (s != 1 && s != 2) throw InputError("model: encoder strides must be 1 or 2");
    downsample *= s;
  }
  if (downsample != (std::size_t{1} << decoder_widths.size())) {
    throw InputError("model: each decoder stage upsamples x2, so the product of encoder strides must be 2^" +
                     std::to_string(decoder_widths.size()));
  }
  if (height % downsample != 0 || width % downsample != 0) {
    throw InputError("model: input size must be divisible by the total encoder stride");
  }
  for (auto w : encoder_widths)
    if (w == 0) throw InputError("model: zero encoder width");
  for (auto w : decoder_widths)
    if (w == 0) throw InputError("model: zero decoder width");
  if (indicator_dim == 0) throw InputError("model: indicator dimension must be positive");
}

std::string_view to_string(Group group) {
  switch (group) {
    case Group::shared:
      return "shared";
    case Group::personalized:
      return "personalized";
    case Group::head:
      return "head";
  }
  return "shared";
}

Group parse_group(std::string_view name) {
  if (name == "shared") return Group::shared;
  if (name == "personalized") return Group::personalized;
  if (name == "head") return Group::head;
  throw FormatError("unknown partition tag '" + std::string(name) + "'");
}

std::string Parameter::layer_group() const { return name.substr(0, name.find('.')); }

// ---------------------------------------------------------------------------

void ParameterSet::add(std::string name, Tensor value, Group group) {
  if (index_.count(name)) throw ContractViolation("duplicate parameter " + name);
  if (group == Group::personalized && name.rfind("lcs.", 0) != 0) {
    throw ContractViolation("personalized parameter " + name + " must carry the lcs. prefix");
  }
  index_.emplace(name, entries_.size());
  entries_.push_back(Parameter{std::move(name), std::move(value), group});
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractViolation("no parameter named " + name);
  return it->second;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

ParameterSet ParameterSet::filtered(const std::function<bool(const Parameter&)>& keep) const {
  ParameterSet out;
  for (const auto& e : entries_) {
    if (keep(e)) out.add(e.name, e.value, e.group);
  }
  return out;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    const auto& x = a.entries_[i];
    const auto& y = b.entries_[i];
    if (x.name != y.name || x.group != y.group || !(x.value == y.value)) return false;
  }
  return true;
}

void require_compatible(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) throw ContractViolation("parameter sets differ in size");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].group != b[i].group || a[i].value.shape() != b[i].value.shape()) {
      throw ContractViolation("parameter sets differ at entry " + std::to_string(i) + " (" + a[i].name + " vs " +
                              b[i].name + ")");
    }
  }
}

ParameterSet subtract(const ParameterSet& a, const ParameterSet& b) {
  require_compatible(a, b);
  ParameterSet out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i].value = fedsurg::sub(a[i].value, b[i].value);
  return out;
}

ParameterSet add(const ParameterSet& a, const ParameterSet& b) {
  require_compatible(a, b);
  ParameterSet out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i].value = fedsurg::add(a[i].value, b[i].value);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Tensor fan_in_uniform(Rng& rng, Shape shape, std::size_t fan_in) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

void add_conv(ParameterSet& params, Rng& rng, const std::string& prefix, std::size_t k, std::size_t cin,
              std::size_t cout, Group group) {
  const std::size_t fan_in = k * k * cin;
  params.add(prefix + ".kernel", fan_in_uniform(rng, {k, k, cin, cout}, fan_in), group);
  params.add(prefix + ".bias", fan_in_uniform(rng, {cout}, fan_in), group);
}

}  // namespace

ParameterSet build_model(const ModelConfig& config, const TaskSpec& task, const text::TextIndicator& indicator,
                         std::uint64_t init_seed) {
  config.validate();
  task.validate();
  if (config.lcs_enabled && indicator.dim() != config.indicator_dim) {
    throw InputError("build_model: indicator dimension " + std::to_string(indicator.dim()) + " != configured " +
                     std::to_string(config.indicator_dim));
  }
  Rng rng(init_seed);
  ParameterSet params;
  std::size_t channels = 3;
  for (std::size_t i = 0; i < config.encoder_widths.size(); ++i) {
    add_conv(params, rng, "enc." + std::to_string(i), 3, channels, config.encoder_widths[i], Group::shared);
    channels = config.encoder_widths[i];
  }
  if (config.lcs_enabled) lcs::register_parameters(params, config.gate_axis, channels, config.indicator_dim, rng);
  for (std::size_t i = 0; i < config.decoder_widths.size(); ++i) {
    add_conv(params, rng, "dec." + std::to_string(i), 3, channels, config.decoder_widths[i], Group::shared);
    channels = config.decoder_widths[i];
  }
  add_conv(params, rng, "head", 1, channels, task.output_channels(), Group::head);
  return params;
}

BoundParameters::BoundParameters(ag::Tape& tape, const ParameterSet& params, bool trainable) : params_(&params) {
  vars_.reserve(params.size());
  for (const auto& e : params.entries()) vars_.push_back(trainable ? tape.leaf(e.value) : tape.constant(e.value));
}

BoundParameters::BoundParameters(const ParameterSet& params, std::vector<ag::Var> vars)
    : params_(&params), vars_(std::move(vars)) {
  if (vars_.size() != params.size()) throw ContractViolation("bound variable count does not match parameter set");
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (vars_[i].shape() != params[i].value.shape()) throw DimensionError("bound variable shape for " + params[i].name);
  }
}

ag::Var BoundParameters::operator()(const std::string& name) const { return vars_[params_->index_of(name)]; }

namespace {

ag::Var encode_graph(const ModelConfig& config, const BoundParameters& p, ag::Var x) {
  ag::Var h = x;
  for (std::size_t i = 0; i < config.encoder_widths.size(); ++i) {
    const std::string prefix = "enc." + std::to_string(i);
    h = ag::relu(ag::conv2d(h, p(prefix + ".kernel"), p(prefix + ".bias"), config.encoder_strides[i]));
  }
  return h;
}

void check_input(const ModelConfig& config, const Shape& shape) {
  const Shape expected{config.clip_length, config.height, config.width, 3};
  if (shape != expected) {
    throw DimensionError("model input " + shape_str(shape) + " does not match configured " + shape_str(expected));
  }
}

}  // namespace

ag::Var forward(const ModelConfig& config, const BoundParameters& p, ag::Var x, const text::TextIndicator& indicator,
                const TaskSpec& task) {
  check_input(config, x.shape());
  ag::Var h = encode_graph(config, p, x);
  if (config.lcs_enabled) {
    ag::Var ind = x.tape().constant(indicator.vector);
    h = lcs::apply(h, lcs::gate(h, ind, p, config.gate_axis), config.gate_axis);
  }
  for (std::size_t i = 0; i < config.decoder_widths.size(); ++i) {
    const std::string prefix = "dec." + std::to_string(i);
    h = ag::relu(ag::conv2d(ag::upsample2x(h), p(prefix + ".kernel"), p(prefix + ".bias"), 1));
  }
  ag::Var out = ag::conv2d(h, p("head.kernel"), p("head.bias"), 1);
  if (out.shape()[3] != task.output_channels()) {
    throw DimensionError("head emits " + std::to_string(out.shape()[3]) + " channels, task expects " +
                         std::to_string(task.output_channels()));
  }
  if (task.kind == TaskKind::depth) {
    out = ag::scale_shift(ag::sigmoid(out), task.depth_max - task.depth_min, task.depth_min);
  }
  return out;
}

Tensor forward(const ModelConfig& config, const ParameterSet& params, const Tensor& x,
               const text::TextIndicator& indicator, const TaskSpec& task) {
  ag::Tape tape;
  BoundParameters bound(tape, params, false);
  return forward(config, bound, tape.constant(x), indicator, task).value();
}

Tensor encode(const ModelConfig& config, const ParameterSet& params, const Tensor& x) {
  check_input(config, x.shape());
  ag::Tape tape;
  BoundParameters bound(tape, params, false);
  return encode_graph(config, bound, tape.constant(x)).value();
}

ag::Var compute_loss(ag::Var prediction, const Tensor& target, const TaskSpec& task) {
  if (task.kind == TaskKind::segmentation) return ag::cross_entropy(prediction, target);
  return ag::l1_loss(prediction, target);
}

double compute_loss(const Tensor& prediction, const Tensor& target, const TaskSpec& task) {
  ag::Tape tape;
  return compute_loss(tape.constant(prediction), target, task).value().item();
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& dir, const ParameterSet& params, const json& config) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["config"] = config;
  json entries = json::array();
  for (const auto& e : params.entries()) {
    const std::string file = e.name + ".tdf";
    tdf::write(dir / file, e.value);
    entries.push_back({{"name", e.name},
                       {"shape", e.value.shape()},
                       {"partition", to_string(e.group)},
                       {"file", file},
                       {"checksum", tdf::file_checksum(dir / file)}});
  }
  manifest["parameters"] = entries;
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

ParameterSet load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("missing checkpoint manifest in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  }
  ParameterSet params;
  for (const auto& e : manifest.at("parameters")) {
    Tensor value = tdf::read(dir / e.at("file").get<std::string>());
    if (value.shape() != e.at("shape").get<Shape>()) throw FormatError("checkpoint shape mismatch for " + e.dump());
    params.add(e.at("name").get<std::string>(), std::move(value), parse_group(e.at("partition").get<std::string>()));
  }
  return params;
}

}  // namespace fedsurg::model
