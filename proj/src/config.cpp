#include "fedsurg/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "fedsurg/errors.hpp"
#include "fedsurg/rng.hpp"
#include "fedsurg/tdf.hpp"

namespace fedsurg {

using json = nlohmann::json;

namespace {

constexpr std::string_view kMethodNames[] = {"local", "fedavg", "fedavg_cluster", "fedrep", "fedprox", "surgfed"};
const std::set<std::string> kLayerGroups{"enc", "dec", "lcs", "head"};

void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + std::string(where));
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void check_groups(const std::vector<std::string>& groups, const char* field) {
  for (const auto& g : groups)
    if (!kLayerGroups.count(g)) throw ConfigError(std::string(field) + ": unknown layer group '" + g + "'");
}

}  // namespace

std::string_view to_string(Method m) { return kMethodNames[static_cast<int>(m)]; }

Method parse_method(std::string_view name) {
  for (int i = 0; i < 6; ++i)
    if (kMethodNames[i] == name) return static_cast<Method>(i);
  throw ConfigError("unknown method '" + std::string(name) + "'; valid methods: " + method_names());
}

std::string method_names() {
  std::string s;
  for (auto n : kMethodNames) s += (s.empty() ? "" : ", ") + std::string(n);
  return s;
}

bool MethodConfig::trains(const std::string& group) const {
  if (std::find(freeze_groups.begin(), freeze_groups.end(), group) != freeze_groups.end()) return false;
  return trainable_groups.empty() ||
         std::find(trainable_groups.begin(), trainable_groups.end(), group) != trainable_groups.end();
}

void MethodConfig::validate() const {
  if (fedprox_mu < 0) throw ConfigError("method.fedprox_mu must be non-negative");
  if (text_prompt_only && (!lha_enabled || lcs_enabled)) {
    throw ConfigError("method.text_prompt_only requires lha_enabled and not lcs_enabled");
  }
  if (method == Method::surgfed && !lha_enabled) throw ConfigError("method surgfed requires lha_enabled");
  if (lha_enabled && method != Method::surgfed) {
    throw ConfigError("lha_enabled is only meaningful with method surgfed (got " + std::string(to_string(method)) + ")");
  }
  if (psi_learning_rate < 0 || gate_learning_rate < 0) throw ConfigError("server learning rates must be non-negative");
  if (gate_chunks == 0) throw ConfigError("method.gate_chunks must be positive");
  if (!(psi_limit > 0)) throw ConfigError("method.psi_limit must be positive");
  check_groups(trainable_groups, "method.trainable_groups");
  check_groups(freeze_groups, "method.freeze_groups");
}

std::uint64_t ExperimentConfig::data_seed(std::size_t site) const {
  return sites.at(site).data_seed.value_or(mix_seed(data.seed, site));
}

std::uint64_t ExperimentConfig::stream_key(std::size_t site) const { return sites.at(site).stream_key.value_or(site); }

std::filesystem::path ExperimentConfig::site_dir(std::size_t site, const std::filesystem::path& base) const {
  std::filesystem::path root(data.root);
  if (root.is_relative() && !base.empty()) root = base / root;
  return root / sites.at(site).name;
}

model::ModelConfig ExperimentConfig::model_config() const {
  model::ModelConfig m = model;
  m.lcs_enabled = method.lcs_enabled;
  return m;
}

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("name must not be empty");
  try {
    model.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  method.validate();
  if (sites.empty()) throw ConfigError("sites must list at least one site");
  std::set<std::string> names;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const SiteConfig& s = sites[i];
    if (s.name.empty() || s.name.find('/') != std::string::npos || s.name.find(',') != std::string::npos) {
      throw ConfigError("site " + std::to_string(i) + ": name must be non-empty without '/' or ','");
    }
    if (!names.insert(s.name).second) throw ConfigError("duplicate site name '" + s.name + "'");
    if (s.samples == 0) throw ConfigError("site " + s.name + ": samples must be positive");
    try {
      s.task.validate();
    } catch (const Error& e) {
      throw ConfigError("site " + s.name + ": " + e.what());
    }
  }
  if (method.indicator_kind == text::IndicatorKind::one_hot && sites.size() > model.indicator_dim) {
    throw ConfigError("one_hot indicators need model.indicator_dim >= number of sites");
  }
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (train.learning_rate < 0) throw ConfigError("train.learning_rate must be non-negative");
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    check_keys(j, "config", {"name", "model", "sites", "method", "train", "data", "baseline"});
    read(j, "name", c.name);
    if (j.contains("baseline")) c.baseline = j.at("baseline").get<std::string>();

    if (j.contains("model")) {
      const json& m = j.at("model");
      check_keys(m, "model", {"height", "width", "clip_length", "encoder_widths", "encoder_strides", "decoder_widths",
                              "gate_axis", "indicator_dim"});
      read(m, "height", c.model.height);
      read(m, "width", c.model.width);
      read(m, "clip_length", c.model.clip_length);
      read(m, "encoder_widths", c.model.encoder_widths);
      read(m, "encoder_strides", c.model.encoder_strides);
      read(m, "decoder_widths", c.model.decoder_widths);
      read(m, "indicator_dim", c.model.indicator_dim);
      if (m.contains("gate_axis")) c.model.gate_axis = model::parse_gate_axis(m.at("gate_axis").get<std::string>());
    }

    if (!j.contains("sites")) throw ConfigError("config needs a sites array");
    for (const json& s : j.at("sites")) {
      check_keys(s, "site", {"name", "dataset", "task", "labels", "samples", "data_seed", "stream_key",
                             "indicator_file", "prompt"});
      SiteConfig site;
      site.name = s.at("name").get<std::string>();
      site.dataset = s.value("dataset", site.name);
      site.task = model::task_from_json(s.at("task"));
      read(s, "labels", site.labels);
      read(s, "samples", site.samples);
      if (s.contains("data_seed")) site.data_seed = s.at("data_seed").get<std::uint64_t>();
      if (s.contains("stream_key")) site.stream_key = s.at("stream_key").get<std::uint64_t>();
      if (s.contains("indicator_file")) site.indicator_file = s.at("indicator_file").get<std::string>();
      if (s.contains("prompt")) site.prompt = s.at("prompt").get<std::string>();
      c.sites.push_back(std::move(site));
    }

    const json method = j.value("method", json::object());
    check_keys(method, "method", {"name", "fedprox_mu", "lcs_enabled", "lha_enabled", "text_prompt_only",
                                  "indicator_kind", "trainable_groups", "freeze_groups", "psi_update", "psi_lr",
                                  "gate_lr", "gate_chunks", "psi_limit", "include_heads_same_task", "zero_gate"});
    MethodConfig& mc = c.method;
    mc.method = parse_method(method.value("name", "local"));
    // Language components belong to surgfed unless set explicitly.
    mc.lcs_enabled = mc.method == Method::surgfed;
    mc.lha_enabled = mc.method == Method::surgfed;
    read(method, "fedprox_mu", mc.fedprox_mu);
    read(method, "lcs_enabled", mc.lcs_enabled);
    read(method, "lha_enabled", mc.lha_enabled);
    read(method, "text_prompt_only", mc.text_prompt_only);
    if (method.contains("indicator_kind")) {
      mc.indicator_kind = text::parse_indicator_kind(method.at("indicator_kind").get<std::string>());
    }
    read(method, "trainable_groups", mc.trainable_groups);
    read(method, "freeze_groups", mc.freeze_groups);
    if (method.contains("psi_update")) mc.psi_update = lha::parse_psi_update(method.at("psi_update").get<std::string>());
    read(method, "psi_lr", mc.psi_learning_rate);
    read(method, "gate_lr", mc.gate_learning_rate);
    read(method, "gate_chunks", mc.gate_chunks);
    read(method, "psi_limit", mc.psi_limit);
    read(method, "include_heads_same_task", mc.include_heads_same_task);
    read(method, "zero_gate", mc.zero_gate);

    const json train = j.value("train", json::object());
    check_keys(train, "train", {"rounds", "epochs", "lr", "batch_size", "seed", "sequential"});
    read(train, "rounds", c.train.rounds);
    read(train, "epochs", c.train.epochs);
    read(train, "lr", c.train.learning_rate);
    read(train, "batch_size", c.train.batch_size);
    read(train, "seed", c.train.seed);
    read(train, "sequential", c.train.sequential);

    const json data = j.value("data", json::object());
    check_keys(data, "data", {"root", "seed", "averaging"});
    read(data, "root", c.data.root);
    read(data, "seed", c.data.seed);
    if (data.contains("averaging")) c.data.averaging = metrics::parse_averaging(data.at("averaging").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json sites = json::array();
  for (const SiteConfig& s : c.sites) {
    json site{{"name", s.name}, {"dataset", s.dataset}, {"task", model::to_json(s.task)},
              {"labels", s.labels}, {"samples", s.samples}};
    if (s.data_seed) site["data_seed"] = *s.data_seed;
    if (s.stream_key) site["stream_key"] = *s.stream_key;
    if (s.indicator_file) site["indicator_file"] = *s.indicator_file;
    if (s.prompt) site["prompt"] = *s.prompt;
    sites.push_back(std::move(site));
  }
  const MethodConfig& m = c.method;
  json out{
      {"name", c.name},
      {"model",
       {{"height", c.model.height},
        {"width", c.model.width},
        {"clip_length", c.model.clip_length},
        {"encoder_widths", c.model.encoder_widths},
        {"encoder_strides", c.model.encoder_strides},
        {"decoder_widths", c.model.decoder_widths},
        {"gate_axis", model::to_string(c.model.gate_axis)},
        {"indicator_dim", c.model.indicator_dim}}},
      {"sites", sites},
      {"method",
       {{"name", to_string(m.method)},
        {"fedprox_mu", m.fedprox_mu},
        {"lcs_enabled", m.lcs_enabled},
        {"lha_enabled", m.lha_enabled},
        {"text_prompt_only", m.text_prompt_only},
        {"indicator_kind", text::to_string(m.indicator_kind)},
        {"trainable_groups", m.trainable_groups},
        {"freeze_groups", m.freeze_groups},
        {"psi_update", lha::to_string(m.psi_update)},
        {"psi_lr", m.psi_learning_rate},
        {"gate_lr", m.gate_learning_rate},
        {"gate_chunks", m.gate_chunks},
        {"psi_limit", m.psi_limit},
        {"include_heads_same_task", m.include_heads_same_task},
        {"zero_gate", m.zero_gate}}},
      {"train",
       {{"rounds", c.train.rounds},
        {"epochs", c.train.epochs},
        {"lr", c.train.learning_rate},
        {"batch_size", c.train.batch_size},
        {"seed", c.train.seed},
        {"sequential", c.train.sequential}}},
      {"data", {{"root", c.data.root}, {"seed", c.data.seed}, {"averaging", metrics::to_string(c.data.averaging)}}}};
  if (c.baseline) out["baseline"] = *c.baseline;
  return out;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& c) {
  // `sequential` selects scheduling only; results are identical either way
  json j = to_json(c);
  j["train"].erase("sequential");
  return tdf::hex64(fnv1a64(j.dump()));
}

text::TextIndicator site_indicator(const ExperimentConfig& c, std::size_t site, const std::filesystem::path& base) {
  const SiteConfig& s = c.sites.at(site);
  const std::size_t dim = c.model.indicator_dim;
  text::TextIndicator ind;
  if (s.indicator_file) {
    std::filesystem::path p(*s.indicator_file);
    if (p.is_relative() && !base.empty()) p = base / p;
    ind = text::load_embedding_file(p);
    if (ind.dim() != dim) {
      throw ConfigError("site " + s.name + ": indicator file has dimension " + std::to_string(ind.dim()) +
                        ", model.indicator_dim is " + std::to_string(dim));
    }
  } else {
    const std::string prompt =
        s.prompt.value_or(text::site_prompt(s.dataset, s.task.kind == model::TaskKind::segmentation
                                                           ? "Surgical Scene Segmentation"
                                                           : "Depth Estimation",
                                            s.labels));
    ind = text::make_indicator(c.method.indicator_kind, site, prompt, c.sites.size(), dim,
                               mix_seed(c.train.seed, fnv1a64(s.name)));
  }
  ind.site = site;
  return ind;
}

}  // namespace fedsurg
