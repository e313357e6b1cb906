#pragma once

// Experiment configuration: one JSON document with sections model, sites[],
// method, train and data. Loading fills defaults, validates, and yields a
// canonical form whose hash identifies the run.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedsurg/errors.hpp"
#include "fedsurg/lha.hpp"
#include "fedsurg/metrics.hpp"
#include "fedsurg/model.hpp"
#include "fedsurg/text_embed.hpp"

namespace fedsurg {

enum class Method { local, fedavg, fedavg_cluster, fedrep, fedprox, surgfed };
std::string_view to_string(Method m);
Method parse_method(std::string_view name);
/// "local, fedavg, fedavg_cluster, fedrep, fedprox, surgfed"
std::string method_names();

struct MethodConfig {
  Method method = Method::local;
  double fedprox_mu = 0.01;
  bool lcs_enabled = false;
  bool lha_enabled = false;
  bool text_prompt_only = false;
  text::IndicatorKind indicator_kind = text::IndicatorKind::text;
  std::vector<std::string> trainable_groups;  // empty: all
  std::vector<std::string> freeze_groups;
  lha::PsiUpdate psi_update = lha::PsiUpdate::adam;
  double psi_learning_rate = 1e-3;
  double gate_learning_rate = 1e-3;
  std::size_t gate_chunks = 16;
  double psi_limit = 10.0;
  bool include_heads_same_task = false;
  bool zero_gate = false;

  /// Whether parameters of a layer group ("enc", "dec", "lcs", "head") train.
  bool trains(const std::string& layer_group) const;
  void validate() const;
};

struct SiteConfig {
  std::string name;
  std::string dataset;  // name used in the prompt; defaults to `name`
  model::TaskSpec task;
  std::vector<std::string> labels;
  std::size_t samples = 40;
  std::optional<std::uint64_t> data_seed;   // default: derived from data.seed and index
  std::optional<std::uint64_t> stream_key;  // default: site index
  std::optional<std::string> indicator_file;
  std::optional<std::string> prompt;  // overrides the generated prompt
};

struct TrainConfig {
  std::size_t rounds = 20;
  std::size_t epochs = 3;
  double learning_rate = 1e-4;
  std::size_t batch_size = 1;
  std::uint64_t seed = 1;
  bool sequential = false;
};

struct DataConfig {
  std::string root = "data";
  std::uint64_t seed = 7;
  metrics::Averaging averaging = metrics::Averaging::per_image;
};

struct ExperimentConfig {
  std::string name = "experiment";
  model::ModelConfig model;
  std::vector<SiteConfig> sites;
  MethodConfig method;
  TrainConfig train;
  DataConfig data;
  std::optional<std::string> baseline;  // run directory of the local-train reference

  /// Site data seed after defaults.
  std::uint64_t data_seed(std::size_t site) const;
  std::uint64_t stream_key(std::size_t site) const;
  /// Directory of a site's generated dataset, relative paths resolved against `base`.
  std::filesystem::path site_dir(std::size_t site, const std::filesystem::path& base = {}) const;
  /// Model config with the method's LCS switch applied.
  model::ModelConfig model_config() const;
  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);
/// Reads and validates a config file. IoError if unreadable, ConfigError otherwise.
ExperimentConfig load_config(const std::filesystem::path& path);
/// FNV-1a over the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& c);

/// Conditioning vector of one site under the method's indicator kind.
text::TextIndicator site_indicator(const ExperimentConfig& c, std::size_t site,
                                   const std::filesystem::path& base = {});

}  // namespace fedsurg
