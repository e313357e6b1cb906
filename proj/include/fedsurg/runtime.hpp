#pragma once

// Federated rounds: every site trains locally for E epochs, then the server
// combines the results according to the method, then every site is
// evaluated on its held-out split.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedsurg/adam.hpp"
#include "fedsurg/config.hpp"
#include "fedsurg/lha.hpp"
#include "fedsurg/metrics.hpp"
#include "fedsurg/model.hpp"
#include "fedsurg/rng.hpp"
#include "fedsurg/synth.hpp"

namespace fedsurg::runtime {

/// One training or evaluation example shaped for the model.
struct Example {
  Tensor input;   // [1,h,w,3]
  Tensor target;  // [1,h,w] class ids or [1,h,w,1] depths
};

std::vector<Example> to_examples(const std::vector<synth::Sample>& samples, const model::TaskSpec& task);

struct SiteState {
  std::size_t index = 0;
  std::string name;
  model::TaskSpec task;
  model::ParameterSet params;
  std::vector<AdamState> optimizer;  // parallel to params; never leaves the site
  text::TextIndicator indicator;
  Rng rng{0};
  std::vector<Example> train;
  std::vector<Example> eval;
};

struct LocalTrainOptions {
  std::size_t epochs = 3;
  double learning_rate = 1e-4;
  std::size_t batch_size = 1;
  std::vector<bool> trainable;  // per parameter; empty means all
  /// Proximal reference and strength; the term is skipped when mu == 0.
  const model::ParameterSet* prox_reference = nullptr;
  double prox_mu = 0.0;
};

struct LocalTrainResult {
  std::vector<double> epoch_losses;  // mean batch loss of each epoch
  model::ParameterSet delta;         // trained minus starting weights
};

/// E passes over the site's training split in a seeded shuffle order with
/// one Adam step per batch. Frozen parameters are left untouched.
LocalTrainResult local_train_site(SiteState& site, const model::ModelConfig& config, const LocalTrainOptions& options);

/// Mean loss over examples with the given weights, no update.
double dataset_loss(const model::ModelConfig& config, const model::ParameterSet& params,
                    const std::vector<Example>& examples, const text::TextIndicator& indicator,
                    const model::TaskSpec& task);

/// dice/iou (segmentation) or rmse (depth) plus eval_loss over the eval split.
std::map<std::string, double> evaluate_site(const model::ModelConfig& config, const SiteState& site,
                                            metrics::Averaging averaging);

enum class BaselineMode { fedavg, cluster, fedrep };

/// Weighted mean v0 + sum_k w_k (v_k - v0) / sum w, so equal inputs are
/// reproduced exactly.
Tensor weighted_mean(const std::vector<const Tensor*>& values, const std::vector<double>& weights);

/// fedavg: every non-personalized layer averaged over the sites where it has
/// the same shape; cluster: the same within task-kind groups; fedrep: shared
/// layers only, heads stay local.
std::vector<model::ParameterSet> baseline_aggregate(BaselineMode mode, const std::vector<model::ParameterSet>& params,
                                                    const std::vector<double>& weights,
                                                    const std::vector<model::TaskKind>& kinds);

struct RoundRecord {
  std::size_t round = 0;
  nlohmann::json log;                                  // one rounds.jsonl line
  std::vector<std::map<std::string, double>> metrics;  // per site, includes train_loss
  double seconds = 0.0;
};

/// Holds all site and server state for one experiment.
class Federation {
 public:
  Federation(const ExperimentConfig& config, std::vector<synth::SiteDataset> data,
             const std::filesystem::path& base = {});
  ~Federation();

  RoundRecord run_round();
  std::vector<std::map<std::string, double>> evaluate() const;
  /// Full-pass training loss per site with current weights.
  std::vector<double> train_losses() const;

  std::size_t round() const { return round_; }
  const std::vector<SiteState>& sites() const { return sites_; }
  std::vector<SiteState>& sites() { return sites_; }
  const ExperimentConfig& config() const { return config_; }
  const std::string& config_hash() const { return hash_; }

 private:
  struct LhaGroup;
  void aggregate(const std::vector<model::ParameterSet>& previous, nlohmann::json& log);

  ExperimentConfig config_;
  model::ModelConfig model_;
  std::string hash_;
  std::vector<SiteState> sites_;
  std::vector<std::vector<bool>> trainable_;
  std::vector<std::unique_ptr<LhaGroup>> lha_;
  std::size_t round_ = 0;
};

/// Loads every site dataset named by the config. MissingInputError when a
/// site directory has no manifest; ConfigError when its spec disagrees.
std::vector<synth::SiteDataset> load_datasets(const ExperimentConfig& config, const std::filesystem::path& base);

/// Site spec for generation, derived from the config.
synth::SiteSpec site_spec(const ExperimentConfig& config, std::size_t site);

/// Generates the dataset into `dir` unless an intact copy with the same spec
/// and sample count is already there. Returns true when files were written.
bool ensure_site_dataset(const synth::SiteSpec& spec, std::size_t samples, const std::filesystem::path& dir);

struct RunOptions {
  std::optional<bool> sequential;  // overrides train.sequential
  std::filesystem::path base;      // resolves relative data and baseline paths
  bool write_checkpoints = true;
};

/// Full run into `out`: rounds.jsonl, metrics.csv, timings.json, summary.json,
/// config.json, checkpoints/<site>/ and run_manifest.json.
nlohmann::json run_experiment(const ExperimentConfig& config, const std::filesystem::path& out,
                              const RunOptions& options = {});

/// Last-round dice/iou/rmse per site from a metrics.csv file.
std::map<std::string, metrics::MetricSet> final_metrics(const std::filesystem::path& metrics_csv);

struct DeltaMReport {
  std::map<std::string, metrics::DeltaM> sites;
  double average = 0.0;
  nlohmann::json to_json() const;
};

/// Per-site delta-m of `run` against `baseline`, matched by site name.
/// MismatchError when site or metric sets differ or a baseline value is not positive.
DeltaMReport compare_runs(const std::map<std::string, metrics::MetricSet>& run,
                          const std::map<std::string, metrics::MetricSet>& baseline);

/// Checks run_manifest.json in `run_dir`: the stored config hash must match
/// the hash of config.json and every listed file its checksum. Returns false
/// when the directory has no manifest; MismatchError on any disagreement.
bool verify_run(const std::filesystem::path& run_dir);

/// Applies FEDSURG_THREADS when set. Returns the thread count in effect.
int configure_threads();

std::string version_string();

}  // namespace fedsurg::runtime
