#include "fedsurg/runtime.hpp"

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedsurg/errors.hpp"
#include "fedsurg/tdf.hpp"

#ifndef FEDSURG_VERSION
#define FEDSURG_VERSION "0.0.0-unknown"
#endif

namespace fedsurg::runtime {

using json = nlohmann::json;
namespace fs = std::filesystem;
using model::Group;
using model::ParameterSet;

namespace {

template <typename F>
void for_each_site(std::size_t n, bool parallel, F&& body) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic, 1) if (parallel && n > 1)
  for (std::size_t k = 0; k < n; ++k) {
    try {
      body(k);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

json metrics_json(const std::map<std::string, double>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

}  // namespace

std::vector<Example> to_examples(const std::vector<synth::Sample>& samples, const model::TaskSpec& task) {
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const synth::Sample& s : samples) {
    const std::size_t h = s.label.dim(0), w = s.label.dim(1);
    Shape target = task.kind == model::TaskKind::segmentation ? Shape{1, h, w} : Shape{1, h, w, 1};
    out.push_back({s.image.reshaped(Shape{1, h, w, 3}), s.label.reshaped(target)});
  }
  return out;
}

LocalTrainResult local_train_site(SiteState& site, const model::ModelConfig& config, const LocalTrainOptions& o) {
  const std::size_t np = site.params.size();
  if (!o.trainable.empty() && o.trainable.size() != np) throw ContractViolation("trainable mask size mismatch");
  if (o.batch_size == 0) throw InputError("batch size must be positive");
  if (site.optimizer.size() != np) {
    site.optimizer.clear();
    for (const auto& p : site.params.entries()) site.optimizer.emplace_back(p.value.shape(), AdamConfig{});
  }
  for (auto& st : site.optimizer) st.config.learning_rate = o.learning_rate;
  const bool prox = o.prox_reference != nullptr && o.prox_mu != 0.0;
  if (prox) model::require_compatible(site.params, *o.prox_reference);

  const ParameterSet start = site.params;
  LocalTrainResult result;
  const std::size_t n = site.train.size();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < o.epochs; ++epoch) {
    // each epoch permutes the identity so the order depends on the stream alone
    std::iota(order.begin(), order.end(), std::size_t{0});
    site.rng.shuffle(order);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += o.batch_size) {
      const std::size_t end = std::min(n, begin + o.batch_size);
      ag::Tape tape;
      std::vector<ag::Var> vars;
      vars.reserve(np);
      for (std::size_t i = 0; i < np; ++i) {
        const bool train = o.trainable.empty() || o.trainable[i];
        vars.push_back(train ? tape.leaf(site.params[i].value) : tape.constant(site.params[i].value));
      }
      model::BoundParameters bound(site.params, vars);
      ag::Var loss;
      for (std::size_t j = begin; j < end; ++j) {
        const Example& ex = site.train[order[j]];
        ag::Var l = model::compute_loss(model::forward(config, bound, tape.constant(ex.input), site.indicator, site.task),
                                        ex.target, site.task);
        loss = j == begin ? l : ag::add(loss, l);
      }
      if (end - begin > 1) loss = ag::scale_shift(loss, 1.0 / static_cast<double>(end - begin), 0.0);
      total += loss.value().item();
      ++batches;
      tape.backward(loss);
      for (std::size_t i = 0; i < np; ++i) {
        if (!o.trainable.empty() && !o.trainable[i]) continue;
        Tensor g = vars[i].grad();
        model::Parameter& p = site.params[i];
        if (prox && p.group == Group::shared) {
          const Tensor& ref = (*o.prox_reference)[i].value;
          for (std::size_t e = 0; e < g.size(); ++e) g[e] += o.prox_mu * (p.value[e] - ref[e]);
        }
        adam_step(p.value, g, site.optimizer[i]);
      }
    }
    result.epoch_losses.push_back(batches > 0 ? total / static_cast<double>(batches) : 0.0);
  }
  result.delta = model::subtract(site.params, start);
  return result;
}

double dataset_loss(const model::ModelConfig& config, const ParameterSet& params, const std::vector<Example>& examples,
                    const text::TextIndicator& indicator, const model::TaskSpec& task) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const Example& ex : examples) {
    total += model::compute_loss(model::forward(config, params, ex.input, indicator, task), ex.target, task);
  }
  return total / static_cast<double>(examples.size());
}

std::map<std::string, double> evaluate_site(const model::ModelConfig& config, const SiteState& site,
                                            metrics::Averaging averaging) {
  std::map<std::string, double> out;
  if (site.eval.empty()) return out;
  const bool seg = site.task.kind == model::TaskKind::segmentation;
  metrics::SegmentationEvaluator evaluator(site.task.output_channels(), averaging);
  double loss = 0.0, rmse = 0.0;
  for (const Example& ex : site.eval) {
    const Tensor pred = model::forward(config, site.params, ex.input, site.indicator, site.task);
    loss += model::compute_loss(pred, ex.target, site.task);
    if (seg) {
      evaluator.add(metrics::argmax_labels(pred), ex.target);
    } else {
      rmse += metrics::rmse(pred, ex.target);
    }
  }
  const double n = static_cast<double>(site.eval.size());
  out["eval_loss"] = loss / n;
  if (seg) {
    const metrics::SegScore s = evaluator.result();
    if (s.dice) out["dice"] = *s.dice;
    if (s.iou) out["iou"] = *s.iou;
  } else {
    out["rmse"] = rmse / n;
  }
  return out;
}

Tensor weighted_mean(const std::vector<const Tensor*>& values, const std::vector<double>& weights) {
  if (values.empty() || values.size() != weights.size()) throw ContractViolation("weighted_mean: empty or mismatched");
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw ContractViolation("weighted_mean: weights must sum to a positive value");
  const Tensor& v0 = *values[0];
  Tensor out = v0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    require_same_shape(v0, *values[k], "weighted_mean");
    const double a = weights[k] / total;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += a * ((*values[k])[i] - v0[i]);
  }
  return out;
}

std::vector<ParameterSet> baseline_aggregate(BaselineMode mode, const std::vector<ParameterSet>& params,
                                             const std::vector<double>& weights,
                                             const std::vector<model::TaskKind>& kinds) {
  const std::size_t n = params.size();
  if (n == 0) throw ContractViolation("baseline_aggregate: no sites");
  if (weights.size() != n || kinds.size() != n) throw ContractViolation("baseline_aggregate: size mismatch");
  for (std::size_t k = 1; k < n; ++k) {
    if (params[k].names() != params[0].names()) {
      throw ContractViolation("baseline_aggregate: site " + std::to_string(k) + " has different layers");
    }
  }
  std::vector<ParameterSet> out = params;
  for (std::size_t i = 0; i < params[0].size(); ++i) {
    const Group group = params[0][i].group;
    if (group == Group::personalized) continue;
    if (mode == BaselineMode::fedrep && group != Group::shared) continue;
    // buckets of sites whose layer shapes (and, for cluster, task kinds) agree
    std::vector<bool> done(n, false);
    for (std::size_t a = 0; a < n; ++a) {
      if (done[a]) continue;
      std::vector<std::size_t> members;
      for (std::size_t b = a; b < n; ++b) {
        if (done[b] || params[b][i].value.shape() != params[a][i].value.shape()) continue;
        if (mode == BaselineMode::cluster && kinds[b] != kinds[a]) continue;
        members.push_back(b);
        done[b] = true;
      }
      if (members.size() < 2) continue;
      std::vector<const Tensor*> values;
      std::vector<double> w;
      for (std::size_t m : members) {
        values.push_back(&params[m][i].value);
        w.push_back(weights[m]);
      }
      const Tensor mean = weighted_mean(values, w);
      for (std::size_t m : members) out[m][i].value = mean;
    }
  }
  return out;
}

struct Federation::LhaGroup {
  std::vector<std::size_t> members;
  lha::LhaServer server;
  std::string label;
};

Federation::Federation(const ExperimentConfig& config, std::vector<synth::SiteDataset> data, const fs::path& base)
    : config_(config), model_(config.model_config()), hash_(fedsurg::config_hash(config)) {
  config_.validate();
  if (model_.clip_length != 1) throw ConfigError("model.clip_length must be 1 for single-frame site data");
  if (data.size() != config_.sites.size()) throw ContractViolation("one dataset per site required");
  const std::size_t n = config_.sites.size();
  for (std::size_t k = 0; k < n; ++k) {
    const SiteConfig& sc = config_.sites[k];
    SiteState s;
    s.index = k;
    s.name = sc.name;
    s.task = sc.task;
    s.indicator = site_indicator(config_, k, base);
    // one shared initialisation; heads differ only in shape
    s.params = model::build_model(model_, sc.task, s.indicator, config_.train.seed);
    AdamConfig adam;
    adam.learning_rate = config_.train.learning_rate;
    for (const auto& p : s.params.entries()) s.optimizer.emplace_back(p.value.shape(), adam);
    s.rng = Rng(mix_seed(config_.train.seed, config_.stream_key(k)));
    s.train = to_examples(data[k].train, sc.task);
    s.eval = to_examples(data[k].eval, sc.task);
    std::vector<bool> mask;
    for (const auto& p : s.params.entries()) mask.push_back(config_.method.trains(p.layer_group()));
    trainable_.push_back(std::move(mask));
    sites_.push_back(std::move(s));
  }

  if (config_.method.method != Method::surgfed) return;
  lha::LhaConfig lc;
  lc.chunks = config_.method.gate_chunks;
  lc.psi_learning_rate = config_.method.psi_learning_rate;
  lc.gate_learning_rate = config_.method.gate_learning_rate;
  lc.psi_limit = config_.method.psi_limit;
  lc.psi_update = config_.method.psi_update;
  lc.zero_gate = config_.method.zero_gate;
  std::vector<std::string> shared;
  for (const auto& p : sites_[0].params.entries())
    if (p.group == Group::shared) shared.push_back(p.name);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  lha_.push_back(std::make_unique<LhaGroup>(
      LhaGroup{all, lha::LhaServer(n, shared, model_.indicator_dim, lc), "shared"}));
  if (!config_.method.include_heads_same_task) return;
  std::vector<bool> grouped(n, false);
  for (std::size_t a = 0; a < n; ++a) {
    if (grouped[a]) continue;
    std::vector<std::size_t> members;
    for (std::size_t b = a; b < n; ++b) {
      if (grouped[b] || sites_[b].task.kind != sites_[a].task.kind ||
          sites_[b].params.at("head.kernel").shape() != sites_[a].params.at("head.kernel").shape())
        continue;
      members.push_back(b);
      grouped[b] = true;
    }
    if (members.size() < 2) continue;
    lha_.push_back(std::make_unique<LhaGroup>(
        LhaGroup{members, lha::LhaServer(members.size(), {"head.kernel", "head.bias"}, model_.indicator_dim, lc),
                 "head:" + sites_[a].name}));
  }
}

Federation::~Federation() = default;

std::vector<std::map<std::string, double>> Federation::evaluate() const {
  std::vector<std::map<std::string, double>> out(sites_.size());
  for_each_site(sites_.size(), !config_.train.sequential,
                [&](std::size_t k) { out[k] = evaluate_site(model_, sites_[k], config_.data.averaging); });
  return out;
}

std::vector<double> Federation::train_losses() const {
  std::vector<double> out(sites_.size());
  for_each_site(sites_.size(), !config_.train.sequential, [&](std::size_t k) {
    out[k] = dataset_loss(model_, sites_[k].params, sites_[k].train, sites_[k].indicator, sites_[k].task);
  });
  return out;
}

RoundRecord Federation::run_round() {
  const auto t0 = std::chrono::steady_clock::now();
  ++round_;
  const std::size_t n = sites_.size();
  std::vector<ParameterSet> previous;
  for (const auto& s : sites_) previous.push_back(s.params);

  std::vector<LocalTrainResult> local(n);
  for_each_site(n, !config_.train.sequential, [&](std::size_t k) {
    LocalTrainOptions o;
    o.epochs = config_.train.epochs;
    o.learning_rate = config_.train.learning_rate;
    o.batch_size = config_.train.batch_size;
    o.trainable = trainable_[k];
    if (config_.method.method == Method::fedprox) {
      o.prox_reference = &previous[k];
      o.prox_mu = config_.method.fedprox_mu;
    }
    local[k] = local_train_site(sites_[k], model_, o);
  });

  json log{{"round", round_}, {"method", to_string(config_.method.method)}, {"config_hash", hash_}};
  aggregate(previous, log);

  RoundRecord rec;
  rec.round = round_;
  rec.metrics = evaluate();
  json site_logs = json::array();
  for (std::size_t k = 0; k < n; ++k) {
    if (!local[k].epoch_losses.empty()) rec.metrics[k]["train_loss"] = local[k].epoch_losses.back();
    site_logs.push_back(json{{"name", sites_[k].name},
                             {"train_loss", local[k].epoch_losses},
                             {"metrics", metrics_json(rec.metrics[k])}});
  }
  log["sites"] = std::move(site_logs);
  rec.log = std::move(log);
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

void Federation::aggregate(const std::vector<ParameterSet>& previous, json& log) {
  const std::size_t n = sites_.size();
  const Method m = config_.method.method;
  if (m == Method::local) return;
  if (m != Method::surgfed) {
    std::vector<ParameterSet> params;
    std::vector<double> weights;
    std::vector<model::TaskKind> kinds;
    for (const auto& s : sites_) {
      params.push_back(s.params);
      weights.push_back(static_cast<double>(s.train.size()));
      kinds.push_back(s.task.kind);
    }
    const BaselineMode mode = m == Method::fedavg_cluster ? BaselineMode::cluster
                              : m == Method::fedrep       ? BaselineMode::fedrep
                                                          : BaselineMode::fedavg;
    std::vector<ParameterSet> out = baseline_aggregate(mode, params, weights, kinds);
    for (std::size_t k = 0; k < n; ++k) sites_[k].params = std::move(out[k]);
    return;
  }

  // Without LCS and without the text-prompt variant the server gate sees no language.
  const bool language = config_.method.lcs_enabled || config_.method.text_prompt_only;
  json groups = json::array();
  for (const auto& g : lha_) {
    std::vector<ParameterSet> prev, local;
    std::vector<Tensor> indicators;
    for (std::size_t k : g->members) {
      prev.push_back(previous[k]);
      local.push_back(sites_[k].params);
      indicators.push_back(language ? sites_[k].indicator.vector : Tensor(Shape{model_.indicator_dim}));
    }
    lha::RoundOutcome out = g->server.aggregate(prev, local, indicators);
    for (std::size_t i = 0; i < g->members.size(); ++i)
      for (const std::string& layer : g->server.layers())
        sites_[g->members[i]].params.at(layer) = out.params[i].at(layer);

    json layers = json::array();
    for (const auto& d : out.layers) {
      json att = json::array();
      const std::size_t k = d.attention.dim(0);
      for (std::size_t r = 0; r < k; ++r) {
        std::vector<double> row(d.attention.data().begin() + static_cast<std::ptrdiff_t>(r * k),
                                d.attention.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * k));
        att.push_back(row);
      }
      layers.push_back(json{{"layer", d.layer}, {"attention", att}, {"gate_means", d.gate_means}});
    }
    json psi = json::array();
    for (std::size_t r = 0; r < out.psi.dim(0); ++r) {
      std::vector<double> row;
      for (std::size_t c = 0; c < out.psi.dim(1); ++c) row.push_back(out.psi[r * out.psi.dim(1) + c]);
      psi.push_back(row);
    }
    json entry{{"group", g->label},
               {"sites", g->members},
               {"psi_layers", g->server.layers()},
               {"psi", psi},
               {"surrogate_loss", out.surrogate_loss},
               {"psi_clamped", out.psi_clamped},
               {"layers", layers}};
    groups.push_back(std::move(entry));
  }
  log["lha"] = std::move(groups);
}

synth::SiteSpec site_spec(const ExperimentConfig& config, std::size_t site) {
  return synth::SiteSpec::make(config.data_seed(site), config.sites.at(site).task, config.model.height,
                               config.model.width);
}

bool ensure_site_dataset(const synth::SiteSpec& spec, std::size_t samples, const fs::path& dir) {
  if (fs::exists(dir / "manifest.json")) {
    try {
      synth::SiteDataset existing = synth::load_site_dataset(dir);
      if (synth::to_json(existing.spec) == synth::to_json(spec) &&
          existing.train.size() + existing.eval.size() == samples)
        return false;
    } catch (const FormatError&) {
      // damaged copy; regenerate below
    }
  }
  synth::generate_site_dataset(spec, samples, dir);
  return true;
}

std::vector<synth::SiteDataset> load_datasets(const ExperimentConfig& config, const fs::path& base) {
  std::vector<synth::SiteDataset> out;
  for (std::size_t k = 0; k < config.sites.size(); ++k) {
    const fs::path dir = config.site_dir(k, base);
    if (!fs::exists(dir / "manifest.json")) {
      throw MissingInputError("dataset for site '" + config.sites[k].name + "' not found at " + dir.string() +
                              " (run gen-data first)");
    }
    synth::SiteDataset ds = synth::load_site_dataset(dir);
    if (synth::to_json(ds.spec) != synth::to_json(site_spec(config, k)) ||
        ds.train.size() + ds.eval.size() != config.sites[k].samples) {
      throw ConfigError("dataset at " + dir.string() + " does not match the config for site '" +
                        config.sites[k].name + "' (regenerate with gen-data)");
    }
    out.push_back(std::move(ds));
  }
  return out;
}

json DeltaMReport::to_json() const {
  json s = json::object();
  for (const auto& [name, d] : sites) s[name] = d.to_json();
  return json{{"sites", s}, {"average", average}};
}

DeltaMReport compare_runs(const std::map<std::string, metrics::MetricSet>& run,
                          const std::map<std::string, metrics::MetricSet>& baseline) {
  if (run.empty()) throw MismatchError("run has no sites with metrics");
  DeltaMReport report;
  for (const auto& [name, m] : run) {
    auto it = baseline.find(name);
    if (it == baseline.end()) throw MismatchError("baseline has no site '" + name + "'");
    try {
      report.sites[name] = metrics::delta_m(m, it->second);
    } catch (const ContractViolation& e) {
      throw MismatchError("site '" + name + "': " + e.what());
    } catch (const InputError& e) {
      throw MismatchError("site '" + name + "': " + e.what());
    }
    report.average += report.sites[name].value;
  }
  if (baseline.size() != run.size()) throw MismatchError("baseline and run list different sites");
  report.average /= static_cast<double>(run.size());
  return report;
}

std::map<std::string, metrics::MetricSet> final_metrics(const fs::path& metrics_csv) {
  std::ifstream in(metrics_csv);
  if (!in) throw MissingInputError("cannot read " + metrics_csv.string());
  std::string line;
  if (!std::getline(in, line) || line != "round,site,metric,value") {
    throw FormatError(metrics_csv.string() + ": expected header round,site,metric,value");
  }
  struct Latest {
    long round = -1;
    std::map<std::string, double> values;
  };
  std::map<std::string, Latest> latest;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string round, site, metric, value;
    if (!std::getline(ss, round, ',') || !std::getline(ss, site, ',') || !std::getline(ss, metric, ',') ||
        !std::getline(ss, value)) {
      throw FormatError(metrics_csv.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
    long r;
    double v;
    try {
      r = std::stol(round);
      v = std::stod(value);
    } catch (const std::exception&) {
      throw FormatError(metrics_csv.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
    if (metric != "dice" && metric != "iou" && metric != "rmse") continue;
    Latest& l = latest[site];
    if (r > l.round) {
      l.round = r;
      l.values.clear();
    }
    if (r == l.round) l.values[metric] = v;
  }
  std::map<std::string, metrics::MetricSet> out;
  for (const auto& [site, l] : latest) {
    metrics::MetricSet m;
    for (const auto& [name, v] : l.values) m.add(name, v);
    out[site] = std::move(m);
  }
  return out;
}

json run_experiment(const ExperimentConfig& config_in, const fs::path& out, const RunOptions& options) {
  const std::string started = utc_timestamp();
  ExperimentConfig config = config_in;
  if (options.sequential) config.train.sequential = *options.sequential;
  Federation fed(config, load_datasets(config, options.base), options.base);

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create run directory " + out.string() + ": " + ec.message());
  write_text(out / "config.json", to_json(config).dump(2) + "\n");

  const std::size_t n = fed.sites().size();
  std::string csv = "round,site,metric,value\n";
  auto add_rows = [&](std::size_t round, const std::vector<std::map<std::string, double>>& m) {
    for (std::size_t k = 0; k < n; ++k)
      for (const auto& [name, v] : m[k])
        csv += std::to_string(round) + "," + fed.sites()[k].name + "," + name + "," + format_double(v) + "\n";
  };

  std::vector<std::map<std::string, double>> initial = fed.evaluate();
  const std::vector<double> initial_train = fed.train_losses();
  for (std::size_t k = 0; k < n; ++k) initial[k]["train_loss"] = initial_train[k];
  add_rows(0, initial);

  std::ofstream rounds(out / "rounds.jsonl", std::ios::binary | std::ios::trunc);
  if (!rounds) throw IoError("cannot write " + (out / "rounds.jsonl").string());
  json timings = json::array();
  std::vector<std::map<std::string, double>> last = initial;
  std::vector<std::size_t> clamped_rounds;
  for (std::size_t t = 1; t <= config.train.rounds; ++t) {
    RoundRecord rec = fed.run_round();
    rounds << rec.log.dump() << '\n';
    add_rows(rec.round, rec.metrics);
    timings.push_back(json{{"round", rec.round}, {"seconds", rec.seconds}});
    if (rec.log.contains("lha"))
      for (const auto& g : rec.log["lha"])
        if (g["psi_clamped"].get<std::size_t>() > 0) clamped_rounds.push_back(rec.round);
    last = std::move(rec.metrics);
  }
  rounds.close();
  if (!rounds) throw IoError("failed writing rounds.jsonl");
  const std::vector<double> final_train = fed.train_losses();

  if (options.write_checkpoints) {
    for (const SiteState& s : fed.sites()) {
      model::save_checkpoint(out / "checkpoints" / s.name, s.params,
                             json{{"site", s.name},
                                  {"task", model::to_json(s.task)},
                                  {"round", fed.round()},
                                  {"config_hash", fed.config_hash()}});
    }
  }
  write_text(out / "metrics.csv", csv);
  write_text(out / "timings.json", timings.dump(2) + "\n");

  json summary{{"name", config.name},
               {"method", to_string(config.method.method)},
               {"config_hash", fed.config_hash()},
               {"rounds", fed.round()}};
  json sites = json::array();
  for (std::size_t k = 0; k < n; ++k) {
    std::map<std::string, double> fin = last[k];
    fin.erase("train_loss");
    std::map<std::string, double> init = initial[k];
    init.erase("train_loss");
    sites.push_back(json{{"name", fed.sites()[k].name},
                         {"task", model::to_json(fed.sites()[k].task)},
                         {"initial", metrics_json(init)},
                         {"final", metrics_json(fin)},
                         {"train_loss", {{"initial", initial_train[k]}, {"final", final_train[k]}}}});
  }
  summary["sites"] = sites;
  json warnings = json::array();
  if (!clamped_rounds.empty()) warnings.push_back("psi clamped in rounds " + json(clamped_rounds).dump());
  if (config.baseline) {
    fs::path base_dir(*config.baseline);
    if (base_dir.is_relative() && !options.base.empty()) base_dir = options.base / base_dir;
    try {
      DeltaMReport report = compare_runs(final_metrics(out / "metrics.csv"), final_metrics(base_dir / "metrics.csv"));
      summary["delta_m"] = report.to_json();
      summary["delta_m"]["baseline"] = *config.baseline;
    } catch (const Error& e) {
      warnings.push_back(std::string("delta_m omitted: ") + e.what());
    }
  } else {
    warnings.push_back("delta_m omitted: no baseline run configured");
  }
  summary["warnings"] = warnings;
  write_text(out / "summary.json", summary.dump(2) + "\n");

  json files = json::array();
  std::vector<fs::path> paths;
  for (const auto& e : fs::recursive_directory_iterator(out))
    if (e.is_regular_file() && e.path().filename() != "run_manifest.json") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  for (const fs::path& p : paths) {
    files.push_back(json{{"path", fs::relative(p, out).generic_string()},
                         {"checksum", tdf::file_checksum(p)},
                         {"bytes", fs::file_size(p)}});
  }
  json manifest{{"run", config.name},
                {"config_hash", fed.config_hash()},
                {"version", version_string()},
                {"started", started},
                {"finished", utc_timestamp()},
                {"files", files}};
  write_text(out / "run_manifest.json", manifest.dump(2) + "\n");
  return summary;
}

bool verify_run(const fs::path& run_dir) {
  const fs::path manifest_path = run_dir / "run_manifest.json";
  if (!fs::exists(manifest_path)) return false;
  json manifest;
  try {
    std::ifstream in(manifest_path);
    manifest = json::parse(in);
    std::ifstream cin(run_dir / "config.json");
    if (!cin) throw MismatchError(run_dir.string() + ": config.json missing");
    const std::string hash = fedsurg::config_hash(config_from_json(json::parse(cin)));
    if (hash != manifest.at("config_hash").get<std::string>()) {
      throw MismatchError(run_dir.string() + ": config hash " + hash + " does not match manifest");
    }
    for (const json& f : manifest.at("files")) {
      const fs::path p = run_dir / f.at("path").get<std::string>();
      if (!fs::exists(p)) throw MismatchError(p.string() + " listed in manifest but missing");
      if (tdf::file_checksum(p) != f.at("checksum").get<std::string>()) {
        throw MismatchError(p.string() + " checksum differs from manifest");
      }
    }
  } catch (const json::exception& e) {
    throw MismatchError(manifest_path.string() + ": " + e.what());
  }
  return true;
}

int configure_threads() {
  if (const char* env = std::getenv("FEDSURG_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n <= 0) throw ConfigError("FEDSURG_THREADS must be a positive integer");
    omp_set_num_threads(static_cast<int>(n));
  }
  return omp_get_max_threads();
}

std::string version_string() { return FEDSURG_VERSION; }

}  // namespace fedsurg::runtime
