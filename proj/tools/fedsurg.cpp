// fedsurg: generate site data, run experiments, compare runs, plot curves.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 config, 3 I/O, 4 missing input,
// 5 semantic mismatch.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedsurg/config.hpp"
#include "fedsurg/errors.hpp"
#include "fedsurg/plot.hpp"
#include "fedsurg/runtime.hpp"

namespace fs = std::filesystem;
using namespace fedsurg;

namespace {

enum Exit { ok = 0, failure = 1, config_error = 2, io_error = 3, missing_input = 4, mismatch = 5 };

fs::path config_base(const fs::path& config_path) {
  const fs::path parent = config_path.parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

ExperimentConfig load(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  return load_config(path);
}

int gen_data(const std::string& config_path, const std::string& out) {
  ExperimentConfig config = load(config_path);
  const fs::path base = config_base(config_path);
  for (std::size_t k = 0; k < config.sites.size(); ++k) {
    const fs::path dir = out.empty() ? config.site_dir(k, base) : fs::path(out) / config.sites[k].name;
    const synth::SiteSpec spec = runtime::site_spec(config, k);
    const bool written = runtime::ensure_site_dataset(spec, config.sites[k].samples, dir);
    const auto split = synth::split_assignment(spec.site_seed, config.sites[k].samples);
    const auto train = static_cast<std::size_t>(std::count(split.begin(), split.end(), true));
    std::printf("%-16s %zu samples (%zu train, %zu eval) %s %s\n", config.sites[k].name.c_str(),
                config.sites[k].samples, train, config.sites[k].samples - train,
                written ? "written to" : "up to date in", dir.string().c_str());
  }
  return ok;
}

int run(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed, bool sequential,
        const std::string& data) {
  ExperimentConfig config = load(config_path);
  if (seed) config.train.seed = *seed;
  runtime::RunOptions options;
  options.base = config_base(config_path);
  if (!data.empty()) config.data.root = fs::absolute(data).string();
  if (sequential) options.sequential = true;
  const int threads = runtime::configure_threads();
  std::fprintf(stderr, "run %s: method %s, %zu sites, T=%zu, E=%zu, %d thread(s)\n", config.name.c_str(),
               std::string(to_string(config.method.method)).c_str(), config.sites.size(), config.train.rounds,
               config.train.epochs, threads);
  const nlohmann::json summary = runtime::run_experiment(config, out, options);
  for (const auto& site : summary.at("sites")) {
    std::printf("%-16s", site.at("name").get<std::string>().c_str());
    for (const auto& [name, value] : site.at("final").items()) std::printf("  %s=%.4f", name.c_str(), value.get<double>());
    std::printf("\n");
  }
  if (summary.contains("delta_m")) std::printf("delta_m average %.2f\n", summary["delta_m"]["average"].get<double>());
  for (const auto& w : summary.at("warnings")) std::fprintf(stderr, "warning: %s\n", w.get<std::string>().c_str());
  return ok;
}

int delta_m(const std::string& run_dir, const std::string& baseline_dir, const std::string& out) {
  runtime::verify_run(run_dir);
  runtime::verify_run(baseline_dir);
  const runtime::DeltaMReport report = runtime::compare_runs(runtime::final_metrics(fs::path(run_dir) / "metrics.csv"),
                                                             runtime::final_metrics(fs::path(baseline_dir) / "metrics.csv"));
  for (const auto& [site, d] : report.sites) std::printf("%-16s %+.2f\n", site.c_str(), d.value);
  std::printf("%-16s %+.2f\n", "average", report.average);
  nlohmann::json j = report.to_json();
  j["run"] = run_dir;
  j["baseline"] = baseline_dir;
  const fs::path path = out.empty() ? fs::path(run_dir) / "delta_m.json" : fs::path(out);
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << '\n';
  if (!f) throw IoError("failed writing " + path.string());
  return ok;
}

int plot_runs(const std::vector<std::string>& runs, const std::string& metric, const std::string& out) {
  std::vector<plot::Series> series;
  for (const std::string& r : runs) series.push_back(plot::load_series(r, metric));
  // keep legend labels distinct
  for (std::size_t i = 0; i < series.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (series[j].label == series[i].label) {
        series[i].label += " (" + std::to_string(i + 1) + ")";
        break;
      }
    }
  }
  std::ofstream f(out);
  if (!f) throw IoError("cannot write " + out);
  f << plot::render_svg(series, metric);
  if (!f) throw IoError("failed writing " + out);
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated multi-task training simulator on synthetic surgical scenes"};
  app.set_version_flag("--version", runtime::version_string());
  app.require_subcommand(1);

  std::string config_path, out, data, run_dir, baseline_dir, metric;
  std::vector<std::string> runs;
  std::uint64_t seed = 0;
  bool sequential = false;

  auto* gen = app.add_subcommand("gen-data", "Generate every site dataset named by a config");
  gen->add_option("--config", config_path, "Experiment config (JSON)")->required();
  gen->add_option("--out", out, "Data root; defaults to data.root of the config");

  auto* run_cmd = app.add_subcommand("run", "Run one federated experiment");
  run_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run_cmd->add_option("--out", out, "Run directory")->required();
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Override train.seed");
  run_cmd->add_flag("--sequential", sequential, "Train sites one after another (byte-reproducible)");
  run_cmd->add_option("--data", data, "Data root; defaults to data.root of the config");

  auto* dm = app.add_subcommand("delta-m", "Relative improvement of a run over a baseline run");
  dm->add_option("--run", run_dir, "Run directory")->required();
  dm->add_option("--baseline", baseline_dir, "Baseline run directory")->required();
  dm->add_option("--out", out, "Report path; defaults to <run>/delta_m.json");

  auto* pl = app.add_subcommand("plot", "SVG line chart of a metric over rounds");
  pl->add_option("--run", runs, "Run directories")->required();
  pl->add_option("--metric", metric, "Metric name, e.g. dice, iou, rmse, train_loss")->required();
  pl->add_option("--out", out, "Output SVG file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : config_error;
  }

  try {
    if (*gen) return gen_data(config_path, out);
    if (*run_cmd) {
      std::optional<std::uint64_t> s;
      if (*seed_opt) s = seed;
      return run(config_path, out, s, sequential, data);
    }
    if (*dm) return delta_m(run_dir, baseline_dir, out);
    if (*pl) return plot_runs(runs, metric, out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return config_error;
  } catch (const MissingInputError& e) {
    std::fprintf(stderr, "missing input: %s\n", e.what());
    return missing_input;
  } catch (const MismatchError& e) {
    std::fprintf(stderr, "mismatch: %s\n", e.what());
    return mismatch;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return io_error;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return io_error;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return failure;
  }
  return failure;
}
