// Command line front end for the recurrence-time estimation harness.
//
// Subcommands:
//   run      execute one experiment and write trace.csv / summary.json
//   sweep    run many replicates and additionally emit per-seed CSV files
//   trace    follow the estimator on a repeating pattern, print rows
//   summary  recompute the summary report from a written trace.csv
//
// Exit codes: 0 success, 1 malformed configuration, 2 budget exhausted
// before min_level, 3 internal invariant violation, 4 anything else.

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stoptime/estimator.hpp"
#include "stoptime/harness.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::string preset_name;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

void add_config_options(CLI::App* cmd, CommonOptions& opts) {
  auto* config =
      cmd->add_option("--config", opts.config_path, "Experiment config JSON");
  auto* preset = cmd->add_option("--preset", opts.preset_name,
                                 "Named preset instead of a config file");
  config->excludes(preset);
  cmd->add_option("--seed", opts.seed, "Override the base seed");
  cmd->add_option("--threads", opts.threads,
                  "Worker threads (0 = hardware default)");
}

stoptime::ExperimentConfig resolve_config(const CommonOptions& opts) {
  if (opts.config_path.empty() == opts.preset_name.empty())
    throw stoptime::ConfigError("give exactly one of --config or --preset");
  stoptime::ExperimentConfig cfg =
      opts.config_path.empty() ? stoptime::preset(opts.preset_name)
                               : stoptime::load_config_file(opts.config_path);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.threads) cfg.threads = *opts.threads;
  return cfg;
}

void report(const stoptime::ExperimentOutput& out) {
  std::cout << "wrote " << (out.directory / "trace.csv").string() << " ("
            << out.summary.rows << " rows, " << out.summary.replicates
            << " replicates)\n";
  std::cout << "deepest common level: " << out.summary.deepest_common_level
            << "\n";
  if (out.summary.stationarity) {
    const auto& s = *out.summary.stationarity;
    std::cout << "stationarity tv at level " << s.level << ": "
              << s.tv_distance << (s.pass ? " (pass)" : " (fail)") << "\n";
  }
}

int run_trace(const std::string& pattern_text, int levels,
              std::int64_t budget) {
  stoptime::ExperimentConfig cfg;
  cfg.name = "trace";
  cfg.source.kind = stoptime::SourceSpec::Kind::replay;
  std::size_t start = 0;
  while (start <= pattern_text.size()) {
    std::size_t pos = pattern_text.find(',', start);
    std::string item = pattern_text.substr(
        start, pos == std::string::npos ? std::string::npos : pos - start);
    if (item.empty())
      throw stoptime::ConfigError("empty entry in --pattern");
    try {
      cfg.source.pattern.push_back(stoptime::DyadicValue::parse(item));
    } catch (const std::exception& e) {
      throw stoptime::ConfigError("bad --pattern entry '" + item +
                                  "': " + e.what());
    }
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  if (cfg.source.pattern.empty())
    throw stoptime::ConfigError("--pattern is empty");
  cfg.max_level = levels;
  cfg.min_level = levels;
  cfg.budget = budget;
  cfg.run_exact_variant = true;
  cfg.verify_matcher = true;

  stoptime::ReplicateResult res = stoptime::run_replicate(cfg, 0);
  std::cout << stoptime::trace_csv_header() << "\n";
  for (const auto& row : res.quantized_rows)
    std::cout << stoptime::to_csv_row(row) << "\n";
  for (const auto& row : res.exact_rows)
    std::cout << stoptime::to_csv_row(row) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Estimation of conditional means along recurrence times"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(stoptime::kArtifactVersion));

  CommonOptions run_opts;
  auto* run_cmd = app.add_subcommand("run", "Run one experiment");
  add_config_options(run_cmd, run_opts);
  run_cmd->add_option("--out", run_opts.out_dir, "Output directory")
      ->required();

  CommonOptions sweep_opts;
  std::int64_t sweep_seeds = 0;
  auto* sweep_cmd =
      app.add_subcommand("sweep", "Run a seed sweep with per-seed CSVs");
  add_config_options(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--seeds", sweep_seeds, "Number of replicates")
      ->required()
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--out", sweep_opts.out_dir, "Output directory")
      ->required();

  std::string trace_pattern;
  int trace_levels = 0;
  std::int64_t trace_budget = 100000;
  auto* trace_cmd =
      app.add_subcommand("trace", "Follow the estimator on a repeating pattern");
  trace_cmd
      ->add_option("--pattern", trace_pattern,
                   "Comma separated values, repeated cyclically")
      ->required();
  trace_cmd->add_option("--levels", trace_levels, "Levels to complete")
      ->required()
      ->check(CLI::PositiveNumber);
  trace_cmd->add_option("--budget", trace_budget, "Sample budget");

  std::string summary_in;
  auto* summary_cmd =
      app.add_subcommand("summary", "Summarize a written trace.csv");
  summary_cmd->add_option("--in", summary_in, "Directory holding trace.csv")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      report(stoptime::run_experiment(resolve_config(run_opts),
                                      run_opts.out_dir, false));
    } else if (*sweep_cmd) {
      stoptime::ExperimentConfig cfg = resolve_config(sweep_opts);
      cfg.replicates = sweep_seeds;
      report(stoptime::run_experiment(cfg, sweep_opts.out_dir, true));
    } else if (*trace_cmd) {
      return run_trace(trace_pattern, trace_levels, trace_budget);
    } else if (*summary_cmd) {
      auto rows = stoptime::read_trace_csv(
          std::filesystem::path(summary_in) / "trace.csv");
      auto summary = stoptime::summarize(rows);
      std::cout << stoptime::summary_to_json(summary).dump(2) << "\n";
    }
  } catch (const stoptime::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const stoptime::BudgetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const stoptime::InvariantError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
