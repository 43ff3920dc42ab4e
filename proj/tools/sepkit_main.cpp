// sepkit command line: synth / run / compare / eval / inspect-trace.
// Exit codes: 0 success, 2 config error, 3 runtime failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "sep/harness.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  uint64_t seed = 42;
  bool seed_given = false;
  std::string preset;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON experiment config");
  cmd->add_option("--out", opts.out_dir, "output directory override");
  cmd->add_option("--seed", opts.seed, "base seed override")
      ->each([&opts](const std::string&) { opts.seed_given = true; });
  cmd->add_option("--preset", opts.preset,
                  "stft/arch preset: desk, timit-like, tsp-like")
      ->check(CLI::IsMember({"desk", "timit-like", "tsp-like"}));
}

// No config file means the bundled synthetic fixture.
sep::ExperimentConfig resolve_config(const CommonOpts& opts) {
  sep::ExperimentConfig cfg;
  if (opts.config_path.empty()) {
    cfg = sep::desk_fixture(opts.seed);
  } else {
    cfg = sep::parse_config_file(opts.config_path);
    if (opts.seed_given) cfg.base_seed = opts.seed;
  }
  if (!opts.preset.empty()) sep::apply_preset(opts.preset, cfg);
  if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
  return cfg;
}

void print_scores(const sep::ExperimentReport& report) {
  std::cout << sep::scores_csv(report);
  std::cout << "artifacts in place; see report.json for tuned parameters\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sepkit: one-source-at-a-time separation toolkit"};
  app.require_subcommand(1);

  CommonOpts run_opts, compare_opts, synth_opts;
  CLI::App* run_cmd = app.add_subcommand("run", "train, separate and score");
  add_common(run_cmd, run_opts);

  CLI::App* compare_cmd =
      app.add_subcommand("compare", "run df-dnn and joint on the same data");
  add_common(compare_cmd, compare_opts);

  CLI::App* synth_cmd =
      app.add_subcommand("synth", "render the configured sources to WAV");
  add_common(synth_cmd, synth_opts);

  std::vector<std::string> estimate_paths, reference_paths;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "score estimate WAVs against references");
  eval_cmd->add_option("--estimates", estimate_paths, "estimated WAVs")
      ->required();
  eval_cmd->add_option("--references", reference_paths, "reference WAVs")
      ->required();

  std::string trace_path;
  CLI::App* inspect_cmd =
      app.add_subcommand("inspect-trace", "pretty-print a tuning trace");
  inspect_cmd->add_option("trace", trace_path, "trace JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run_cmd->parsed()) {
      const sep::ExperimentConfig cfg = resolve_config(run_opts);
      const sep::ExperimentReport report = sep::run_experiment(cfg);
      print_scores(report);
    } else if (compare_cmd->parsed()) {
      const sep::ExperimentConfig cfg = resolve_config(compare_opts);
      const sep::CompareReport cmp = sep::compare_experiment(cfg);
      std::cout << sep::compare_table(cmp);
    } else if (synth_cmd->parsed()) {
      const sep::ExperimentConfig cfg = resolve_config(synth_opts);
      const std::string out =
          synth_opts.out_dir.empty() ? cfg.output_dir : synth_opts.out_dir;
      for (const auto& path : sep::synth_to_dir(cfg, out))
        std::cout << path << "\n";
    } else if (eval_cmd->parsed()) {
      const sep::EvalResult eval =
          sep::eval_wavs(estimate_paths, reference_paths);
      std::cout << "source_index,sdr_db,sir_db,sar_db\n";
      std::cout.precision(6);
      for (std::size_t j = 0; j < eval.per_source.size(); ++j)
        std::cout << j << ',' << eval.per_source[j].sdr_db << ','
                  << eval.per_source[j].sir_db << ','
                  << eval.per_source[j].sar_db << '\n';
      std::cout << "average," << eval.average.sdr_db << ','
                << eval.average.sir_db << ',' << eval.average.sar_db << '\n';
    } else if (inspect_cmd->parsed()) {
      std::ifstream is(trace_path);
      if (!is) throw std::runtime_error("cannot open " + trace_path);
      std::stringstream ss;
      ss << is.rdbuf();
      std::cout << sep::format_trace(sep::parse_trace_json(ss.str()));
    }
  } catch (const sep::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
