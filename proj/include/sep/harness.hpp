// sep/harness.hpp
//
// Experiment front door: JSON configuration, presets, the bundled synthetic
// fixture, orchestration of both training modes and report emission.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sep/bss.hpp"
#include "sep/synth.hpp"
#include "sep/tune.hpp"

namespace sep {

enum class Mode { kDfDnn, kJoint };

struct SourceSpec {
  std::optional<std::string> wav_path;  // exactly one of wav_path / synth
  std::optional<SynthSpec> synth;
  double train_fraction = 0.75;  // leading fraction trains, the rest tests
};

struct ExperimentConfig {
  std::vector<SourceSpec> sources;
  StftConfig stft;
  Arch arch;
  TrainConfig train;
  HyperParams hyper;
  Mode mode = Mode::kDfDnn;
  uint64_t base_seed = 42;
  std::string output_dir = "out";

  int num_sources() const { return static_cast<int>(sources.size()); }
  void validate() const;  // L >= 2; joint mode requires L == 2
};

// Raised for anything wrong with a config (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised by pipeline stages, tagged with the stage name (CLI exit code 3).
struct StageError : std::runtime_error {
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_name(stage) {}
  std::string stage_name;
};

struct SourceReport {
  HyperParams tuned;   // df mode only
  TuneTrace trace;     // df mode only
  BssScore score;
};

struct ExperimentReport {
  Mode mode = Mode::kDfDnn;
  std::vector<SourceReport> sources;
  BssScore average;
  std::map<std::string, double> stage_seconds;
};

// Presets: "desk" (8 kHz, 256-sample window, 64/64), "timit-like"
// (16 kHz, 512, 150/150), "tsp-like" (44.1 kHz, 1024, 300/300).
void apply_preset(const std::string& name, ExperimentConfig& cfg);

// Bundled 2-source fixture: low-band harmonic vs high-band noise, desk preset.
ExperimentConfig desk_fixture(uint64_t seed);

// Parse a JSON config file / string. Unknown keys are rejected.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

// Full pipeline: load or synthesize sources, split, build 0 dB mixtures,
// train (df-dnn or joint), separate the test mixture, score, write report,
// checkpoints, traces and estimate WAVs under cfg.output_dir.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

struct CompareReport {
  ExperimentReport df;
  ExperimentReport joint;
};

// Both modes on identical data and seeds (L == 2).
CompareReport compare_experiment(const ExperimentConfig& cfg);

// Write one WAV per source spec into out_dir; returns the paths.
std::vector<std::string> synth_to_dir(const ExperimentConfig& cfg,
                                      const std::string& out_dir);

// Score pre-rendered estimates against references (the CLI `eval` command).
EvalResult eval_wavs(const std::vector<std::string>& estimate_paths,
                     const std::vector<std::string>& reference_paths);

// Report serialization. report_json leaves wall-clock out; timings_json
// carries the per-stage seconds.
std::string report_json(const ExperimentReport& report);
std::string timings_json(const ExperimentReport& report);
std::string scores_csv(const ExperimentReport& report);
std::string compare_table(const CompareReport& cmp);
std::string trace_json(const TuneTrace& trace);
std::string format_trace(const TuneTrace& trace);  // inspect-trace output
TuneTrace parse_trace_json(const std::string& text);

}  // namespace sep
