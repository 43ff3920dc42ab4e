// sep/tune.hpp
//
// Hyper-parameter machinery: error/energy ratios, the gamma sweep, the
// mu search and the full one-vs-rest training orchestration.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "sep/masknet.hpp"
#include "sep/signal.hpp"

namespace sep {

struct HyperParams {
  double gamma = 0.1;  // fixed value in joint mode, tuned result in df mode
  double mu = 0.0;
  double gamma_min = 0.1;
  double gamma_max = 0.5;
  double gamma_step = 0.1;
  std::vector<double> mu_set = {0.1, 0.5, 1.0, 2.0, 5.0, 10.0};
  double rs_min = 8.0;
  double energy_fraction = 0.95;

  void validate() const;  // mu_set strictly ascending, positive step, ...
};

struct Arch {
  int h1 = 150;
  int h2 = 150;
};

struct GammaStep {
  double gamma = 0.0;
  double r_e = 0.0;
  int epochs_run = 0;
  double final_loss = 0.0;
};

struct MuStep {
  double mu = 0.0;
  double r_s = 0.0;
  double r_n = 0.0;
  int epochs_run = 0;
  double final_loss = 0.0;
};

struct ProbeNorms {
  double y_ss = 0.0;  // |source head output| on source input
  double y_sn = 0.0;  // |interferer head output| on source input
  double y_ns = 0.0;  // |source head output| on interferer input
  double y_nn = 0.0;  // |interferer head output| on interferer input
};

struct TuneTrace {
  std::vector<double> gamma_grid;
  std::vector<double> re_values;
  std::vector<GammaStep> gamma_steps;
  std::vector<MuStep> mu_steps;
  double chosen_gamma = 0.0;
  double chosen_mu = 0.0;
  bool mu_exhausted = false;  // no stop clause fired before the set ran out
  ProbeNorms probe_norms;     // from the final trained model
};

// Ratio guards: denominators get +1e-12, results are capped at 1e12.
double ratio_guarded(double num, double den);

// r_e = |Yn - ytilde_ns| / |Ys - ytilde_ss| from recorded probe outputs.
double error_ratio_from_probes(const Eigen::MatrixXd& ys,
                               const Eigen::MatrixXd& yn,
                               const Eigen::MatrixXd& y_tilde_ss,
                               const Eigen::MatrixXd& y_tilde_ns);

// r_s = |ytilde_ss| / |ytilde_sn|, r_n = |ytilde_nn| / |ytilde_ns|.
std::pair<double, double> energy_ratios_from_probes(
    const Eigen::MatrixXd& y_tilde_ss, const Eigen::MatrixXd& y_tilde_sn,
    const Eigen::MatrixXd& y_tilde_ns, const Eigen::MatrixXd& y_tilde_nn);

// Probe the trained model with Ys and Yn as inputs.
double error_ratio(const MaskNetModel& model, const Eigen::MatrixXd& ys,
                   const Eigen::MatrixXd& yn);
std::pair<double, double> energy_ratios(const MaskNetModel& model,
                                        const Eigen::MatrixXd& ys,
                                        const Eigen::MatrixXd& yn);
ProbeNorms probe_norms(const MaskNetModel& model, const Eigen::MatrixXd& ys,
                       const Eigen::MatrixXd& yn);

// gamma_min, gamma_min+step, ..., gamma_max (inclusive).
std::vector<double> gamma_grid(const HyperParams& hp);

// First index of the maximum (ties break to the smaller gamma).
std::size_t select_gamma_index(const std::vector<double>& re_values);

// Search cores, decoupled from real training so the selection logic is
// testable against scripted evaluators.
using GammaEval = std::function<GammaStep(double gamma, std::size_t index)>;
using MuEval = std::function<MuStep(double mu, std::size_t index)>;

double sweep_gamma_core(const std::vector<double>& grid, const GammaEval& eval,
                        TuneTrace& trace);

// Walks mu_set in ascending order; stops when
//   (L-1)*r_s <= r_n  OR  r_s <= rs_min  OR  the set is exhausted.
// Returns the mu at which the stop fired. With visit_all the rule is still
// evaluated (and recorded) but every mu gets trained, for trend diagnostics.
double find_mu_core(const std::vector<double>& mu_set, int num_sources,
                    double rs_min, const MuEval& eval, bool visit_all,
                    TuneTrace& trace);

// Real searches. The gamma sweep trains fresh models on source features Ys
// with mu = 0; find_mu trains on the mixture features X. Candidate k uses
// seed cfg.seed + k so the whole search is deterministic.
double sweep_gamma(const Eigen::MatrixXd& ys, const Eigen::MatrixXd& yn,
                   const Eigen::MatrixXd& yn_orth, const Arch& arch,
                   const HyperParams& hp, const TrainConfig& cfg,
                   TuneTrace& trace);

double find_mu(const Eigen::MatrixXd& ys, const Eigen::MatrixXd& yn,
               const Eigen::MatrixXd& yn_orth, const Eigen::MatrixXd& x,
               double gamma, int num_sources, const Arch& arch,
               const HyperParams& hp, const TrainConfig& cfg,
               TuneTrace& trace, bool visit_all = false);

struct DfTrainResult {
  MaskNetModel model;
  HyperParams tuned;
  TuneTrace trace;
};

// Full pipeline for one target: gamma sweep, mu search, final training at
// (gamma*, mu*) on the mixture features.
DfTrainResult train_df_dnn(const Eigen::MatrixXd& ys, const Eigen::MatrixXd& yn,
                           const Eigen::MatrixXd& x, int num_sources,
                           const Arch& arch, const HyperParams& hp,
                           const TrainConfig& cfg, bool visit_all_mu = false);

// Convenience entry from time-domain training sources: Ys is the magnitude
// STFT of source j, Yn of the summed remaining sources, X of the full sum.
DfTrainResult train_df_dnn(const std::vector<TimeSignal>& sources_train,
                           std::size_t target_index, const StftConfig& stft_cfg,
                           const Arch& arch, const HyperParams& hp,
                           const TrainConfig& cfg, bool visit_all_mu = false);

// Source-head masked magnitude on the mixture, reconstructed with the
// mixture's phase.
TimeSignal separate_one(const MaskNetModel& model, const TimeSignal& mixture,
                        const StftConfig& stft_cfg);

// One estimate per model (one-vs-rest); estimates are not constrained to sum
// to the mixture.
std::vector<TimeSignal> separate_all(const std::vector<MaskNetModel>& models,
                                     const TimeSignal& mixture,
                                     const StftConfig& stft_cfg);

// Both heads of a jointly trained two-source network.
std::pair<TimeSignal, TimeSignal> separate_both(const MaskNetModel& model,
                                                const TimeSignal& mixture,
                                                const StftConfig& stft_cfg);

}  // namespace sep
