#include "sep/tune.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "sep/subspace.hpp"

namespace sep {

namespace {

constexpr double kRatioEps = 1e-12;
constexpr double kRatioCap = 1e12;

TrainConfig with_seed(const TrainConfig& cfg, uint64_t seed) {
  TrainConfig out = cfg;
  out.seed = seed;
  return out;
}

Objective df_objective(const Eigen::MatrixXd& ys, const Eigen::MatrixXd& yn,
                       const Eigen::MatrixXd& yn_orth, double gamma, double mu) {
  Objective obj;
  obj.kind = ObjectiveKind::kDfDnn;
  obj.gamma = gamma;
  obj.mu = mu;
  obj.y1 = ys;
  obj.y2 = yn;
  obj.y2_orth = yn_orth;
  return obj;
}

}  // namespace

void HyperParams::validate() const {
  if (gamma_step <= 0.0)
    throw std::invalid_argument("HyperParams: gamma_step must be positive");
  if (gamma_min > gamma_max)
    throw std::invalid_argument("HyperParams: gamma_min must be <= gamma_max");
  if (mu_set.empty()) throw std::invalid_argument("HyperParams: empty mu_set");
  for (std::size_t i = 1; i < mu_set.size(); ++i)
    if (mu_set[i] <= mu_set[i - 1])
      throw std::invalid_argument("HyperParams: mu_set must be strictly ascending");
  if (!(energy_fraction > 0.0 && energy_fraction <= 1.0))
    throw std::invalid_argument("HyperParams: energy_fraction must be in (0, 1]");
}

double ratio_guarded(double num, double den) {
  return std::min(num / (den + kRatioEps), kRatioCap);
}

double error_ratio_from_probes(const Eigen::MatrixXd& ys,
                               const Eigen::MatrixXd& yn,
                               const Eigen::MatrixXd& y_tilde_ss,
                               const Eigen::MatrixXd& y_tilde_ns) {
  return ratio_guarded((yn - y_tilde_ns).norm(), (ys - y_tilde_ss).norm());
}

std::pair<double, double> energy_ratios_from_probes(
    const Eigen::MatrixXd& y_tilde_ss, const Eigen::MatrixXd& y_tilde_sn,
    const Eigen::MatrixXd& y_tilde_ns, const Eigen::MatrixXd& y_tilde_nn) {
  return {ratio_guarded(y_tilde_ss.norm(), y_tilde_sn.norm()),
          ratio_guarded(y_tilde_nn.norm(), y_tilde_ns.norm())};
}

double error_ratio(const MaskNetModel& model, const Eigen::MatrixXd& ys,
                   const Eigen::MatrixXd& yn) {
  const NetOutputs on_source = forward(model, ys);
  const NetOutputs on_interferer = forward(model, yn);
  return error_ratio_from_probes(ys, yn, on_source.y_tilde_s,
                                 on_interferer.y_tilde_s);
}

std::pair<double, double> energy_ratios(const MaskNetModel& model,
                                        const Eigen::MatrixXd& ys,
                                        const Eigen::MatrixXd& yn) {
  const NetOutputs on_source = forward(model, ys);
  const NetOutputs on_interferer = forward(model, yn);
  return energy_ratios_from_probes(on_source.y_tilde_s, on_source.y_tilde_n,
                                   on_interferer.y_tilde_s,
                                   on_interferer.y_tilde_n);
}

ProbeNorms probe_norms(const MaskNetModel& model, const Eigen::MatrixXd& ys,
                       const Eigen::MatrixXd& yn) {
  const NetOutputs on_source = forward(model, ys);
  const NetOutputs on_interferer = forward(model, yn);
  ProbeNorms norms;
  norms.y_ss = on_source.y_tilde_s.norm();
  norms.y_sn = on_source.y_tilde_n.norm();
  norms.y_ns = on_interferer.y_tilde_s.norm();
  norms.y_nn = on_interferer.y_tilde_n.norm();
  return norms;
}

std::vector<double> gamma_grid(const HyperParams& hp) {
  hp.validate();
  const int count =
      static_cast<int>(std::floor((hp.gamma_max - hp.gamma_min) / hp.gamma_step +
                                  1e-9)) +
      1;
  std::vector<double> grid(count);
  for (int i = 0; i < count; ++i) {
    const double v = hp.gamma_min + i * hp.gamma_step;
    grid[i] = std::round(v * 1e12) / 1e12;  // drop accumulation dust
  }
  return grid;
}

std::size_t select_gamma_index(const std::vector<double>& re_values) {
  if (re_values.empty())
    throw std::invalid_argument("select_gamma_index: empty grid");
  std::size_t best = 0;
  for (std::size_t i = 1; i < re_values.size(); ++i)
    if (re_values[i] > re_values[best]) best = i;
  return best;
}

double sweep_gamma_core(const std::vector<double>& grid, const GammaEval& eval,
                        TuneTrace& trace) {
  if (grid.empty()) throw std::invalid_argument("sweep_gamma: empty grid");
  trace.gamma_grid = grid;
  trace.re_values.clear();
  trace.gamma_steps.clear();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    GammaStep step = eval(grid[i], i);
    step.gamma = grid[i];
    trace.re_values.push_back(step.r_e);
    trace.gamma_steps.push_back(step);
  }
  trace.chosen_gamma = grid[select_gamma_index(trace.re_values)];
  return trace.chosen_gamma;
}

double find_mu_core(const std::vector<double>& mu_set, int num_sources,
                    double rs_min, const MuEval& eval, bool visit_all,
                    TuneTrace& trace) {
  if (mu_set.empty()) throw std::invalid_argument("find_mu: empty mu_set");
  if (num_sources < 2)
    throw std::invalid_argument("find_mu: need at least 2 sources");

  trace.mu_steps.clear();
  bool ratio_clause_fired = false;
  double chosen = mu_set.back();
  for (std::size_t k = 0; k < mu_set.size(); ++k) {
    MuStep step = eval(mu_set[k], k);
    step.mu = mu_set[k];
    trace.mu_steps.push_back(step);
    const bool stop = (num_sources - 1) * step.r_s <= step.r_n ||
                      step.r_s <= rs_min;
    if (stop && !ratio_clause_fired) {
      ratio_clause_fired = true;
      chosen = mu_set[k];
      if (!visit_all) break;
    }
    if (!visit_all && k + 1 == mu_set.size()) break;  // k == l clause
  }
  trace.mu_exhausted = !ratio_clause_fired;
  trace.chosen_mu = chosen;
  return chosen;
}

double sweep_gamma(const Eigen::MatrixXd& ys, const Eigen::MatrixXd& yn,
                   const Eigen::MatrixXd& yn_orth, const Arch& arch,
                   const HyperParams& hp, const TrainConfig& cfg,
                   TuneTrace& trace) {
  const int bins = static_cast<int>(ys.rows());
  const GammaEval eval = [&](double gamma, std::size_t index) {
    const MaskNetModel model = init_model(bins, arch.h1, arch.h2,
                                          cfg.seed + index);
    // the sweep trains on the source features with mu pinned to 0
    const TrainResult trained =
        train(model, ys, df_objective(ys, yn, yn_orth, gamma, 0.0),
              with_seed(cfg, cfg.seed + index));
    GammaStep step;
    step.r_e = error_ratio(trained.model, ys, yn);
    step.epochs_run = trained.epochs_run;
    step.final_loss = trained.loss_trace.empty() ? 0.0 : trained.loss_trace.back();
    return step;
  };
  return sweep_gamma_core(gamma_grid(hp), eval, trace);
}

double find_mu(const Eigen::MatrixXd& ys, const Eigen::MatrixXd& yn,
               const Eigen::MatrixXd& yn_orth, const Eigen::MatrixXd& x,
               double gamma, int num_sources, const Arch& arch,
               const HyperParams& hp, const TrainConfig& cfg,
               TuneTrace& trace, bool visit_all) {
  hp.validate();
  const int bins = static_cast<int>(ys.rows());
  const MuEval eval = [&](double mu, std::size_t index) {
    const MaskNetModel model = init_model(bins, arch.h1, arch.h2,
                                          cfg.seed + index);
    const TrainResult trained =
        train(model, x, df_objective(ys, yn, yn_orth, gamma, mu),
              with_seed(cfg, cfg.seed + index));
    const auto [r_s, r_n] = energy_ratios(trained.model, ys, yn);
    MuStep step;
    step.r_s = r_s;
    step.r_n = r_n;
    step.epochs_run = trained.epochs_run;
    step.final_loss = trained.loss_trace.empty() ? 0.0 : trained.loss_trace.back();
    return step;
  };
  return find_mu_core(hp.mu_set, num_sources, hp.rs_min, eval, visit_all, trace);
}

DfTrainResult train_df_dnn(const Eigen::MatrixXd& ys, const Eigen::MatrixXd& yn,
                           const Eigen::MatrixXd& x, int num_sources,
                           const Arch& arch, const HyperParams& hp,
                           const TrainConfig& cfg, bool visit_all_mu) {
  hp.validate();
  if (num_sources < 2)
    throw std::invalid_argument("train_df_dnn: need at least 2 sources");
  if (ys.rows() != yn.rows() || ys.rows() != x.rows())
    throw std::invalid_argument("train_df_dnn: bin count mismatch");

  DfTrainResult result;
  const Eigen::MatrixXd yn_orth = find_orth(ys, yn, hp.energy_fraction);

  const double gamma_star =
      sweep_gamma(ys, yn, yn_orth, arch, hp, cfg, result.trace);
  const double mu_star = find_mu(ys, yn, yn_orth, x, gamma_star, num_sources,
                                 arch, hp, cfg, result.trace, visit_all_mu);

  const int bins = static_cast<int>(ys.rows());
  const MaskNetModel fresh = init_model(bins, arch.h1, arch.h2, cfg.seed);
  const TrainResult final_run =
      train(fresh, x, df_objective(ys, yn, yn_orth, gamma_star, mu_star), cfg);

  result.model = final_run.model;
  result.tuned = hp;
  result.tuned.gamma = gamma_star;
  result.tuned.mu = mu_star;
  result.trace.probe_norms = probe_norms(result.model, ys, yn);
  return result;
}

DfTrainResult train_df_dnn(const std::vector<TimeSignal>& sources_train,
                           std::size_t target_index, const StftConfig& stft_cfg,
                           const Arch& arch, const HyperParams& hp,
                           const TrainConfig& cfg, bool visit_all_mu) {
  if (sources_train.size() < 2)
    throw std::invalid_argument("train_df_dnn: need at least 2 sources");
  if (target_index >= sources_train.size())
    throw std::invalid_argument("train_df_dnn: target index out of range");
  const std::size_t len = sources_train.front().size();
  const int rate = sources_train.front().sample_rate;
  for (const auto& s : sources_train) {
    if (s.size() != len)
      throw std::invalid_argument("train_df_dnn: sources must share one length");
    if (s.sample_rate != rate)
      throw std::invalid_argument("train_df_dnn: sample rate mismatch");
  }

  // Interferers are summed in the time domain before the magnitude is taken.
  TimeSignal interferer, mixture;
  interferer.sample_rate = rate;
  interferer.samples.assign(len, 0.0);
  mixture.sample_rate = rate;
  mixture.samples.assign(len, 0.0);
  for (std::size_t i = 0; i < sources_train.size(); ++i)
    for (std::size_t t = 0; t < len; ++t) {
      mixture.samples[t] += sources_train[i].samples[t];
      if (i != target_index) interferer.samples[t] += sources_train[i].samples[t];
    }

  const Eigen::MatrixXd ys = stft(sources_train[target_index], stft_cfg).magnitude;
  const Eigen::MatrixXd yn = stft(interferer, stft_cfg).magnitude;
  const Eigen::MatrixXd x = stft(mixture, stft_cfg).magnitude;
  return train_df_dnn(ys, yn, x, static_cast<int>(sources_train.size()), arch,
                      hp, cfg, visit_all_mu);
}

TimeSignal separate_one(const MaskNetModel& model, const TimeSignal& mixture,
                        const StftConfig& stft_cfg) {
  const Spectrogram spec = stft(mixture, stft_cfg);
  const NetOutputs out = forward(model, spec.magnitude);
  return istft(out.y_tilde_s, spec.phase, stft_cfg, mixture.sample_rate);
}

std::pair<TimeSignal, TimeSignal> separate_both(const MaskNetModel& model,
                                                const TimeSignal& mixture,
                                                const StftConfig& stft_cfg) {
  const Spectrogram spec = stft(mixture, stft_cfg);
  const NetOutputs out = forward(model, spec.magnitude);
  return {istft(out.y_tilde_s, spec.phase, stft_cfg, mixture.sample_rate),
          istft(out.y_tilde_n, spec.phase, stft_cfg, mixture.sample_rate)};
}

std::vector<TimeSignal> separate_all(const std::vector<MaskNetModel>& models,
                                     const TimeSignal& mixture,
                                     const StftConfig& stft_cfg) {
  if (models.size() < 2)
    throw std::invalid_argument("separate_all: need one model per source, L >= 2");
  std::vector<TimeSignal> estimates;
  estimates.reserve(models.size());
  for (const auto& model : models)
    estimates.push_back(separate_one(model, mixture, stft_cfg));
  return estimates;
}

}  // namespace sep
