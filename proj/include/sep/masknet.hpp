// sep/masknet.hpp
//
// Two-hidden-layer masking network with two relu heads and a deterministic
// mask layer: m_i = (yhat_i + eps) / (yhat_1 + yhat_2 + 2*eps), prediction
// ytilde_i = m_i .* X. Objectives, exact gradients and mini-batch training.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace sep {

enum class Optimizer { kPlainSgd, kMomentumSgd, kAdaptiveMoments };

struct TrainConfig {
  int batch_frames = 10000;
  int epochs = 100;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::kAdaptiveMoments;
  uint64_t seed = 0;
  bool shuffle = true;
  bool standardize_input = false;  // per-bin feature standardization

  // stop after `patience` consecutive epochs whose relative improvement
  // falls below `min_rel_improvement`
  double min_rel_improvement = 1e-7;
  int patience = 10;

  void validate() const;
};

struct MaskNetModel {
  std::vector<int> layer_dims;            // [in, h1, h2, 2*in]
  std::vector<Eigen::MatrixXd> weights;   // W[l]: dims[l+1] x dims[l]
  std::vector<Eigen::VectorXd> biases;    // b[l]: dims[l+1]
  Eigen::VectorXd input_shift;            // feature transform, identity unless
  Eigen::VectorXd input_scale;            // trained with standardize_input
  uint64_t seed = 0;
  uint64_t train_seed = 0;

  int input_dim() const { return layer_dims.front(); }
  int num_layers() const { return static_cast<int>(weights.size()); }
  void validate() const;
};

struct NetOutputs {
  Eigen::MatrixXd y_hat_s, y_hat_n;      // raw head outputs, >= 0
  Eigen::MatrixXd m_s, m_n;              // masks, m_s + m_n = 1 exactly
  Eigen::MatrixXd y_tilde_s, y_tilde_n;  // masked predictions
};

enum class ObjectiveKind { kJoint, kDfDnn };

// Joint (kJoint):
//   J = scale/2 * (|y1 - yt1|^2 + |y2 - yt2|^2
//                  - gamma*|y1 - yt2|^2 - gamma*|y2 - yt1|^2)
// DF (kDfDnn), with y1 = source target, y2 = interferer target,
// y2_orth = interferer component orthogonal to the source subspace:
//   J = scale/2 * (|y1 - yt1|^2 + mu*|y2 - yt2|^2 - gamma*|yt1 - y2_orth|^2)
struct Objective {
  ObjectiveKind kind = ObjectiveKind::kDfDnn;
  double gamma = 0.0;
  double mu = 0.0;
  double scale = 1.0;
  Eigen::MatrixXd y1;
  Eigen::MatrixXd y2;
  Eigen::MatrixXd y2_orth;  // only read by kDfDnn
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

struct TrainResult {
  MaskNetModel model;
  std::vector<double> loss_trace;  // objective on the full set, per epoch
  int epochs_run = 0;
};

// Glorot-uniform weights, zero biases, deterministic per seed.
MaskNetModel init_model(int bins, int h1, int h2, uint64_t seed);

// Batch forward pass, one column of X per frame.
NetOutputs forward(const MaskNetModel& model, const Eigen::MatrixXd& x);

double objective_joint(const Eigen::MatrixXd& y1, const Eigen::MatrixXd& y2,
                       const NetOutputs& out, double gamma);
double objective_df(const Eigen::MatrixXd& ys, const Eigen::MatrixXd& yn,
                    const Eigen::MatrixXd& yn_orth, const NetOutputs& out,
                    double mu, double gamma);
double objective_value(const Objective& obj, const NetOutputs& out);

// Exact analytic gradient through the mask layer and relu stages
// (relu' at 0 taken as 0). Throws if an intermediate goes non-finite.
Gradients gradient(const MaskNetModel& model, const Eigen::MatrixXd& x,
                   const Objective& obj);

// Mini-batch training; frames are reshuffled per epoch from cfg.seed.
// Aborts with the epoch index if the loss goes NaN.
TrainResult train(const MaskNetModel& model, const Eigen::MatrixXd& x,
                  const Objective& obj, const TrainConfig& cfg);

// Checkpoint: "MNET" magic, version, layer dims, parameters as row-major f64,
// then the seeds. Round trip is bit exact.
void save_model(const MaskNetModel& model, const std::string& path);
MaskNetModel load_model(const std::string& path);

}  // namespace sep
