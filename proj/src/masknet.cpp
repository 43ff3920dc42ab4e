#include "sep/masknet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>

namespace sep {

namespace {

constexpr double kMaskEps = 1e-12;

double uniform01(std::mt19937_64& rng) {
  return (rng() >> 11) * 0x1.0p-53;
}

// Activations double as their own relu-derivative gate: relu(z) > 0 iff z > 0,
// and the subgradient at exactly 0 is taken as 0.
Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

Eigen::MatrixXd relu_gate(const Eigen::MatrixXd& a) {
  return (a.array() > 0.0).cast<double>();
}

struct ForwardCache {
  Eigen::MatrixXd features;  // standardized input
  Eigen::MatrixXd a1, a2;    // hidden activations
  NetOutputs out;
};

ForwardCache forward_cached(const MaskNetModel& model, const Eigen::MatrixXd& x) {
  if (x.rows() != model.input_dim())
    throw std::invalid_argument("forward: input rows do not match model");

  ForwardCache c;
  c.features = (x.colwise() - model.input_shift).array().colwise() /
               model.input_scale.array();
  c.a1 = relu((model.weights[0] * c.features).colwise() + model.biases[0]);
  c.a2 = relu((model.weights[1] * c.a1).colwise() + model.biases[1]);
  const Eigen::MatrixXd heads =
      relu((model.weights[2] * c.a2).colwise() + model.biases[2]);
  if (!c.a1.allFinite())
    throw std::runtime_error("forward: non-finite intermediate at layer 1");
  if (!c.a2.allFinite())
    throw std::runtime_error("forward: non-finite intermediate at layer 2");
  if (!heads.allFinite())
    throw std::runtime_error("forward: non-finite intermediate at layer 3");

  const int bins = model.input_dim();
  NetOutputs& o = c.out;
  o.y_hat_s = heads.topRows(bins);
  o.y_hat_n = heads.bottomRows(bins);
  const Eigen::ArrayXXd denom =
      o.y_hat_s.array() + o.y_hat_n.array() + 2.0 * kMaskEps;
  o.m_s = ((o.y_hat_s.array() + kMaskEps) / denom).matrix();
  o.m_n = (1.0 - o.m_s.array()).matrix();  // complementary by construction
  o.y_tilde_s = o.m_s.cwiseProduct(x);
  o.y_tilde_n = o.m_n.cwiseProduct(x);
  return c;
}

void check_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                      const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

Eigen::MatrixXd slice_cols(const Eigen::MatrixXd& m,
                           const std::vector<int>& idx, int begin, int count) {
  Eigen::MatrixXd out(m.rows(), count);
  for (int i = 0; i < count; ++i) out.col(i) = m.col(idx[begin + i]);
  return out;
}

struct OptimizerState {
  std::vector<Eigen::MatrixXd> w_m, w_v;
  std::vector<Eigen::VectorXd> b_m, b_v;
  long step = 0;

  explicit OptimizerState(const MaskNetModel& model) {
    for (int l = 0; l < model.num_layers(); ++l) {
      w_m.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(),
                                          model.weights[l].cols()));
      w_v.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(),
                                          model.weights[l].cols()));
      b_m.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
      b_v.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
    }
  }
};

template <typename T>
void apply_update(T& param, T& m, T& v, const T& grad, Optimizer opt,
                  double lr, long step) {
  switch (opt) {
    case Optimizer::kPlainSgd:
      param -= lr * grad;
      break;
    case Optimizer::kMomentumSgd:
      m = 0.9 * m - lr * grad;
      param += m;
      break;
    case Optimizer::kAdaptiveMoments: {
      constexpr double b1 = 0.9, b2 = 0.999, guard = 1e-8;
      m = b1 * m + (1.0 - b1) * grad;
      v = (b2 * v.array() + (1.0 - b2) * grad.array().square()).matrix();
      const double mc = 1.0 - std::pow(b1, static_cast<double>(step));
      const double vc = 1.0 - std::pow(b2, static_cast<double>(step));
      param.array() -=
          lr * (m.array() / mc) / ((v.array() / vc).sqrt() + guard);
      break;
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_frames < 1)
    throw std::invalid_argument("TrainConfig: batch_frames must be >= 1");
  if (learning_rate <= 0.0)
    throw std::invalid_argument("TrainConfig: learning_rate must be positive");
  if (epochs < 0) throw std::invalid_argument("TrainConfig: negative epochs");
}

void MaskNetModel::validate() const {
  if (layer_dims.size() != 4)
    throw std::invalid_argument("MaskNetModel: expected 4 layer dims");
  if (layer_dims.back() != 2 * layer_dims.front())
    throw std::invalid_argument("MaskNetModel: output dim must be 2x input");
  if (weights.size() != 3 || biases.size() != 3)
    throw std::invalid_argument("MaskNetModel: expected 3 affine layers");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != layer_dims[l + 1] ||
        weights[l].cols() != layer_dims[l] ||
        biases[l].size() != layer_dims[l + 1])
      throw std::invalid_argument("MaskNetModel: layer shape mismatch");
    if (!weights[l].allFinite() || !biases[l].allFinite())
      throw std::invalid_argument("MaskNetModel: non-finite parameters");
  }
  if (input_shift.size() != layer_dims[0] ||
      input_scale.size() != layer_dims[0])
    throw std::invalid_argument("MaskNetModel: feature transform shape mismatch");
}

MaskNetModel init_model(int bins, int h1, int h2, uint64_t seed) {
  if (bins < 1 || h1 < 1 || h2 < 1)
    throw std::invalid_argument("init_model: all dims must be >= 1");

  MaskNetModel model;
  model.layer_dims = {bins, h1, h2, 2 * bins};
  model.seed = seed;
  std::mt19937_64 rng(seed);
  for (int l = 0; l < 3; ++l) {
    const int fan_in = model.layer_dims[l];
    const int fan_out = model.layer_dims[l + 1];
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c)
        w(r, c) = a * (2.0 * uniform01(rng) - 1.0);
    model.weights.push_back(std::move(w));
    model.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  model.input_shift = Eigen::VectorXd::Zero(bins);
  model.input_scale = Eigen::VectorXd::Ones(bins);
  return model;
}

NetOutputs forward(const MaskNetModel& model, const Eigen::MatrixXd& x) {
  return forward_cached(model, x).out;
}

double objective_joint(const Eigen::MatrixXd& y1, const Eigen::MatrixXd& y2,
                       const NetOutputs& out, double gamma) {
  check_same_shape(y1, out.y_tilde_s, "objective_joint");
  check_same_shape(y2, out.y_tilde_n, "objective_joint");
  return 0.5 * ((y1 - out.y_tilde_s).squaredNorm() +
                (y2 - out.y_tilde_n).squaredNorm() -
                gamma * (y1 - out.y_tilde_n).squaredNorm() -
                gamma * (y2 - out.y_tilde_s).squaredNorm());
}

double objective_df(const Eigen::MatrixXd& ys, const Eigen::MatrixXd& yn,
                    const Eigen::MatrixXd& yn_orth, const NetOutputs& out,
                    double mu, double gamma) {
  check_same_shape(ys, out.y_tilde_s, "objective_df");
  check_same_shape(yn, out.y_tilde_n, "objective_df");
  check_same_shape(yn_orth, out.y_tilde_s, "objective_df");
  return 0.5 * ((ys - out.y_tilde_s).squaredNorm() +
                mu * (yn - out.y_tilde_n).squaredNorm() -
                gamma * (out.y_tilde_s - yn_orth).squaredNorm());
}

double objective_value(const Objective& obj, const NetOutputs& out) {
  double j = 0.0;
  switch (obj.kind) {
    case ObjectiveKind::kJoint:
      j = objective_joint(obj.y1, obj.y2, out, obj.gamma);
      break;
    case ObjectiveKind::kDfDnn:
      j = objective_df(obj.y1, obj.y2, obj.y2_orth, out, obj.mu, obj.gamma);
      break;
  }
  return obj.scale * j;
}

Gradients gradient(const MaskNetModel& model, const Eigen::MatrixXd& x,
                   const Objective& obj) {
  const ForwardCache c = forward_cached(model, x);
  const NetOutputs& o = c.out;

  // d objective / d masked predictions
  Eigen::MatrixXd g_ts, g_tn;
  switch (obj.kind) {
    case ObjectiveKind::kJoint:
      check_same_shape(obj.y1, o.y_tilde_s, "gradient");
      check_same_shape(obj.y2, o.y_tilde_n, "gradient");
      g_ts = (o.y_tilde_s - obj.y1) - obj.gamma * (o.y_tilde_s - obj.y2);
      g_tn = (o.y_tilde_n - obj.y2) - obj.gamma * (o.y_tilde_n - obj.y1);
      break;
    case ObjectiveKind::kDfDnn:
      check_same_shape(obj.y1, o.y_tilde_s, "gradient");
      check_same_shape(obj.y2, o.y_tilde_n, "gradient");
      check_same_shape(obj.y2_orth, o.y_tilde_s, "gradient");
      g_ts = (o.y_tilde_s - obj.y1) - obj.gamma * (o.y_tilde_s - obj.y2_orth);
      g_tn = obj.mu * (o.y_tilde_n - obj.y2);
      break;
  }
  g_ts *= obj.scale;
  g_tn *= obj.scale;

  // Through the mask layer. With m_n = 1 - m_s the only free mask is m_s:
  // dJ/dm_s = (dJ/dyt_s - dJ/dyt_n) .* x, and for m_s = (as+eps)/d,
  // d = as + an + 2*eps: dm_s/das = (an+eps)/d^2, dm_s/dan = -(as+eps)/d^2.
  const Eigen::ArrayXXd g_ms = (g_ts - g_tn).cwiseProduct(x).array();
  const Eigen::ArrayXXd denom =
      o.y_hat_s.array() + o.y_hat_n.array() + 2.0 * kMaskEps;
  const Eigen::ArrayXXd denom_sq = denom * denom;
  const Eigen::MatrixXd g_as =
      (g_ms * (o.y_hat_n.array() + kMaskEps) / denom_sq).matrix();
  const Eigen::MatrixXd g_an =
      (-g_ms * (o.y_hat_s.array() + kMaskEps) / denom_sq).matrix();

  const int bins = model.input_dim();
  Eigen::MatrixXd g_z3(2 * bins, x.cols());
  g_z3.topRows(bins) = g_as.cwiseProduct(relu_gate(o.y_hat_s));
  g_z3.bottomRows(bins) = g_an.cwiseProduct(relu_gate(o.y_hat_n));

  Gradients g;
  g.weights.resize(3);
  g.biases.resize(3);
  g.weights[2] = g_z3 * c.a2.transpose();
  g.biases[2] = g_z3.rowwise().sum();

  const Eigen::MatrixXd g_z2 =
      (model.weights[2].transpose() * g_z3).cwiseProduct(relu_gate(c.a2));
  g.weights[1] = g_z2 * c.a1.transpose();
  g.biases[1] = g_z2.rowwise().sum();

  const Eigen::MatrixXd g_z1 =
      (model.weights[1].transpose() * g_z2).cwiseProduct(relu_gate(c.a1));
  g.weights[0] = g_z1 * c.features.transpose();
  g.biases[0] = g_z1.rowwise().sum();

  for (int l = 0; l < 3; ++l)
    if (!g.weights[l].allFinite() || !g.biases[l].allFinite())
      throw std::runtime_error("gradient: non-finite gradient at layer " +
                               std::to_string(l + 1));
  return g;
}

TrainResult train(const MaskNetModel& model, const Eigen::MatrixXd& x,
                  const Objective& obj, const TrainConfig& cfg) {
  cfg.validate();
  model.validate();
  if (x.cols() < 1) throw std::invalid_argument("train: no frames");
  check_same_shape(obj.y1, x, "train targets");
  check_same_shape(obj.y2, x, "train targets");
  if (obj.kind == ObjectiveKind::kDfDnn)
    check_same_shape(obj.y2_orth, x, "train targets");

  TrainResult result;
  result.model = model;
  if (cfg.epochs == 0) return result;

  MaskNetModel& m = result.model;
  m.train_seed = cfg.seed;
  if (cfg.standardize_input) {
    m.input_shift = x.rowwise().mean();
    const Eigen::MatrixXd centered = x.colwise() - m.input_shift;
    m.input_scale =
        (centered.array().square().rowwise().mean().sqrt() + 1e-8).matrix();
  }

  if (std::isnan(objective_value(obj, forward(m, x))))
    throw std::runtime_error("train: NaN loss at epoch 0");

  const int frames = static_cast<int>(x.cols());
  const int batch = std::min(cfg.batch_frames, frames);
  std::vector<int> order(frames);
  for (int i = 0; i < frames; ++i) order[i] = i;
  std::mt19937_64 rng(cfg.seed);

  OptimizerState state(m);
  double prev_loss = 0.0;
  int stale_epochs = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      for (int i = frames - 1; i > 0; --i) {
        const int j = static_cast<int>(rng() % static_cast<uint64_t>(i + 1));
        std::swap(order[i], order[j]);
      }
    }

    for (int begin = 0; begin < frames; begin += batch) {
      const int count = std::min(batch, frames - begin);
      Objective batch_obj;
      batch_obj.kind = obj.kind;
      batch_obj.gamma = obj.gamma;
      batch_obj.mu = obj.mu;
      batch_obj.scale = obj.scale;
      const Eigen::MatrixXd xb = slice_cols(x, order, begin, count);
      batch_obj.y1 = slice_cols(obj.y1, order, begin, count);
      batch_obj.y2 = slice_cols(obj.y2, order, begin, count);
      if (obj.kind == ObjectiveKind::kDfDnn)
        batch_obj.y2_orth = slice_cols(obj.y2_orth, order, begin, count);

      const Gradients g = gradient(m, xb, batch_obj);
      ++state.step;
      for (int l = 0; l < 3; ++l) {
        apply_update(m.weights[l], state.w_m[l], state.w_v[l], g.weights[l],
                     cfg.optimizer, cfg.learning_rate, state.step);
        apply_update(m.biases[l], state.b_m[l], state.b_v[l], g.biases[l],
                     cfg.optimizer, cfg.learning_rate, state.step);
      }
    }

    const double loss = objective_value(obj, forward(m, x));
    if (std::isnan(loss))
      throw std::runtime_error("train: NaN loss at epoch " +
                               std::to_string(epoch));
    result.loss_trace.push_back(loss);
    result.epochs_run = epoch + 1;

    if (epoch > 0) {
      const double rel = (prev_loss - loss) / (std::abs(prev_loss) + 1e-30);
      stale_epochs = (rel < cfg.min_rel_improvement) ? stale_epochs + 1 : 0;
      if (stale_epochs >= cfg.patience) break;
    }
    prev_loss = loss;
  }
  return result;
}

namespace {

constexpr char kModelMagic[4] = {'M', 'N', 'E', 'T'};
constexpr uint32_t kModelVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_doubles_row_major(std::ostream& os, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      os.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

Eigen::MatrixXd read_doubles_row_major(std::istream& is, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double v = 0.0;
      is.read(reinterpret_cast<char*>(&v), sizeof(v));
      m(r, c) = v;
    }
  return m;
}

}  // namespace

void save_model(const MaskNetModel& model, const std::string& path) {
  model.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_model: cannot open " + path);
  os.write(kModelMagic, 4);
  write_u32(os, kModelVersion);
  write_u32(os, static_cast<uint32_t>(model.layer_dims.size()));
  for (int d : model.layer_dims) write_u32(os, static_cast<uint32_t>(d));
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    write_doubles_row_major(os, model.weights[l]);
    write_doubles_row_major(os, model.biases[l]);
  }
  write_doubles_row_major(os, model.input_shift);
  write_doubles_row_major(os, model.input_scale);
  write_u64(os, model.seed);
  write_u64(os, model.train_seed);
  if (!os) throw std::runtime_error("save_model: write failed: " + path);
}

MaskNetModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_model: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kModelMagic, 4) != 0)
    throw std::runtime_error("load_model: bad magic in " + path);
  if (read_u32(is) != kModelVersion)
    throw std::runtime_error("load_model: unsupported version");
  const uint32_t ndims = read_u32(is);
  if (ndims != 4) throw std::runtime_error("load_model: corrupt header");

  MaskNetModel model;
  model.layer_dims.resize(ndims);
  for (uint32_t i = 0; i < ndims; ++i)
    model.layer_dims[i] = static_cast<int>(read_u32(is));
  for (uint32_t l = 0; l + 1 < ndims; ++l) {
    model.weights.push_back(read_doubles_row_major(is, model.layer_dims[l + 1],
                                                   model.layer_dims[l]));
    model.biases.push_back(
        read_doubles_row_major(is, model.layer_dims[l + 1], 1));
  }
  model.input_shift = read_doubles_row_major(is, model.layer_dims[0], 1);
  model.input_scale = read_doubles_row_major(is, model.layer_dims[0], 1);
  model.seed = read_u64(is);
  model.train_seed = read_u64(is);
  if (!is) throw std::runtime_error("load_model: truncated file");
  model.validate();
  return model;
}

}  // namespace sep
