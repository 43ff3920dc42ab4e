#include "sep/signal.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>

namespace sep {

namespace {

// FFTW plan creation/destruction is not thread safe; execution is.
std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  double* real = nullptr;
  fftw_complex* cpx = nullptr;
  FftwBuffer(int real_len, int cpx_len) {
    real = fftw_alloc_real(real_len);
    cpx = fftw_alloc_complex(cpx_len);
    if (!real || !cpx) throw std::bad_alloc();
  }
  ~FftwBuffer() {
    fftw_free(real);
    fftw_free(cpx);
  }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
};

}  // namespace

double TimeSignal::energy() const {
  double e = 0.0;
  for (double s : samples) e += s * s;
  return e;
}

void TimeSignal::validate() const {
  if (samples.empty()) throw std::invalid_argument("TimeSignal: empty");
  if (sample_rate <= 0)
    throw std::invalid_argument("TimeSignal: sample_rate must be positive");
  for (double s : samples)
    if (!std::isfinite(s))
      throw std::invalid_argument("TimeSignal: non-finite sample");
}

void StftConfig::validate() const {
  if (window_len <= 0 || window_len % 2 != 0)
    throw std::invalid_argument("StftConfig: window_len must be positive and even");
  if (hop != window_len / 2)
    throw std::invalid_argument("StftConfig: hop must equal window_len/2");
  if (fft_len < window_len)
    throw std::invalid_argument("StftConfig: fft_len must be >= window_len");
}

Eigen::VectorXd hamming_window(int length) {
  Eigen::VectorXd w(length);
  for (int n = 0; n < length; ++n)
    w[n] = 0.54 - 0.46 * std::cos(2.0 * M_PI * n / (length - 1));
  return w;
}

int stft_num_frames(std::size_t length, const StftConfig& cfg) {
  if (length < static_cast<std::size_t>(cfg.window_len)) return 0;
  return static_cast<int>((length - cfg.window_len) / cfg.hop) + 1;
}

Spectrogram stft(const TimeSignal& signal, const StftConfig& cfg) {
  cfg.validate();
  signal.validate();
  const int frames = stft_num_frames(signal.size(), cfg);
  if (frames == 0) throw std::invalid_argument("stft: signal too short");

  const int bins = cfg.bins();
  const Eigen::VectorXd window = hamming_window(cfg.window_len);

  FftwBuffer buf(cfg.fft_len, bins);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    plan = fftw_plan_dft_r2c_1d(cfg.fft_len, buf.real, buf.cpx, FFTW_ESTIMATE);
  }

  Spectrogram spec;
  spec.config = cfg;
  spec.complex_bins.resize(bins, frames);
  for (int f = 0; f < frames; ++f) {
    const std::size_t start = static_cast<std::size_t>(f) * cfg.hop;
    for (int n = 0; n < cfg.window_len; ++n)
      buf.real[n] = signal.samples[start + n] * window[n];
    for (int n = cfg.window_len; n < cfg.fft_len; ++n) buf.real[n] = 0.0;
    fftw_execute(plan);
    for (int k = 0; k < bins; ++k)
      spec.complex_bins(k, f) = std::complex<double>(buf.cpx[k][0], buf.cpx[k][1]);
  }
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_destroy_plan(plan);
  }

  spec.magnitude = spec.complex_bins.cwiseAbs();
  spec.phase = spec.complex_bins.unaryExpr(
      [](const std::complex<double>& c) { return std::arg(c); });
  return spec;
}

TimeSignal istft(const Eigen::MatrixXd& magnitude, const Eigen::MatrixXd& phase,
                 const StftConfig& cfg, int sample_rate) {
  cfg.validate();
  if (magnitude.rows() != phase.rows() || magnitude.cols() != phase.cols())
    throw std::invalid_argument("istft: magnitude/phase shape mismatch");
  if (magnitude.rows() != cfg.bins())
    throw std::invalid_argument("istft: rows must equal fft_len/2 + 1");
  if (magnitude.cols() == 0) throw std::invalid_argument("istft: no frames");
  if (sample_rate <= 0)
    throw std::invalid_argument("istft: sample_rate must be positive");

  const int bins = cfg.bins();
  const int frames = static_cast<int>(magnitude.cols());
  const std::size_t out_len =
      static_cast<std::size_t>(frames - 1) * cfg.hop + cfg.window_len;
  const Eigen::VectorXd window = hamming_window(cfg.window_len);

  FftwBuffer buf(cfg.fft_len, bins);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    plan = fftw_plan_dft_c2r_1d(cfg.fft_len, buf.cpx, buf.real, FFTW_ESTIMATE);
  }

  std::vector<double> acc(out_len, 0.0);
  std::vector<double> wsum(out_len, 0.0);
  for (int f = 0; f < frames; ++f) {
    for (int k = 0; k < bins; ++k) {
      const double m = magnitude(k, f);
      const double p = phase(k, f);
      buf.cpx[k][0] = m * std::cos(p);
      buf.cpx[k][1] = m * std::sin(p);
    }
    fftw_execute(plan);  // unnormalized: scale by 1/fft_len below
    const std::size_t start = static_cast<std::size_t>(f) * cfg.hop;
    for (int n = 0; n < cfg.window_len; ++n) {
      acc[start + n] += buf.real[n] / cfg.fft_len * window[n];
      wsum[start + n] += window[n] * window[n];
    }
  }
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_destroy_plan(plan);
  }

  TimeSignal out;
  out.sample_rate = sample_rate;
  out.samples.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i)
    out.samples[i] = acc[i] / std::max(wsum[i], 1e-12);
  return out;
}

MixResult mix_at_zero_db(const std::vector<TimeSignal>& sources) {
  if (sources.size() < 2)
    throw std::invalid_argument("mix_at_zero_db: need at least 2 sources");
  std::size_t min_len = sources.front().size();
  const int rate = sources.front().sample_rate;
  for (const auto& s : sources) {
    s.validate();
    if (s.sample_rate != rate)
      throw std::invalid_argument("mix_at_zero_db: sample rate mismatch");
    min_len = std::min(min_len, s.size());
  }

  MixResult result;
  result.scaled_sources.reserve(sources.size());
  for (const auto& s : sources) {
    TimeSignal t;
    t.sample_rate = rate;
    t.samples.assign(s.samples.begin(), s.samples.begin() + min_len);
    result.scaled_sources.push_back(std::move(t));
  }

  const double ref_energy = result.scaled_sources.front().energy();
  if (ref_energy <= 0.0)
    throw std::invalid_argument("mix_at_zero_db: zero-energy source");
  for (auto& s : result.scaled_sources) {
    const double e = s.energy();
    if (e <= 0.0)
      throw std::invalid_argument("mix_at_zero_db: zero-energy source");
    const double scale = std::sqrt(ref_energy / e);
    for (double& v : s.samples) v *= scale;
  }

  result.mixture.sample_rate = rate;
  result.mixture.samples.assign(min_len, 0.0);
  for (const auto& s : result.scaled_sources)
    for (std::size_t i = 0; i < min_len; ++i)
      result.mixture.samples[i] += s.samples[i];
  return result;
}

namespace {

constexpr char kSpecMagic[4] = {'S', 'P', 'E', 'C'};
constexpr uint32_t kSpecVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_matrix_row_major(std::ostream& os, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      os.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}

Eigen::MatrixXd read_matrix_row_major(std::istream& is, int rows, int cols) {
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

void save_spectrogram(const Spectrogram& spec, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_spectrogram: cannot open " + path);
  os.write(kSpecMagic, 4);
  write_u32(os, kSpecVersion);
  write_u32(os, static_cast<uint32_t>(spec.num_bins()));
  write_u32(os, static_cast<uint32_t>(spec.num_frames()));
  write_u32(os, static_cast<uint32_t>(spec.config.fft_len));
  write_u32(os, static_cast<uint32_t>(spec.config.hop));
  write_matrix_row_major(os, spec.magnitude);
  write_matrix_row_major(os, spec.phase);
  if (!os) throw std::runtime_error("save_spectrogram: write failed: " + path);
}

Spectrogram load_spectrogram(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_spectrogram: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kSpecMagic, 4) != 0)
    throw std::runtime_error("load_spectrogram: bad magic in " + path);
  const uint32_t version = read_u32(is);
  if (version != kSpecVersion)
    throw std::runtime_error("load_spectrogram: unsupported version");
  const uint32_t bins = read_u32(is);
  const uint32_t frames = read_u32(is);
  const uint32_t fft_len = read_u32(is);
  const uint32_t hop = read_u32(is);
  if (!is || bins == 0 || frames == 0 || bins != fft_len / 2 + 1)
    throw std::runtime_error("load_spectrogram: corrupt header");

  Spectrogram spec;
  spec.config.fft_len = static_cast<int>(fft_len);
  spec.config.hop = static_cast<int>(hop);
  spec.config.window_len = static_cast<int>(2 * hop);
  spec.magnitude = read_matrix_row_major(is, bins, frames);
  spec.phase = read_matrix_row_major(is, bins, frames);
  if (!is) throw std::runtime_error("load_spectrogram: truncated file");
  spec.complex_bins.resize(bins, frames);
  for (uint32_t k = 0; k < bins; ++k)
    for (uint32_t f = 0; f < frames; ++f)
      spec.complex_bins(k, f) =
          std::polar(spec.magnitude(k, f), spec.phase(k, f));
  return spec;
}

}  // namespace sep
