// sep/signal.hpp
//
// Waveforms, framing and the windowed STFT/iSTFT pair used everywhere else.
// Magnitude matrices are laid out bins x frames (one column per frame).

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace sep {

// Mono sampled waveform.
struct TimeSignal {
  std::vector<double> samples;
  int sample_rate = 0;

  std::size_t size() const { return samples.size(); }
  double energy() const;  // sum of squares

  // Throws std::invalid_argument if empty, non-finite, or sample_rate <= 0.
  void validate() const;
};

enum class WindowKind { kHamming };

// Framing parameters. 50% overlap is a hard requirement (hop = window_len/2).
struct StftConfig {
  int window_len = 512;
  int hop = 256;
  int fft_len = 512;
  WindowKind window = WindowKind::kHamming;

  int bins() const { return fft_len / 2 + 1; }
  void validate() const;
};

// One-sided complex STFT plus derived magnitude/phase.
struct Spectrogram {
  Eigen::MatrixXcd complex_bins;  // bins x frames
  Eigen::MatrixXd magnitude;      // |complex_bins|
  Eigen::MatrixXd phase;          // arg(complex_bins), radians
  StftConfig config;

  int num_frames() const { return static_cast<int>(complex_bins.cols()); }
  int num_bins() const { return static_cast<int>(complex_bins.rows()); }
};

// Hamming window, 0.54 - 0.46*cos(2*pi*n/(N-1)).
Eigen::VectorXd hamming_window(int length);

// Frame count for a signal of `length` samples: floor((length - window)/hop) + 1.
// Tail samples that do not fill a whole window are dropped.
int stft_num_frames(std::size_t length, const StftConfig& cfg);

// Windowed one-sided STFT. Throws "signal too short" if fewer samples than
// one window.
Spectrogram stft(const TimeSignal& signal, const StftConfig& cfg);

// Overlap-add inverse with squared-window-sum normalization. Output length is
// (frames-1)*hop + window_len.
TimeSignal istft(const Eigen::MatrixXd& magnitude, const Eigen::MatrixXd& phase,
                 const StftConfig& cfg, int sample_rate);

struct MixResult {
  TimeSignal mixture;
  std::vector<TimeSignal> scaled_sources;
};

// Truncates all sources to the shortest, rescales every source to the first
// source's L2 energy and sums. Needs >= 2 sources of equal sample rate, none
// with zero energy.
MixResult mix_at_zero_db(const std::vector<TimeSignal>& sources);

// Binary spectrogram container: "SPEC" magic, version, bins/frames/fft_len/hop
// as u32, then row-major f64 magnitude followed by phase.
void save_spectrogram(const Spectrogram& spec, const std::string& path);
Spectrogram load_spectrogram(const std::string& path);

}  // namespace sep
