#include "sep/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

namespace sep {

namespace {

// Hand-rolled uniform/gaussian draws keep the bit pattern independent of
// the standard library's distribution implementations.
double uniform01(std::mt19937_64& rng) {
  return (rng() >> 11) * 0x1.0p-53;
}

double gaussian(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void normalize_peak(std::vector<double>& samples, double amplitude) {
  double peak = 0.0;
  for (double s : samples) peak = std::max(peak, std::abs(s));
  if (peak <= 0.0) return;
  const double scale = amplitude / peak;
  for (double& s : samples) s *= scale;
}

std::vector<double> sinc_lowpass(double cutoff_hz, int sample_rate, int taps) {
  // Hamming-windowed sinc, unit DC-band gain
  std::vector<double> h(taps);
  const int mid = taps / 2;
  const double wc = 2.0 * M_PI * cutoff_hz / sample_rate;
  for (int n = 0; n < taps; ++n) {
    const int k = n - mid;
    h[n] = (k == 0) ? wc / M_PI : std::sin(wc * k) / (M_PI * k);
    h[n] *= 0.54 - 0.46 * std::cos(2.0 * M_PI * n / (taps - 1));
  }
  return h;
}

}  // namespace

TimeSignal synth_source(const SynthSpec& spec) {
  if (spec.duration <= 0.0)
    throw std::invalid_argument("synth_source: duration must be positive");
  if (spec.sample_rate <= 0)
    throw std::invalid_argument("synth_source: sample_rate must be positive");
  const double nyquist = spec.sample_rate / 2.0;
  const std::size_t n =
      static_cast<std::size_t>(std::llround(spec.duration * spec.sample_rate));
  if (n == 0) throw std::invalid_argument("synth_source: duration too short");

  std::mt19937_64 rng(spec.seed);
  std::vector<double> samples(n, 0.0);

  switch (spec.kind) {
    case SynthKind::kHarmonic: {
      if (spec.f0 <= 0.0 || spec.f0 >= nyquist)
        throw std::invalid_argument("synth_source: fundamental above Nyquist");
      if (spec.n_partials < 1)
        throw std::invalid_argument("synth_source: need at least one partial");
      for (int k = 1; k <= spec.n_partials; ++k) {
        const double f = k * spec.f0;
        if (f >= nyquist) break;  // drop partials past Nyquist
        const double phase0 = 2.0 * M_PI * uniform01(rng);
        const double amp = 1.0 / k;
        const double w = 2.0 * M_PI * f / spec.sample_rate;
        for (std::size_t i = 0; i < n; ++i)
          samples[i] += amp * std::sin(w * i + phase0);
      }
      break;
    }
    case SynthKind::kChirp: {
      if (spec.f_start < 0.0 || spec.f_end < 0.0 || spec.f_start > nyquist ||
          spec.f_end > nyquist)
        throw std::invalid_argument("synth_source: chirp edge above Nyquist");
      const double rate =
          (spec.f_end - spec.f_start) / (2.0 * spec.duration);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / spec.sample_rate;
        samples[i] = std::sin(2.0 * M_PI * (spec.f_start * t + rate * t * t));
      }
      break;
    }
    case SynthKind::kBandnoise: {
      if (!(0.0 < spec.band_lo && spec.band_lo < spec.band_hi &&
            spec.band_hi <= nyquist))
        throw std::invalid_argument("synth_source: invalid band edges");
      const int taps = 257;
      std::vector<double> white(n + taps - 1);
      for (double& w : white) w = gaussian(rng);
      const auto lp_hi = sinc_lowpass(spec.band_hi, spec.sample_rate, taps);
      const auto lp_lo = sinc_lowpass(spec.band_lo, spec.sample_rate, taps);
      std::vector<double> band(taps);
      for (int i = 0; i < taps; ++i) band[i] = lp_hi[i] - lp_lo[i];
      // "same" convolution: output i aligns with white[i + taps/2]
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int t = 0; t < taps; ++t) acc += band[t] * white[i + taps - 1 - t];
        samples[i] = acc;
      }
      break;
    }
  }

  if (spec.noise_floor < 0.0)
    throw std::invalid_argument("synth_source: negative noise floor");
  if (spec.noise_floor > 0.0) {
    normalize_peak(samples, 1.0);
    for (double& s : samples) s += spec.noise_floor * gaussian(rng);
  }
  normalize_peak(samples, spec.amplitude);
  TimeSignal out;
  out.samples = std::move(samples);
  out.sample_rate = spec.sample_rate;
  return out;
}

}  // namespace sep
