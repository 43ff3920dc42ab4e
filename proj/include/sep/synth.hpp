// sep/synth.hpp
//
// Deterministic synthetic test signals: harmonic stacks, linear chirps and
// band-limited noise. Same spec + seed always yields the same samples.

#pragma once

#include <cstdint>

#include "sep/signal.hpp"

namespace sep {

enum class SynthKind { kHarmonic, kChirp, kBandnoise };

struct SynthSpec {
  SynthKind kind = SynthKind::kHarmonic;

  // harmonic: partials k*f0, k = 1..n_partials, amplitude 1/k, seeded phases
  double f0 = 200.0;
  int n_partials = 4;

  // chirp: linear sweep f_start -> f_end over the duration
  double f_start = 200.0;
  double f_end = 2000.0;

  // bandnoise: seeded white noise through a Hamming-windowed-sinc band-pass
  double band_lo = 1000.0;
  double band_hi = 2000.0;

  double amplitude = 0.8;  // peak after normalization
  // white-noise floor mixed in after peak-normalizing the main component;
  // 0 keeps the signal strictly in its band
  double noise_floor = 0.0;
  uint64_t seed = 0;
  double duration = 4.0;  // seconds
  int sample_rate = 8000;
};

TimeSignal synth_source(const SynthSpec& spec);

}  // namespace sep
