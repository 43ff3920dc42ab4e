// sep/wav.hpp
//
// RIFF/WAVE I/O, PCM 16-bit mono only. Samples map to [-1, 1) via 1/32768.

#pragma once

#include <string>

#include "sep/signal.hpp"

namespace sep {

TimeSignal load_wav(const std::string& path);
void save_wav(const TimeSignal& signal, const std::string& path);

}  // namespace sep
