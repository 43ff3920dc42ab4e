// sep/bss.hpp
//
// Projector-based error decomposition and SDR/SIR/SAR scoring of estimated
// sources against reference signals.

#pragma once

#include <Eigen/Dense>

#include <vector>

#include "sep/signal.hpp"

namespace sep {

// Scores at or beyond this magnitude stand in for +-infinity so that report
// tables stay numeric.
constexpr double kScoreClampDb = 300.0;

struct BssDecomposition {
  Eigen::VectorXd s_target;  // projection of the estimate onto span(y_j)
  Eigen::VectorXd e_interf;  // (P[all refs] - P[y_j]) * estimate
  Eigen::VectorXd e_artif;   // estimate - P[all refs] * estimate
};

struct BssEnergies {
  double s_target = 0.0;
  double e_interf = 0.0;
  double e_artif = 0.0;
  double p_all = 0.0;  // |P[all refs] * estimate|^2
};

struct BssScore {
  double sdr_db = 0.0;
  double sir_db = 0.0;
  double sar_db = 0.0;
  BssEnergies energies;
};

// Decompose estimate j against the reference spans. All signals must share
// one length; references must not all be zero at index j.
BssDecomposition decompose(const TimeSignal& estimate,
                           const std::vector<TimeSignal>& references,
                           std::size_t j);

// SIR = 10 log10(|s|^2 / (|e_I|^2 + eps)), SAR with |s + e_I|^2 on top,
// SDR with |e_I + e_A|^2 below; eps = 1e-30. A zero target projection maps
// every score to the -inf sentinel.
BssScore score(const BssDecomposition& d);

struct EvalResult {
  std::vector<BssScore> per_source;
  BssScore average;  // arithmetic mean of the dB values and energies
};

// Truncates everything to the common length, then decompose + score per index.
EvalResult evaluate_all(const std::vector<TimeSignal>& estimates,
                        const std::vector<TimeSignal>& references);

}  // namespace sep
