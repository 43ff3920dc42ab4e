#include "sep/bss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sep/subspace.hpp"

namespace sep {

namespace {

constexpr double kEnergyEps = 1e-30;

double clamp_db(double db) {
  return std::clamp(db, -kScoreClampDb, kScoreClampDb);
}

Eigen::VectorXd to_vector(const TimeSignal& s) {
  return Eigen::Map<const Eigen::VectorXd>(s.samples.data(),
                                           static_cast<Eigen::Index>(s.size()));
}

}  // namespace

BssDecomposition decompose(const TimeSignal& estimate,
                           const std::vector<TimeSignal>& references,
                           std::size_t j) {
  if (references.empty())
    throw std::invalid_argument("decompose: no references");
  if (j >= references.size())
    throw std::invalid_argument("decompose: reference index out of range");
  const std::size_t len = estimate.size();
  for (const auto& r : references)
    if (r.size() != len)
      throw std::invalid_argument("decompose: length mismatch");
  if (len < references.size())
    throw std::invalid_argument("decompose: signals shorter than source count");

  Eigen::MatrixXd refs(len, references.size());
  for (std::size_t i = 0; i < references.size(); ++i)
    refs.col(static_cast<Eigen::Index>(i)) = to_vector(references[i]);
  if (refs.col(static_cast<Eigen::Index>(j)).isZero(0.0))
    throw std::invalid_argument("decompose: all-zero reference for target");

  const Eigen::VectorXd est = to_vector(estimate);
  const Eigen::VectorXd p_all = project_onto_span(refs, est);
  const Eigen::VectorXd s_target =
      project_onto_span(refs.col(static_cast<Eigen::Index>(j)), est);

  BssDecomposition d;
  d.s_target = s_target;
  d.e_interf = p_all - s_target;
  d.e_artif = est - p_all;
  return d;
}

BssScore score(const BssDecomposition& d) {
  BssScore s;
  s.energies.s_target = d.s_target.squaredNorm();
  s.energies.e_interf = d.e_interf.squaredNorm();
  s.energies.e_artif = d.e_artif.squaredNorm();
  s.energies.p_all = (d.s_target + d.e_interf).squaredNorm();

  if (s.energies.s_target <= 0.0) {
    s.sdr_db = s.sir_db = s.sar_db = -kScoreClampDb;
    return s;
  }
  s.sir_db = clamp_db(10.0 * std::log10(s.energies.s_target /
                                        (s.energies.e_interf + kEnergyEps)));
  s.sar_db = clamp_db(10.0 * std::log10(s.energies.p_all /
                                        (s.energies.e_artif + kEnergyEps)));
  s.sdr_db = clamp_db(
      10.0 * std::log10(s.energies.s_target /
                        (s.energies.e_interf + s.energies.e_artif + kEnergyEps)));
  return s;
}

EvalResult evaluate_all(const std::vector<TimeSignal>& estimates,
                        const std::vector<TimeSignal>& references) {
  if (estimates.size() != references.size())
    throw std::invalid_argument("evaluate_all: list length mismatch");
  if (estimates.empty())
    throw std::invalid_argument("evaluate_all: nothing to evaluate");
  const int rate = references.front().sample_rate;
  std::size_t len = references.front().size();
  for (const auto& s : estimates) {
    if (s.sample_rate != rate)
      throw std::invalid_argument("evaluate_all: sample rate mismatch");
    len = std::min(len, s.size());
  }
  for (const auto& s : references) {
    if (s.sample_rate != rate)
      throw std::invalid_argument("evaluate_all: sample rate mismatch");
    len = std::min(len, s.size());
  }

  const auto truncate = [len, rate](const TimeSignal& s) {
    TimeSignal t;
    t.sample_rate = rate;
    t.samples.assign(s.samples.begin(), s.samples.begin() + len);
    return t;
  };
  std::vector<TimeSignal> est, refs;
  for (const auto& s : estimates) est.push_back(truncate(s));
  for (const auto& s : references) refs.push_back(truncate(s));

  EvalResult result;
  for (std::size_t j = 0; j < est.size(); ++j)
    result.per_source.push_back(score(decompose(est[j], refs, j)));

  BssScore& avg = result.average;
  for (const auto& s : result.per_source) {
    avg.sdr_db += s.sdr_db;
    avg.sir_db += s.sir_db;
    avg.sar_db += s.sar_db;
    avg.energies.s_target += s.energies.s_target;
    avg.energies.e_interf += s.energies.e_interf;
    avg.energies.e_artif += s.energies.e_artif;
    avg.energies.p_all += s.energies.p_all;
  }
  const double n = static_cast<double>(result.per_source.size());
  avg.sdr_db /= n;
  avg.sir_db /= n;
  avg.sar_db /= n;
  avg.energies.s_target /= n;
  avg.energies.e_interf /= n;
  avg.energies.e_artif /= n;
  avg.energies.p_all /= n;
  return result;
}

}  // namespace sep
