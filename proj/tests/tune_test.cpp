#include <doctest.h>

#include <cmath>
#include <random>

#include "sep/tune.hpp"
#include "test_util.hpp"

using namespace sep;

namespace {

MaskNetModel constant_head_model(int bins, double head_s, double head_n) {
  MaskNetModel model = init_model(bins, 4, 4, 0);
  for (auto& w : model.weights) w.setZero();
  model.biases[0].setConstant(1.0);
  model.biases[1].setConstant(1.0);
  model.biases[2].head(bins).setConstant(head_s);
  model.biases[2].tail(bins).setConstant(head_n);
  return model;
}

// Sine with unit amplitude, handy for band-separated fixtures.
TimeSignal tone(double freq, std::size_t n, int rate) {
  TimeSignal s;
  s.sample_rate = rate;
  s.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    s.samples[i] = 0.5 * std::sin(2.0 * M_PI * freq * i / rate);
  return s;
}

}  // namespace

TEST_SUITE("tune") {

TEST_CASE("error ratio from probes follows the definition") {
  Eigen::MatrixXd ys(2, 1), yn(2, 1), y_ss(2, 1), y_ns(2, 1);
  ys << 1.0, 0.0;
  y_ss << 0.0, 0.0;  // |ys - y_ss| = 1
  yn << 2.0, 0.0;
  y_ns << 0.0, 0.0;  // |yn - y_ns| = 2
  CHECK(error_ratio_from_probes(ys, yn, y_ss, y_ns) ==
        doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("an interferer-passing source head scores r_e = 0") {
  Eigen::MatrixXd ys(2, 2), yn(2, 2);
  ys << 1.0, 2.0, 0.5, 0.25;
  yn << 0.5, 0.5, 1.5, 2.5;
  // the source head reproduces whatever it is fed
  CHECK(error_ratio_from_probes(ys, yn, ys, yn) == 0.0);
}

TEST_CASE("perfect routing saturates the energy ratios at the cap") {
  Eigen::MatrixXd ys(2, 2), yn(2, 2);
  ys << 1.0, 2.0, 0.5, 0.25;
  yn << 0.5, 0.5, 1.5, 2.5;
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 2);
  const auto [r_s, r_n] = energy_ratios_from_probes(ys, zero, zero, yn);
  CHECK(r_s >= 1e10);
  CHECK(r_s <= 1e12);
  CHECK(r_n >= 1e10);
  CHECK(r_n <= 1e12);
}

TEST_CASE("half masks give unit energy ratios") {
  const int bins = 5;
  const MaskNetModel model = constant_head_model(bins, 1.0, 1.0);
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd ys = testutil::random_matrix(bins, 7, rng, 0.1, 2.0);
  const Eigen::MatrixXd yn = testutil::random_matrix(bins, 7, rng, 0.1, 2.0);
  const auto [r_s, r_n] = energy_ratios(model, ys, yn);
  CHECK(r_s == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r_n == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("model ratios equal the hand-composed forward computation") {
  std::mt19937_64 rng(8);
  const int bins = 6;
  const MaskNetModel model = init_model(bins, 5, 5, 17);
  const Eigen::MatrixXd ys = testutil::random_matrix(bins, 9, rng, 0.1, 2.0);
  const Eigen::MatrixXd yn = testutil::random_matrix(bins, 9, rng, 0.1, 2.0);

  const NetOutputs on_s = forward(model, ys);
  const NetOutputs on_n = forward(model, yn);
  const double expect_re =
      (yn - on_n.y_tilde_s).norm() / ((ys - on_s.y_tilde_s).norm() + 1e-12);
  CHECK(error_ratio(model, ys, yn) ==
        doctest::Approx(expect_re).epsilon(1e-12));

  const auto [r_s, r_n] = energy_ratios(model, ys, yn);
  CHECK(r_s == doctest::Approx(on_s.y_tilde_s.norm() /
                               (on_s.y_tilde_n.norm() + 1e-12))
                   .epsilon(1e-12));
  CHECK(r_n == doctest::Approx(on_n.y_tilde_n.norm() /
                               (on_n.y_tilde_s.norm() + 1e-12))
                   .epsilon(1e-12));

  const ProbeNorms norms = probe_norms(model, ys, yn);
  CHECK(norms.y_ss == doctest::Approx(on_s.y_tilde_s.norm()));
  CHECK(norms.y_nn == doctest::Approx(on_n.y_tilde_n.norm()));
}

TEST_CASE("gamma grid covers min..max inclusively") {
  HyperParams hp;
  const std::vector<double> grid = gamma_grid(hp);
  REQUIRE(grid.size() == 5);
  CHECK(grid.front() == doctest::Approx(0.1));
  CHECK(grid[2] == doctest::Approx(0.3));
  CHECK(grid.back() == doctest::Approx(0.5));
}

TEST_CASE("sweep core picks the argmax r_e") {
  const std::vector<double> grid = {0.1, 0.2, 0.3, 0.4, 0.5};
  const std::vector<double> re = {1.2, 1.5, 1.4, 1.1, 1.0};
  TuneTrace trace;
  const double chosen = sweep_gamma_core(
      grid,
      [&](double, std::size_t i) {
        GammaStep s;
        s.r_e = re[i];
        return s;
      },
      trace);
  CHECK(chosen == 0.2);
  CHECK(trace.chosen_gamma == 0.2);
  CHECK(trace.re_values == re);
}

TEST_CASE("sweep core breaks ties toward gamma_min") {
  const std::vector<double> grid = {0.1, 0.2, 0.3};
  TuneTrace trace;
  const double chosen = sweep_gamma_core(
      grid,
      [&](double, std::size_t) {
        GammaStep s;
        s.r_e = 7.0;
        return s;
      },
      trace);
  CHECK(chosen == 0.1);
}

TEST_CASE("sweep core accepts a single-point grid") {
  TuneTrace trace;
  const double chosen = sweep_gamma_core(
      {0.25},
      [&](double, std::size_t) {
        GammaStep s;
        s.r_e = 0.0;
        return s;
      },
      trace);
  CHECK(chosen == 0.25);
}

TEST_CASE("find_mu core fires on the scripted trace") {
  const std::vector<double> mu_set = {0.1, 0.5, 1.0, 2.0, 5.0, 10.0};
  const std::vector<std::pair<double, double>> script = {
      {12.0, 3.0}, {9.0, 6.0}, {7.5, 8.0}};
  TuneTrace trace;
  std::size_t calls = 0;
  const double chosen = find_mu_core(
      mu_set, 2, 8.0,
      [&](double, std::size_t i) {
        ++calls;
        MuStep s;
        s.r_s = script[i].first;
        s.r_n = script[i].second;
        return s;
      },
      false, trace);
  CHECK(chosen == 1.0);
  CHECK(calls == 3);  // stops right where both clauses fire
  CHECK_FALSE(trace.mu_exhausted);
}

TEST_CASE("find_mu core: rs_min clause fires even when the L-clause does not") {
  TuneTrace trace;
  const double chosen = find_mu_core(
      {0.1, 0.5}, 3, 8.0,
      [&](double, std::size_t) {
        MuStep s;
        s.r_s = 5.0;  // 2*5 = 10 > 9, but 5 <= 8 stops anyway
        s.r_n = 9.0;
        return s;
      },
      false, trace);
  CHECK(chosen == 0.1);
  CHECK(trace.mu_steps.size() == 1);
}

TEST_CASE("find_mu core returns the last mu when nothing fires") {
  const std::vector<double> mu_set = {0.1, 0.5, 1.0, 2.0, 5.0, 10.0};
  TuneTrace trace;
  const double chosen = find_mu_core(
      mu_set, 2, 8.0,
      [&](double, std::size_t) {
        MuStep s;
        s.r_s = 100.0;
        s.r_n = 1.0;
        return s;
      },
      false, trace);
  CHECK(chosen == 10.0);
  CHECK(trace.mu_exhausted);
  CHECK(trace.mu_steps.size() == mu_set.size());
}

TEST_CASE("property: find_mu core equals an independent rule evaluation") {
  std::mt19937_64 rng(27);
  const std::vector<double> mu_set = {0.1, 0.5, 1.0, 2.0, 5.0, 10.0};
  for (int trial = 0; trial < 200; ++trial) {
    const int L = 2 + static_cast<int>(testutil::uniform(rng, 0, 3));
    std::vector<std::pair<double, double>> script;
    for (std::size_t i = 0; i < mu_set.size(); ++i)
      script.push_back({testutil::uniform(rng, 0.0, 20.0),
                        testutil::uniform(rng, 0.0, 20.0)});

    // independent reading of the stop rule
    double expected = mu_set.back();
    std::size_t expected_visits = mu_set.size();
    bool expected_exhausted = true;
    for (std::size_t k = 0; k < mu_set.size(); ++k) {
      if ((L - 1) * script[k].first <= script[k].second ||
          script[k].first <= 8.0) {
        expected = mu_set[k];
        expected_visits = k + 1;
        expected_exhausted = false;
        break;
      }
    }

    TuneTrace trace;
    std::size_t calls = 0;
    const double chosen = find_mu_core(
        mu_set, L, 8.0,
        [&](double, std::size_t i) {
          ++calls;
          MuStep s;
          s.r_s = script[i].first;
          s.r_n = script[i].second;
          return s;
        },
        false, trace);
    CHECK(chosen == expected);
    CHECK(calls == expected_visits);
    CHECK(trace.mu_exhausted == expected_exhausted);
    for (std::size_t i = 1; i < trace.mu_steps.size(); ++i)
      CHECK(trace.mu_steps[i].mu > trace.mu_steps[i - 1].mu);
  }
}

TEST_CASE("find_mu core in visit-all mode walks the whole set") {
  const std::vector<double> mu_set = {0.1, 0.5, 1.0};
  TuneTrace trace;
  std::size_t calls = 0;
  const double chosen = find_mu_core(
      mu_set, 2, 8.0,
      [&](double, std::size_t i) {
        ++calls;
        MuStep s;
        s.r_s = (i == 1) ? 5.0 : 50.0;  // fires only at index 1
        s.r_n = 1.0;
        return s;
      },
      true, trace);
  CHECK(calls == 3);
  CHECK(chosen == 0.5);
  CHECK_FALSE(trace.mu_exhausted);
}

TEST_CASE("train_df_dnn on disjoint tones tunes and routes cleanly") {
  const int rate = 8000;
  const StftConfig cfg{256, 128, 256};
  const std::vector<TimeSignal> sources = {tone(500.0, 16000, rate),
                                           tone(2500.0, 16000, rate)};
  Arch arch{24, 24};
  HyperParams hp;
  TrainConfig train_cfg;
  train_cfg.epochs = 40;
  train_cfg.seed = 42;

  const DfTrainResult result = train_df_dnn(sources, 0, cfg, arch, hp, train_cfg);

  const std::vector<double> grid = gamma_grid(hp);
  CHECK(std::count(grid.begin(), grid.end(), result.tuned.gamma) == 1);
  CHECK(std::count(hp.mu_set.begin(), hp.mu_set.end(), result.tuned.mu) == 1);
  CHECK(result.trace.re_values.size() == grid.size());
  CHECK(result.trace.mu_steps.size() >= 1);

  // the fixture is easy: the final model must route well and avoid leakage
  const Eigen::MatrixXd ys = stft(sources[0], cfg).magnitude;
  const Eigen::MatrixXd yn = stft(sources[1], cfg).magnitude;
  const auto [r_s, r_n] = energy_ratios(result.model, ys, yn);
  CHECK(r_s > hp.rs_min);
  CHECK(error_ratio(result.model, ys, yn) > 1.0);
}

TEST_CASE("train_df_dnn rejects bad indices and short lists") {
  const StftConfig cfg{256, 128, 256};
  const std::vector<TimeSignal> sources = {tone(500.0, 8000, 8000),
                                           tone(1500.0, 8000, 8000)};
  CHECK_THROWS_AS(
      train_df_dnn(sources, 2, cfg, Arch{8, 8}, HyperParams{}, TrainConfig{}),
      std::invalid_argument);
  CHECK_THROWS_AS(train_df_dnn({sources[0]}, 0, cfg, Arch{8, 8}, HyperParams{},
                               TrainConfig{}),
                  std::invalid_argument);
}

TEST_CASE("separate_one with forced masks scales the mixture") {
  const StftConfig cfg{256, 128, 256};
  const TimeSignal mix = tone(1000.0, 8192, 8000);
  const int bins = cfg.bins();

  const TimeSignal pass =
      separate_one(constant_head_model(bins, 1.0, 0.0), mix, cfg);
  const TimeSignal silent =
      separate_one(constant_head_model(bins, 0.0, 1.0), mix, cfg);
  const TimeSignal half =
      separate_one(constant_head_model(bins, 1.0, 1.0), mix, cfg);

  double err_pass = 0.0, den = 0.0, err_half = 0.0, peak_silent = 0.0;
  for (std::size_t i = cfg.window_len; i + cfg.window_len < pass.size(); ++i) {
    const double d = pass.samples[i] - mix.samples[i];
    const double h = half.samples[i] - 0.5 * mix.samples[i];
    err_pass += d * d;
    err_half += h * h;
    den += mix.samples[i] * mix.samples[i];
    peak_silent = std::max(peak_silent, std::abs(silent.samples[i]));
  }
  CHECK(std::sqrt(err_pass / den) < 1e-6);
  CHECK(std::sqrt(err_half / (0.25 * den)) < 1e-6);
  CHECK(peak_silent < 1e-9);
}

TEST_CASE("separate_all with complementary masks reassembles the mixture") {
  const StftConfig cfg{256, 128, 256};
  const int bins = cfg.bins();
  std::mt19937_64 rng(60);
  const TimeSignal mix = testutil::random_signal(8192, 8000, rng);
  const std::vector<MaskNetModel> models = {constant_head_model(bins, 1.0, 0.0),
                                            constant_head_model(bins, 0.0, 1.0)};
  const std::vector<TimeSignal> est = separate_all(models, mix, cfg);
  REQUIRE(est.size() == 2);
  double err = 0.0, den = 0.0;
  for (std::size_t i = cfg.window_len; i + cfg.window_len < mix.size(); ++i) {
    const double sum = est[0].samples[i] + est[1].samples[i];
    err += (sum - mix.samples[i]) * (sum - mix.samples[i]);
    den += mix.samples[i] * mix.samples[i];
  }
  CHECK(std::sqrt(err / den) < 1e-6);
}

TEST_CASE("separate_all needs at least two models") {
  const StftConfig cfg{256, 128, 256};
  const TimeSignal mix = tone(800.0, 4096, 8000);
  CHECK_THROWS_AS(separate_all({constant_head_model(cfg.bins(), 1.0, 0.0)},
                               mix, cfg),
                  std::invalid_argument);
}

TEST_CASE("separate_all band-routing on three disjoint tones") {
  const int rate = 8000;
  const StftConfig cfg{256, 128, 256};
  const int bins = cfg.bins();
  const std::vector<double> freqs = {500.0, 1500.0, 3000.0};

  TimeSignal mix;
  mix.sample_rate = rate;
  mix.samples.assign(8192, 0.0);
  for (double f : freqs) {
    const TimeSignal t = tone(f, mix.size(), rate);
    for (std::size_t i = 0; i < mix.size(); ++i) mix.samples[i] += t.samples[i];
  }

  // hand-built band routers: source head active on its own third of the bins
  std::vector<MaskNetModel> models;
  const double bin_hz = static_cast<double>(rate) / cfg.fft_len;
  const std::vector<std::pair<double, double>> bands = {
      {0.0, 1000.0}, {1000.0, 2250.0}, {2250.0, 4000.0}};
  for (const auto& band : bands) {
    MaskNetModel m = constant_head_model(bins, 0.0, 0.0);
    for (int k = 0; k < bins; ++k) {
      const double f = k * bin_hz;
      if (f >= band.first && f < band.second)
        m.biases[2][k] = 4.0;
      else
        m.biases[2][bins + k] = 4.0;
    }
    models.push_back(std::move(m));
  }

  const std::vector<TimeSignal> est = separate_all(models, mix, cfg);
  for (std::size_t j = 0; j < est.size(); ++j) {
    TimeSignal interior;
    interior.sample_rate = rate;
    interior.samples.assign(est[j].samples.begin() + cfg.window_len,
                            est[j].samples.end() - cfg.window_len);
    CHECK(testutil::band_energy_fraction(interior, freqs[j] - 100.0,
                                         freqs[j] + 100.0) > 0.9);
  }
}

}  // TEST_SUITE
