#include "apex/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "apex/errors.hpp"
#include "apex/features.hpp"
#include "apex/signal.hpp"
#include "doctest.h"

namespace {

double dot5(const std::array<double, 5>& w, const std::array<double, 5>& v) {
  double sum = 0;
  for (std::size_t d = 0; d < 5; ++d) sum += w[d] * v[d];
  return sum;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Fraction of true beat indices with a detected peak within the tolerance.
double recovery_rate(const std::vector<std::size_t>& truth,
                     const std::vector<std::size_t>& detected,
                     std::size_t tol) {
  std::size_t hit = 0;
  for (std::size_t p : truth) {
    for (std::size_t d : detected) {
      const std::size_t lo = p > tol ? p - tol : 0;
      if (d >= lo && d <= p + tol) {
        ++hit;
        break;
      }
    }
  }
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace

TEST_CASE("generator config validation") {
  apex::SynthConfig config;
  config.n_subjects = 0;
  CHECK_THROWS_AS(apex::generate_cohort(config), apex::ConfigError);
  config = {};
  config.coupling = 1.5;
  CHECK_THROWS_AS(apex::generate_cohort(config), apex::ConfigError);
  config = {};
  config.noise_sd = -0.1;
  CHECK_THROWS_AS(apex::generate_cohort(config), apex::ConfigError);
  config = {};
  config.trial_seconds = 0;
  CHECK_THROWS_AS(apex::generate_cohort(config), apex::ConfigError);
  config = {};
  config.fs_gsr = -128;
  CHECK_THROWS_AS(apex::generate_cohort(config), apex::ConfigError);
}

TEST_CASE("default cohort shape, balance, and beat recovery") {
  apex::SynthConfig config;
  config.seed = 4242;
  const auto cohort = apex::generate_cohort(config);

  REQUIRE(cohort.subjects.size() == 48);
  CHECK(cohort.truth.styles.size() == 48);
  CHECK(cohort.truth.trials.size() == 48 * 36);
  CHECK(cohort.truth.base_rate_arousal.size() == 36);

  int pos_a = 0, pos_v = 0, trials = 0;
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    const auto& subject = cohort.subjects[i];
    CHECK(subject.subject_id == static_cast<int>(i) + 1);
    REQUIRE(subject.trials.size() == 36);
    const auto traits = subject.traits.as_array();
    for (double t : traits) {
      CHECK(t >= 1.0);
      CHECK(t <= 7.0);
    }
    CHECK(std::abs(cohort.truth.styles[i].arousal) < 1.0);
    CHECK(std::abs(cohort.truth.styles[i].valence) < 1.0);
    for (const auto& trial : subject.trials) {
      CHECK(trial.ecg.samples.size() == 15360);
      CHECK(trial.ecg.sampling_rate_hz == 256.0);
      CHECK(trial.gsr.samples.size() == 7680);
      CHECK(trial.gsr.sampling_rate_hz == 128.0);
      pos_a += trial.label_arousal;
      pos_v += trial.label_valence;
      ++trials;
    }
  }
  const double rate_a = static_cast<double>(pos_a) / trials;
  const double rate_v = static_cast<double>(pos_v) / trials;
  CHECK(rate_a >= 0.35);
  CHECK(rate_a <= 0.65);
  CHECK(rate_v >= 0.35);
  CHECK(rate_v <= 0.65);

  // Beat recovery on a deterministic subset of trials: detection on the
  // band-passed signal must find at least 95% of the true beats within
  // 5 samples (~20 ms).
  const auto band = apex::FilterSpec::bandpass(0.67, 40.0);
  double recovered_sum = 0;
  int sampled = 0;
  for (std::size_t k = 0; k < cohort.truth.trials.size(); k += 97) {
    const auto& truth = cohort.truth.trials[k];
    const auto& trial =
        cohort.subjects[static_cast<std::size_t>(truth.subject_id - 1)]
            .trials[static_cast<std::size_t>(truth.video_id)];
    const auto filtered = apex::apply_bandpass(trial.ecg, band);
    const auto peaks = apex::detect_r_peaks(filtered);
    REQUIRE_FALSE(truth.ecg_peaks.empty());
    recovered_sum += recovery_rate(truth.ecg_peaks, peaks, 5);
    ++sampled;
  }
  CHECK(sampled >= 17);
  CHECK(recovered_sum / sampled >= 0.95);
}

TEST_CASE("generator determinism") {
  apex::SynthConfig config;
  config.n_subjects = 4;
  config.n_videos = 3;
  config.trial_seconds = 8;
  config.seed = 99;

  const auto a = apex::generate_cohort(config);
  const auto b = apex::generate_cohort(config);
  REQUIRE(a.subjects.size() == b.subjects.size());
  for (std::size_t i = 0; i < a.subjects.size(); ++i) {
    CHECK(a.subjects[i].traits.as_array() == b.subjects[i].traits.as_array());
    CHECK(a.truth.styles[i].arousal == b.truth.styles[i].arousal);
    CHECK(a.truth.styles[i].valence == b.truth.styles[i].valence);
    REQUIRE(a.subjects[i].trials.size() == b.subjects[i].trials.size());
    for (std::size_t v = 0; v < a.subjects[i].trials.size(); ++v) {
      const auto& ta = a.subjects[i].trials[v];
      const auto& tb = b.subjects[i].trials[v];
      CHECK(ta.label_arousal == tb.label_arousal);
      CHECK(ta.label_valence == tb.label_valence);
      CHECK(ta.ecg.samples == tb.ecg.samples);
      CHECK(ta.gsr.samples == tb.gsr.samples);
    }
  }
  for (std::size_t k = 0; k < a.truth.trials.size(); ++k) {
    CHECK(a.truth.trials[k].ecg_peaks == b.truth.trials[k].ecg_peaks);
  }

  apex::SynthConfig other = config;
  other.seed = 100;
  const auto c = apex::generate_cohort(other);
  CHECK(c.subjects[0].traits.as_array() != a.subjects[0].traits.as_array());
}

TEST_CASE("full coupling makes style a pure function of traits") {
  apex::SynthConfig config;
  config.n_subjects = 12;
  config.n_videos = 2;
  config.trial_seconds = 5;
  config.coupling = 1.0;
  config.seed = 7;
  const auto cohort = apex::generate_cohort(config);
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    const auto traits = cohort.subjects[i].traits.as_array();
    const double want_a =
        std::tanh(0.5 * dot5(cohort.truth.w_arousal, traits) / 3.0);
    const double want_v =
        std::tanh(0.5 * dot5(cohort.truth.w_valence, traits) / 3.0);
    CHECK(cohort.truth.styles[i].arousal ==
          doctest::Approx(want_a).epsilon(1e-15));
    CHECK(cohort.truth.styles[i].valence ==
          doctest::Approx(want_v).epsilon(1e-15));
  }
}

TEST_CASE("zero coupling decouples style from traits") {
  double corr_a_sum = 0, corr_v_sum = 0;
  const int n_seeds = 20;
  for (int s = 0; s < n_seeds; ++s) {
    apex::SynthConfig config;
    config.n_subjects = 48;
    config.n_videos = 1;
    config.trial_seconds = 5;
    config.coupling = 0.0;
    config.seed = 1000 + static_cast<std::uint64_t>(s);
    const auto cohort = apex::generate_cohort(config);
    std::vector<double> mix_a, mix_v, style_a, style_v;
    for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
      const auto traits = cohort.subjects[i].traits.as_array();
      mix_a.push_back(dot5(cohort.truth.w_arousal, traits));
      mix_v.push_back(dot5(cohort.truth.w_valence, traits));
      style_a.push_back(cohort.truth.styles[i].arousal);
      style_v.push_back(cohort.truth.styles[i].valence);
    }
    corr_a_sum += pearson(mix_a, style_a);
    corr_v_sum += pearson(mix_v, style_v);
  }
  CHECK(std::abs(corr_a_sum / n_seeds) <= 0.15);
  CHECK(std::abs(corr_v_sum / n_seeds) <= 0.15);
}

TEST_CASE("generated trials feed the extraction pipeline") {
  apex::SynthConfig config;
  config.n_subjects = 3;
  config.n_videos = 4;
  config.trial_seconds = 20;
  config.seed = 31;
  const auto cohort = apex::generate_cohort(config);

  std::vector<apex::Trial> trials;
  for (const auto& subject : cohort.subjects) {
    for (const auto& trial : subject.trials) trials.push_back(trial);
  }
  const auto result = apex::extract_matrix(trials);
  CHECK(result.skipped.empty());
  // 4 windows of 5 s per 20 s trial.
  CHECK(result.matrix.rows.size() == 3 * 4 * 4);
  for (const auto& row : result.matrix.rows) {
    REQUIRE(row.values.size() == apex::registry_size());
    for (double v : row.values) CHECK(std::isfinite(v));
  }
  // Window labels echo their trial's labels.
  for (const auto& row : result.matrix.rows) {
    const auto& trial = cohort.subjects[static_cast<std::size_t>(row.subject_id - 1)]
                            .trials[static_cast<std::size_t>(row.video_id)];
    CHECK(row.label_arousal == trial.label_arousal);
    CHECK(row.label_valence == trial.label_valence);
  }
}
