#include "apex/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"

#include "apex/errors.hpp"
#include "apex/rng.hpp"

namespace apex {
namespace {

// Zero-sum mixing rows: adding a constant to every trait leaves the style
// untouched, so only the trait *profile* matters. The rows are orthogonal,
// keeping the two response styles independent across a random cohort.
constexpr std::array<double, 5> kArousalMix = {1, -1, 1, -1, 0};
constexpr std::array<double, 5> kValenceMix = {1, 1, -1, -1, 0};

constexpr int kMaxBalanceRetries = 100;

// Stream ids for derive_seed; signal streams use kSignalStream + subject
// index, re-derived per video.
constexpr std::uint64_t kTraitStream = 0;
constexpr std::uint64_t kRateStream = 1;
constexpr std::uint64_t kLabelStream = 2;
constexpr std::uint64_t kStyleStream = 3;
constexpr std::uint64_t kSignalStream = 100;

void check_config(const SynthConfig& config) {
  if (config.n_subjects < 1) throw ConfigError("n_subjects must be >= 1");
  if (config.n_videos < 1) throw ConfigError("n_videos must be >= 1");
  if (!(config.trial_seconds > 0)) {
    throw ConfigError("trial_seconds must be positive");
  }
  if (!(config.fs_ecg > 0) || !(config.fs_gsr > 0)) {
    throw ConfigError("sampling rates must be positive");
  }
  if (!(config.coupling >= 0.0 && config.coupling <= 1.0)) {
    throw ConfigError("coupling must lie in [0,1]");
  }
  if (!(config.noise_sd >= 0.0)) {
    throw ConfigError("noise_sd must be non-negative");
  }
}

double mix(const std::array<double, 5>& w, const PersonalityTraits& traits) {
  const auto values = traits.as_array();
  double sum = 0;
  for (std::size_t d = 0; d < values.size(); ++d) sum += w[d] * values[d];
  return sum;
}

// style = tanh(s/3) with s a coupling-weighted blend of the trait mix and a
// uniform(-6,6) subject noise; both blend inputs share the [-6,6] scale.
double style_of(double trait_mix, double coupling, double eps) {
  const double s = coupling * 0.5 * trait_mix + (1.0 - coupling) * eps;
  return std::tanh(s / 3.0);
}

Signal make_ecg(const SynthConfig& config, double hr_bpm, double rr_sd_ms,
                Rng& rng, std::vector<std::size_t>& true_peaks) {
  const std::size_t n =
      static_cast<std::size_t>(std::llround(config.trial_seconds * config.fs_ecg));
  Signal ecg;
  ecg.sampling_rate_hz = config.fs_ecg;
  ecg.samples.assign(n, 0.0);

  // Slow baseline wander; the extraction band-pass removes it.
  const double wander_phase = rng.uniform() * 2 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / config.fs_ecg;
    ecg.samples[i] =
        0.15 * std::sin(2 * std::numbers::pi * 0.25 * t + wander_phase);
  }

  // Gaussian bump per beat; interval jitter carries the variability signal.
  const double sigma = 0.010;
  const double mean_rr = 60.0 / hr_bpm;
  double t = 0.4;
  while (t < config.trial_seconds - 0.25) {
    const auto center = static_cast<std::ptrdiff_t>(std::llround(t * config.fs_ecg));
    if (center >= 0 && static_cast<std::size_t>(center) < n) {
      true_peaks.push_back(static_cast<std::size_t>(center));
    }
    const auto lo = std::max<std::ptrdiff_t>(
        0, center - static_cast<std::ptrdiff_t>(5 * sigma * config.fs_ecg));
    const auto hi = std::min<std::ptrdiff_t>(
        static_cast<std::ptrdiff_t>(n) - 1,
        center + static_cast<std::ptrdiff_t>(5 * sigma * config.fs_ecg));
    for (std::ptrdiff_t i = lo; i <= hi; ++i) {
      const double dt = static_cast<double>(i) / config.fs_ecg - t;
      ecg.samples[static_cast<std::size_t>(i)] +=
          std::exp(-dt * dt / (2 * sigma * sigma));
    }
    const double rr = mean_rr + rng.normal() * rr_sd_ms / 1000.0;
    t += std::max(rr, 0.3);
  }

  for (auto& sample : ecg.samples) {
    sample += 0.03 * config.noise_sd * rng.normal();
  }
  return ecg;
}

Signal make_gsr(const SynthConfig& config, double tonic_us, double scr_per_min,
                Rng& rng) {
  const std::size_t n =
      static_cast<std::size_t>(std::llround(config.trial_seconds * config.fs_gsr));
  Signal gsr;
  gsr.sampling_rate_hz = config.fs_gsr;
  gsr.samples.assign(n, 0.0);

  const double slope = rng.uniform(-0.002, 0.002);

  // Poisson phasic events with a biexponential shape (~0.75 s rise, ~2.5 s
  // decay); the last 4 s stay event-free so every response fits the trial.
  struct Scr {
    double onset_s;
    double amplitude_us;
  };
  std::vector<Scr> events;
  const double rate_per_s = scr_per_min / 60.0;
  double t = rng.exponential(rate_per_s);
  while (t < config.trial_seconds - 4.0) {
    events.push_back({t, rng.uniform(0.2, 0.8)});
    t += rng.exponential(rate_per_s);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const double ts = static_cast<double>(i) / config.fs_gsr;
    double value = tonic_us + slope * ts;
    for (const auto& scr : events) {
      const double tau = ts - scr.onset_s;
      if (tau <= 0) continue;
      value += scr.amplitude_us * (1.0 - std::exp(-tau / 0.75)) *
               std::exp(-tau / 2.5);
    }
    value += 0.005 * config.noise_sd * rng.normal();
    gsr.samples[i] = std::max(value, 0.01);
  }
  return gsr;
}

}  // namespace

SynthCohort generate_cohort(const SynthConfig& config) {
  check_config(config);

  SynthCohort cohort;
  cohort.truth.w_arousal = kArousalMix;
  cohort.truth.w_valence = kValenceMix;

  Rng trait_rng(derive_seed(config.seed, kTraitStream));
  Rng style_rng(derive_seed(config.seed, kStyleStream));
  for (int i = 0; i < config.n_subjects; ++i) {
    RawSubject subject;
    subject.subject_id = i + 1;
    subject.traits.extraversion = trait_rng.uniform(1, 7);
    subject.traits.agreeableness = trait_rng.uniform(1, 7);
    subject.traits.conscientiousness = trait_rng.uniform(1, 7);
    subject.traits.emotional_stability = trait_rng.uniform(1, 7);
    subject.traits.openness = trait_rng.uniform(1, 7);

    SubjectStyle style;
    style.subject_id = subject.subject_id;
    style.arousal = style_of(mix(kArousalMix, subject.traits), config.coupling,
                             style_rng.uniform(-6, 6));
    style.valence = style_of(mix(kValenceMix, subject.traits), config.coupling,
                             style_rng.uniform(-6, 6));
    cohort.truth.styles.push_back(style);
    cohort.subjects.push_back(std::move(subject));
  }

  // Base rates and labels are redrawn together until the realized cohort
  // positive rate of each task lands inside [0.35, 0.65].
  Rng rate_rng(derive_seed(config.seed, kRateStream));
  Rng label_rng(derive_seed(config.seed, kLabelStream));
  std::vector<std::vector<int>> labels_a, labels_v;
  for (int attempt = 0;; ++attempt) {
    if (attempt >= kMaxBalanceRetries) {
      throw ProtocolError(
          "could not balance cohort labels within [0.35,0.65] after " +
          std::to_string(kMaxBalanceRetries) + " attempts");
    }
    cohort.truth.base_rate_arousal.clear();
    cohort.truth.base_rate_valence.clear();
    for (int v = 0; v < config.n_videos; ++v) {
      cohort.truth.base_rate_arousal.push_back(rate_rng.uniform(0.35, 0.65));
      cohort.truth.base_rate_valence.push_back(rate_rng.uniform(0.35, 0.65));
    }
    labels_a.assign(config.n_subjects, {});
    labels_v.assign(config.n_subjects, {});
    int pos_a = 0, pos_v = 0;
    for (int i = 0; i < config.n_subjects; ++i) {
      for (int v = 0; v < config.n_videos; ++v) {
        const int la =
            label_rng.bernoulli(cohort.truth.base_rate_arousal[v]) ? 1 : 0;
        const int lv =
            label_rng.bernoulli(cohort.truth.base_rate_valence[v]) ? 1 : 0;
        labels_a[i].push_back(la);
        labels_v[i].push_back(lv);
        pos_a += la;
        pos_v += lv;
      }
    }
    const double trials =
        static_cast<double>(config.n_subjects) * config.n_videos;
    const double rate_a = pos_a / trials;
    const double rate_v = pos_v / trials;
    if (rate_a >= 0.35 && rate_a <= 0.65 && rate_v >= 0.35 && rate_v <= 0.65) {
      break;
    }
  }

  for (int i = 0; i < config.n_subjects; ++i) {
    RawSubject& subject = cohort.subjects[static_cast<std::size_t>(i)];
    const SubjectStyle& style = cohort.truth.styles[static_cast<std::size_t>(i)];
    for (int v = 0; v < config.n_videos; ++v) {
      Rng rng(derive_seed(derive_seed(config.seed, kSignalStream + i),
                          static_cast<std::uint64_t>(v)));
      Trial trial;
      trial.subject_id = subject.subject_id;
      trial.video_id = v;
      trial.label_arousal = labels_a[static_cast<std::size_t>(i)][v];
      trial.label_valence = labels_v[static_cast<std::size_t>(i)][v];

      TrialTruth truth;
      truth.subject_id = subject.subject_id;
      truth.video_id = v;

      // High arousal moves heart rate and the skin-conductance event rate
      // along the subject's arousal style; high valence trades beat-interval
      // spread and tonic level along the valence style.
      const int da = 2 * trial.label_arousal - 1;
      const int dv = 2 * trial.label_valence - 1;
      truth.heart_rate_bpm = 72.0 + 12.0 * style.arousal * da + rng.uniform(-2, 2);
      truth.rr_sd_ms = std::clamp(40.0 - 25.0 * style.valence * dv, 5.0, 120.0);
      truth.scr_per_minute =
          std::clamp(6.0 + 4.0 * style.arousal * da, 0.5, 20.0);
      const double tonic =
          2.0 + 0.3 * style.valence * dv + rng.uniform(-0.1, 0.1);

      trial.ecg = make_ecg(config, truth.heart_rate_bpm, truth.rr_sd_ms, rng,
                           truth.ecg_peaks);
      trial.gsr = make_gsr(config, tonic, truth.scr_per_minute, rng);

      subject.trials.push_back(std::move(trial));
      cohort.truth.trials.push_back(std::move(truth));
    }
  }
  return cohort;
}

void write_ground_truth(const std::filesystem::path& path,
                        const GroundTruth& truth) {
  nlohmann::json doc;
  doc["w_arousal"] = truth.w_arousal;
  doc["w_valence"] = truth.w_valence;
  doc["base_rate_arousal"] = truth.base_rate_arousal;
  doc["base_rate_valence"] = truth.base_rate_valence;
  doc["styles"] = nlohmann::json::array();
  for (const auto& style : truth.styles) {
    doc["styles"].push_back({{"subject_id", style.subject_id},
                             {"arousal", style.arousal},
                             {"valence", style.valence}});
  }
  doc["trials"] = nlohmann::json::array();
  for (const auto& trial : truth.trials) {
    doc["trials"].push_back({{"subject_id", trial.subject_id},
                             {"video_id", trial.video_id},
                             {"heart_rate_bpm", trial.heart_rate_bpm},
                             {"rr_sd_ms", trial.rr_sd_ms},
                             {"scr_per_minute", trial.scr_per_minute},
                             {"ecg_peaks", trial.ecg_peaks}});
  }
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  out << doc.dump() << "\n";
}

}  // namespace apex
