#pragma once

// Seeded synthetic cohort generator. Personality shapes each subject's
// response style, i.e. how heart rate, beat-interval variability, and skin
// conductance move with the trial labels; the coupling knob interpolates
// between a style fully determined by the traits (1) and one independent of
// them (0). Labels themselves come from per-video base rates, never from
// personality, so coupling changes cross-subject predictability without
// touching class balance.

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "apex/dataset.hpp"
#include "apex/ensemble.hpp"
#include "apex/features.hpp"

namespace apex {

struct SynthConfig {
  int n_subjects = 48;
  int n_videos = 36;
  double trial_seconds = 60.0;
  double fs_ecg = 256.0;
  double fs_gsr = 128.0;
  double coupling = 0.8;  // 0 = style independent of traits, 1 = determined
  double noise_sd = 1.0;  // scales additive sensor noise
  std::uint64_t seed = 0;
};

struct SubjectStyle {
  int subject_id = 0;
  double arousal = 0;  // in (-1,1); sign flips the label-to-signal mapping
  double valence = 0;
};

struct TrialTruth {
  int subject_id = 0;
  int video_id = 0;
  std::vector<std::size_t> ecg_peaks;  // true beat sample indices
  double heart_rate_bpm = 0;
  double rr_sd_ms = 0;
  double scr_per_minute = 0;
};

struct GroundTruth {
  std::array<double, 5> w_arousal{};  // zero-sum trait mixing rows
  std::array<double, 5> w_valence{};
  std::vector<SubjectStyle> styles;
  std::vector<double> base_rate_arousal;  // per video
  std::vector<double> base_rate_valence;
  std::vector<TrialTruth> trials;  // (subject, video) order
};

struct SynthCohort {
  std::vector<RawSubject> subjects;
  GroundTruth truth;
};

// Deterministic for a given config: every stream is derived from the seed.
// Realized cohort positive rates are kept inside [0.35, 0.65] per task by
// redrawing the base rates, at most 100 times (ProtocolError beyond that).
SynthCohort generate_cohort(const SynthConfig& config);

// Sidecar JSON so evaluations on generated data can be checked against the
// quantities the generator actually used.
void write_ground_truth(const std::filesystem::path& path,
                        const GroundTruth& truth);

}  // namespace apex
