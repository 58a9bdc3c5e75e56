#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "apex/signal.hpp"

namespace apex {

enum class Modality { hrv, gsr };

// One entry of the fixed feature registry. `canonical` marks the ten
// features whose definitions come straight from the published feature list;
// the remainder are a documented reconstruction bringing the set to 42.
struct FeatureDef {
  Modality modality;
  std::string name;
  bool canonical;
};

// Fixed ordering: the 22 HRV features first, then the 20 GSR features.
const std::vector<FeatureDef>& feature_registry();
std::size_t registry_size();

// Column name used in CSV headers: "hrv_mav", "gsr_meanfreq", ...
std::string feature_column(const FeatureDef& def);

// Index into feature_registry() for a column name; throws ConfigError for
// unknown names.
std::size_t feature_index(std::string_view column);

struct RRSeries {
  std::vector<double> intervals_ms;
};

struct FeatureVector {
  int subject_id = 0;
  int video_id = 0;
  int window_index = 0;
  int label_arousal = 0;
  int label_valence = 0;
  std::vector<double> values;  // registry order, registry_size() entries
};

struct FeatureMatrix {
  std::vector<FeatureVector> rows;
};

struct Trial {
  int subject_id = 0;
  int video_id = 0;
  int label_arousal = 0;
  int label_valence = 0;
  Signal ecg;
  Signal gsr;
};

struct SkipEntry {
  int subject_id = 0;
  int video_id = 0;
  std::string reason;
};

struct ExtractionConfig {
  FilterSpec ecg_bandpass = FilterSpec::bandpass(0.67, 40.0);
  FilterSpec gsr_lowpass = FilterSpec::lowpass(0.2);
  double window_s = 5.0;
  double shift_s = 5.0;
  int jobs = 0;  // 0 = hardware concurrency
};

struct ExtractionResult {
  FeatureMatrix matrix;
  std::vector<SkipEntry> skipped;
};

// QRS detection on a band-passed ECG: derivative, squaring, 150 ms moving
// integration, adaptive threshold at half the rolling mean of the last 8
// integrated peak heights, 200 ms refractory period. Returns strictly
// increasing sample indices; throws InsufficientSignalError when fewer than
// 3 peaks are found or the record is shorter than 2 s.
std::vector<std::size_t> detect_r_peaks(const Signal& ecg);

// Successive peak distances in milliseconds, gated to the physiological
// (200, 3000) ms band. Throws InsufficientSignalError when fewer than 3
// peaks are given or fewer than 2 intervals survive gating.
RRSeries rr_from_peaks(const std::vector<std::size_t>& peaks, double fs_hz);

// The 22 HRV feature values in registry order.
std::vector<double> hrv_features(const RRSeries& rr);

// The 20 GSR feature values in registry order.
std::vector<double> gsr_features(const Signal& window);

ExtractionResult extract_matrix(const std::vector<Trial>& trials,
                                const ExtractionConfig& config = {});

// Per-subject, per-feature min-max rescaling to [0,1]; a constant column
// maps to zero. Idempotent.
FeatureMatrix normalize_per_subject(const FeatureMatrix& matrix);

void write_feature_csv(const std::filesystem::path& path,
                       const FeatureMatrix& matrix);
FeatureMatrix read_feature_csv(const std::filesystem::path& path);
void write_skip_report(const std::filesystem::path& path,
                       const std::vector<SkipEntry>& skipped);

}  // namespace apex
