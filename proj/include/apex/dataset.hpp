#pragma once

// On-disk dataset layout, shared by the generator and the ingestion path:
//
//   personality.csv               subject_id + the five trait columns
//   trials.csv                    subject_id,video_id,arousal,valence
//   subject_<id>/ecg_<video>.csv  t_seconds,value
//   subject_<id>/gsr_<video>.csv  t_seconds,value
//
// trials.csv accepts either pre-binarized {0,1} labels (passed through) or
// continuous self-ratings, which are median-split per task across all trials
// (strictly above the median maps to 1). Explicit thresholds override both.

#include <filesystem>
#include <optional>
#include <vector>

#include "apex/ensemble.hpp"
#include "apex/features.hpp"

namespace apex {

// One subject's raw recordings plus traits; the input to the pipeline.
struct RawSubject {
  int subject_id = 0;
  PersonalityTraits traits;
  std::vector<Trial> trials;  // ascending video order
};

struct BinarizeSpec {
  std::optional<double> arousal_threshold;
  std::optional<double> valence_threshold;
};

// Median as the average of the two middle order statistics.
double rating_median(const std::vector<double>& ratings);

// 1 iff rating > threshold. Without an explicit threshold, ratings that are
// all exactly 0 or 1 pass through unchanged; anything else is split at the
// median.
std::vector<int> binarize_ratings(const std::vector<double>& ratings,
                                  std::optional<double> threshold = {});

// Writes the full layout; labels are stored as {0,1}.
void write_dataset(const std::filesystem::path& root,
                   const std::vector<RawSubject>& subjects);

// Reads and validates the layout. Errors name the offending file and row.
// Subjects come back in ascending id order, trials in ascending video order.
std::vector<RawSubject> ingest_dataset(const std::filesystem::path& root,
                                       const BinarizeSpec& binarize = {});

// One subject id per line; blank lines and '#' comments are skipped.
std::vector<int> read_exclusion_list(const std::filesystem::path& path);

}  // namespace apex
