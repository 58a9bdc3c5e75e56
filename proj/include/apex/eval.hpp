#pragma once

// Leave-one-subject-out harness. Every fold refits the feature mask and the
// member trees on the remaining cohort, so no statistic of the test subject
// leaks into its own model. Folds run independently and the report is
// assembled in ascending test-subject order, which keeps output byte-stable
// across --jobs settings.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "apex/ensemble.hpp"
#include "apex/selection.hpp"
#include "apex/tree.hpp"

namespace apex {

struct RocPoint {
  double fpr = 0;
  double tpr = 0;
};

struct WindowOutcome {
  int video_id = 0;
  int window_index = 0;
  double aggregate = 0;
  int predicted = 0;
  int truth = 0;
};

struct FoldResult {
  int test_subject_id = 0;
  std::vector<WindowOutcome> windows;
  double window_accuracy = 0;
  double trial_accuracy = 0;  // majority vote per video, ties go positive
  bool roc_valid = false;     // false when the test labels are single-class
  std::vector<RocPoint> roc;  // empty when roc_valid is false
  double auc = 0;             // meaningful only when roc_valid
  FeatureMask mask;           // this fold's refit selection
  std::vector<int> member_subjects;  // training order, test subject absent
  std::vector<double> products;
  std::vector<double> normalized;
  AttentionWeights weights;
};

struct RocBandPoint {
  double fpr = 0;
  double tpr_mean = 0;
  double tpr_min = 0;
  double tpr_max = 0;
};

struct EvaluationReport {
  Task task = Task::arousal;
  WeightMode mode = WeightMode::attention;
  std::uint64_t seed = 0;
  std::vector<FoldResult> folds;  // ascending test-subject id
  double mean_window_accuracy = 0;
  double mean_trial_accuracy = 0;
  std::vector<RocBandPoint> mean_roc;  // 101-point fpr grid, step 0.01
  double mean_auc = 0;                 // over roc-valid folds
  double best_auc = 0;
  double worst_auc = 0;
  int best_subject = -1;
  int worst_subject = -1;
  std::vector<int> roc_excluded_subjects;
};

struct EvalParams {
  TreeParams tree;
  SelectionParams selection;  // per-fold seed is derived, not taken from here
  WeightMode mode = WeightMode::attention;
  std::uint64_t seed = 0;
  unsigned jobs = 0;  // 0 = all cores; results independent of the value
};

// Fraction of positions where the two label sequences agree.
double accuracy(const std::vector<int>& predicted,
                const std::vector<int>& truth);

// Threshold sweep over distinct scores, descending; starts at (0,0), ends at
// (1,1), fpr and tpr non-decreasing. Both classes must be present.
std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                const std::vector<int>& labels);

// Trapezoidal area over fpr.
double auc_of(const std::vector<RocPoint>& roc);

// Per grid fpr in {0, 0.01, ..., 1}: tpr of each curve by linear
// interpolation (vertical segments contribute their upper end), then
// mean/min/max across curves.
std::vector<RocBandPoint> average_roc_vertical(
    const std::vector<std::vector<RocPoint>>& curves);

EvaluationReport loso_evaluate(const std::vector<SubjectDataset>& cohort,
                               Task task, const EvalParams& params);

// Canonical JSON rendering; byte-stable for identical reports.
std::string report_to_json(const EvaluationReport& report);
void write_report_json(const std::filesystem::path& path,
                       const EvaluationReport& report);

// fpr,tpr_mean,tpr_min,tpr_max over the mean-ROC grid.
void write_roc_csv(const std::filesystem::path& path,
                   const EvaluationReport& report);

// Static plot of the mean curve inside its min/max band.
void write_roc_svg(const std::filesystem::path& path,
                   const EvaluationReport& report);

// One row per (test subject, member): the weight table across all folds.
void write_weights_table(const std::filesystem::path& path,
                         const EvaluationReport& report);

}  // namespace apex
