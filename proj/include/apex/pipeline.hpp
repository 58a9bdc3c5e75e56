#pragma once

// Glue between raw recordings and the modeling layer: one config object whose
// defaults reproduce the published processing constants, and a builder that
// turns ingested subjects into per-subject feature datasets.

#include <cstdint>
#include <vector>

#include "apex/dataset.hpp"
#include "apex/ensemble.hpp"
#include "apex/eval.hpp"
#include "apex/features.hpp"
#include "apex/selection.hpp"
#include "apex/tree.hpp"

namespace apex {

struct RunConfig {
  Task task = Task::arousal;
  ExtractionConfig extraction;  // 0.67-40 Hz ECG, 0.2 Hz GSR, 5 s / 5 s
  SelectionParams selection;    // k = 10 kept features
  TreeParams tree;
  WeightMode mode = WeightMode::attention;
  std::vector<int> exclude_subjects;
  std::uint64_t seed = 0;
  unsigned jobs = 0;  // 0 = all cores; outputs independent of the value
};

struct PipelineResult {
  std::vector<SubjectDataset> cohort;   // ascending subject id
  std::vector<SkipEntry> skipped;       // windows dropped during extraction
};

// Excluded ids are dropped first (unknown ids are ignored), features are
// extracted trial-parallel, min-max normalized within each subject, and
// grouped per subject. Subjects whose every window was skipped disappear
// from the cohort; the skip report records why.
PipelineResult build_cohort(const std::vector<RawSubject>& subjects,
                            const RunConfig& config);

// The evaluation parameters implied by a run config.
EvalParams eval_params_of(const RunConfig& config);

}  // namespace apex
