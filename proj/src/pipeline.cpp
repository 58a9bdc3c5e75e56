#include "apex/pipeline.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "apex/errors.hpp"

namespace apex {

PipelineResult build_cohort(const std::vector<RawSubject>& subjects,
                            const RunConfig& config) {
  const std::set<int> excluded(config.exclude_subjects.begin(),
                               config.exclude_subjects.end());

  std::vector<Trial> trials;
  std::map<int, const RawSubject*> kept;  // ascending id
  for (const auto& subject : subjects) {
    if (excluded.count(subject.subject_id)) continue;
    if (!kept.emplace(subject.subject_id, &subject).second) {
      throw InputError("build_cohort: duplicate subject id " +
                       std::to_string(subject.subject_id));
    }
    trials.insert(trials.end(), subject.trials.begin(), subject.trials.end());
  }
  if (kept.empty()) throw InputError("build_cohort: every subject excluded");

  ExtractionConfig extraction = config.extraction;
  extraction.jobs = static_cast<int>(config.jobs);
  ExtractionResult extracted = extract_matrix(trials, extraction);
  const FeatureMatrix normalized = normalize_per_subject(extracted.matrix);

  // Rows come back sorted by (subject, video, window); subjects whose every
  // window was skipped simply have no rows and are dropped here.
  PipelineResult result;
  result.skipped = std::move(extracted.skipped);
  std::size_t next = 0;
  for (const auto& [subject_id, subject] : kept) {
    SubjectDataset dataset;
    dataset.subject_id = subject_id;
    dataset.traits = subject->traits;
    while (next < normalized.rows.size() &&
           normalized.rows[next].subject_id == subject_id) {
      dataset.rows.rows.push_back(normalized.rows[next]);
      ++next;
    }
    if (!dataset.rows.rows.empty()) result.cohort.push_back(std::move(dataset));
  }
  return result;
}

EvalParams eval_params_of(const RunConfig& config) {
  EvalParams params;
  params.tree = config.tree;
  params.selection = config.selection;
  params.selection.tree_params = config.tree;
  params.mode = config.mode;
  params.seed = config.seed;
  params.jobs = config.jobs;
  return params;
}

}  // namespace apex
