#include <doctest.h>

#include <algorithm>
#include <vector>

#include "apex/errors.hpp"
#include "apex/pipeline.hpp"
#include "apex/synth.hpp"

namespace {

apex::SynthCohort small_cohort(int subjects, std::uint64_t seed) {
  apex::SynthConfig config;
  config.n_subjects = subjects;
  config.n_videos = 3;
  config.trial_seconds = 10.0;
  config.seed = seed;
  return apex::generate_cohort(config);
}

std::vector<int> cohort_ids(const apex::PipelineResult& result) {
  std::vector<int> ids;
  for (const auto& dataset : result.cohort) ids.push_back(dataset.subject_id);
  return ids;
}

}  // namespace

TEST_CASE("run config defaults reproduce the published processing constants") {
  const apex::RunConfig config;
  CHECK(config.extraction.ecg_bandpass.kind == apex::FilterKind::band_pass);
  CHECK(config.extraction.ecg_bandpass.cutoff_low_hz == 0.67);
  CHECK(config.extraction.ecg_bandpass.cutoff_high_hz == 40.0);
  CHECK(config.extraction.gsr_lowpass.kind == apex::FilterKind::low_pass);
  CHECK(config.extraction.gsr_lowpass.cutoff_low_hz == 0.2);
  CHECK(config.extraction.window_s == 5.0);
  CHECK(config.extraction.shift_s == 5.0);
  CHECK(config.selection.k == 10);
  CHECK(config.mode == apex::WeightMode::attention);
  CHECK(config.task == apex::Task::arousal);
  CHECK(config.seed == 0);
}

TEST_CASE("cohort building groups normalized rows per subject") {
  const auto synth = small_cohort(3, 11);
  const apex::RunConfig config;
  const auto result = apex::build_cohort(synth.subjects, config);

  CHECK(result.skipped.empty());
  REQUIRE(result.cohort.size() == 3);
  for (std::size_t s = 0; s < result.cohort.size(); ++s) {
    const auto& dataset = result.cohort[s];
    CHECK(dataset.subject_id == synth.subjects[s].subject_id);
    CHECK(dataset.traits.as_array() == synth.subjects[s].traits.as_array());
    // 3 videos x 10 s trials in 5 s windows.
    CHECK(dataset.rows.rows.size() == 6);
    for (const auto& row : dataset.rows.rows) {
      CHECK(row.subject_id == dataset.subject_id);
      for (double v : row.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
    // Min-max normalization within the subject: every feature touches both
    // ends of [0,1] unless it was constant.
    for (std::size_t f = 0; f < apex::registry_size(); ++f) {
      double lo = 1e300, hi = -1e300;
      for (const auto& row : dataset.rows.rows) {
        lo = std::min(lo, row.values[f]);
        hi = std::max(hi, row.values[f]);
      }
      CHECK(lo == 0.0);
      CHECK((hi == 1.0 || hi == 0.0));
    }
  }
}

TEST_CASE("cohort building honours exclusions and drops empty subjects") {
  auto synth = small_cohort(3, 23);

  SUBCASE("excluded ids vanish, unknown ids are ignored") {
    apex::RunConfig config;
    config.exclude_subjects = {2, 99};
    const auto result = apex::build_cohort(synth.subjects, config);
    CHECK(cohort_ids(result) == std::vector<int>{1, 3});
  }

  SUBCASE("excluding everyone is an error") {
    apex::RunConfig config;
    config.exclude_subjects = {1, 2, 3};
    CHECK_THROWS_AS(apex::build_cohort(synth.subjects, config),
                    apex::InputError);
  }

  SUBCASE("a subject whose trials all fail extraction disappears") {
    for (auto& trial : synth.subjects[1].trials) {
      std::fill(trial.ecg.samples.begin(), trial.ecg.samples.end(), 0.0);
    }
    const apex::RunConfig config;
    const auto result = apex::build_cohort(synth.subjects, config);
    CHECK(cohort_ids(result) == std::vector<int>{1, 3});
    CHECK(result.skipped.size() == synth.subjects[1].trials.size());
    for (const auto& skip : result.skipped) CHECK(skip.subject_id == 2);
  }

  SUBCASE("a single bad trial only costs its own windows") {
    std::fill(synth.subjects[1].trials[0].ecg.samples.begin(),
              synth.subjects[1].trials[0].ecg.samples.end(), 0.0);
    const apex::RunConfig config;
    const auto result = apex::build_cohort(synth.subjects, config);
    CHECK(cohort_ids(result) == std::vector<int>{1, 2, 3});
    REQUIRE(result.skipped.size() == 1);
    CHECK(result.skipped[0].subject_id == 2);
    CHECK(result.skipped[0].video_id == synth.subjects[1].trials[0].video_id);
    // Two windows per surviving trial.
    CHECK(result.cohort[1].rows.rows.size() == 4);
  }
}

TEST_CASE("cohort building is deterministic and job-count independent") {
  const auto synth = small_cohort(3, 37);
  apex::RunConfig config;
  config.jobs = 1;
  const auto first = apex::build_cohort(synth.subjects, config);
  config.jobs = 3;
  const auto second = apex::build_cohort(synth.subjects, config);

  REQUIRE(first.cohort.size() == second.cohort.size());
  for (std::size_t s = 0; s < first.cohort.size(); ++s) {
    REQUIRE(first.cohort[s].rows.rows.size() ==
            second.cohort[s].rows.rows.size());
    for (std::size_t r = 0; r < first.cohort[s].rows.rows.size(); ++r) {
      CHECK(first.cohort[s].rows.rows[r].values ==
            second.cohort[s].rows.rows[r].values);
    }
  }
}

TEST_CASE("built cohorts evaluate end to end in both weight modes") {
  const auto synth = small_cohort(4, 5);
  apex::RunConfig config;
  config.selection.k = 4;
  config.selection.n_trees = 10;
  config.tree.min_samples_leaf = 2;
  config.seed = 17;
  const auto built = apex::build_cohort(synth.subjects, config);
  REQUIRE(built.cohort.size() == 4);

  for (const auto mode :
       {apex::WeightMode::attention, apex::WeightMode::uniform}) {
    config.mode = mode;
    const auto report = apex::loso_evaluate(built.cohort, config.task,
                                            apex::eval_params_of(config));
    CHECK(report.folds.size() == 4);
    CHECK(report.mean_window_accuracy >= 0.0);
    CHECK(report.mean_window_accuracy <= 1.0);
    for (const auto& fold : report.folds) {
      CHECK(fold.mask.kept.size() == 4);
      CHECK(fold.weights.scores.size() == 3);
    }
  }
}
