#include "apex/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "apex/errors.hpp"
#include "apex/rng.hpp"
#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"

namespace {

apex::PersonalityTraits random_traits(apex::Rng& rng) {
  apex::PersonalityTraits t;
  t.extraversion = 1 + 6 * rng.uniform();
  t.agreeableness = 1 + 6 * rng.uniform();
  t.conscientiousness = 1 + 6 * rng.uniform();
  t.emotional_stability = 1 + 6 * rng.uniform();
  t.openness = 1 + 6 * rng.uniform();
  return t;
}

// Trial-level labels, weakly encoded in two feature columns with class
// overlap; videos 0 and 1 are pinned to labels 0 and 1 so every subject and
// every training pool sees both classes.
std::vector<apex::SubjectDataset> make_cohort(const std::vector<int>& ids,
                                              int n_videos,
                                              int windows_per_video,
                                              std::uint64_t seed) {
  apex::Rng rng(seed);
  std::vector<apex::SubjectDataset> cohort;
  for (int sid : ids) {
    apex::SubjectDataset subject;
    subject.subject_id = sid;
    subject.traits = random_traits(rng);
    for (int v = 0; v < n_videos; ++v) {
      int label = rng.bernoulli(0.5) ? 1 : 0;
      if (v == 0) label = 0;
      if (v == 1) label = 1;
      for (int w = 0; w < windows_per_video; ++w) {
        apex::FeatureVector row;
        row.subject_id = sid;
        row.video_id = v;
        row.window_index = w;
        row.label_arousal = label;
        row.label_valence = label;
        row.values.resize(apex::registry_size());
        for (auto& value : row.values) value = rng.uniform();
        row.values[4] = 0.6 * label + 0.4 * rng.uniform();
        row.values[30] = 0.6 * (1 - label) + 0.4 * rng.uniform();
        subject.rows.rows.push_back(row);
      }
    }
    cohort.push_back(std::move(subject));
  }
  return cohort;
}

apex::EvalParams quick_params(std::uint64_t seed) {
  apex::EvalParams params;
  params.seed = seed;
  params.selection.k = 4;
  params.selection.n_trees = 10;
  params.tree.min_samples_leaf = 2;
  return params;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

TEST_CASE("agreement fraction") {
  const std::vector<int> labels = {1, 0, 1, 1, 0};
  CHECK(apex::accuracy(labels, labels) == 1.0);
  std::vector<int> flipped;
  for (int v : labels) flipped.push_back(1 - v);
  CHECK(apex::accuracy(flipped, labels) == 0.0);
  CHECK(apex::accuracy({1, 0, 0, 1, 0}, labels) == 0.8);
  CHECK_THROWS_AS(apex::accuracy({1}, labels), apex::InputError);
  CHECK_THROWS_AS(apex::accuracy({}, {}), apex::InputError);
}

TEST_CASE("roc sweep") {
  SUBCASE("perfect ranking") {
    const auto roc = apex::roc_curve({0.1, 0.9, 0.2, 0.8}, {0, 1, 0, 1});
    CHECK(apex::auc_of(roc) == 1.0);
    const bool hits_corner =
        std::any_of(roc.begin(), roc.end(), [](const apex::RocPoint& p) {
          return p.fpr == 0.0 && p.tpr == 1.0;
        });
    CHECK(hits_corner);
  }
  SUBCASE("inverted ranking") {
    const auto roc = apex::roc_curve({0.9, 0.1, 0.8, 0.2}, {0, 1, 0, 1});
    CHECK(apex::auc_of(roc) == 0.0);
  }
  SUBCASE("uninformative scores give the diagonal") {
    const auto roc = apex::roc_curve({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1});
    REQUIRE(roc.size() == 2);
    CHECK(roc[0].fpr == 0.0);
    CHECK(roc[1].tpr == 1.0);
    CHECK(apex::auc_of(roc) == 0.5);
  }
  SUBCASE("curve endpoints and monotonicity on random inputs") {
    apex::Rng rng(40);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 4 + rng.below(40);
      std::vector<double> scores;
      std::vector<int> labels;
      bool has0 = false, has1 = false;
      for (std::size_t i = 0; i < n; ++i) {
        // Coarse grid injects plenty of tied scores.
        scores.push_back(std::floor(rng.uniform() * 10) / 10);
        labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
        (labels.back() ? has1 : has0) = true;
      }
      if (!has0 || !has1) continue;
      const auto roc = apex::roc_curve(scores, labels);
      CHECK(roc.front().fpr == 0.0);
      CHECK(roc.front().tpr == 0.0);
      CHECK(roc.back().fpr == 1.0);
      CHECK(roc.back().tpr == 1.0);
      for (std::size_t i = 1; i < roc.size(); ++i) {
        CHECK(roc[i].fpr >= roc[i - 1].fpr);
        CHECK(roc[i].tpr >= roc[i - 1].tpr);
      }
    }
  }
  SUBCASE("rejects degenerate input") {
    CHECK_THROWS_AS(apex::roc_curve({0.1, 0.2}, {1, 1}), apex::InputError);
    CHECK_THROWS_AS(apex::roc_curve({0.1, 0.2}, {0, 2}), apex::InputError);
    CHECK_THROWS_AS(apex::roc_curve({}, {}), apex::InputError);
    CHECK_THROWS_AS(apex::roc_curve({0.1}, {0, 1}), apex::InputError);
  }
}

TEST_CASE("area equals the pairwise ranking probability") {
  apex::Rng rng(71);
  int checked = 0;
  while (checked < 100) {
    const std::size_t n = 5 + rng.below(40);
    std::vector<double> scores;
    std::vector<int> labels;
    bool has0 = false, has1 = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores.push_back(rng.bernoulli(0.4)
                           ? std::floor(rng.uniform() * 5) / 5
                           : rng.uniform());
      labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
      (labels.back() ? has1 : has0) = true;
    }
    if (!has0 || !has1) continue;
    ++checked;
    const double area = apex::auc_of(apex::roc_curve(scores, labels));
    const double want = oracle::mann_whitney_auc(scores, labels);
    CHECK(area == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("vertical roc averaging") {
  const auto perfect = apex::roc_curve({0.1, 0.9}, {0, 1});
  const auto diagonal = apex::roc_curve({0.5, 0.5}, {0, 1});

  SUBCASE("grid shape and golden midpoint") {
    const auto band = apex::average_roc_vertical({perfect, diagonal});
    REQUIRE(band.size() == 101);
    CHECK(band.front().fpr == 0.0);
    CHECK(band.back().fpr == 1.0);
    CHECK(band[50].fpr == 0.5);
    CHECK(band[50].tpr_mean == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(band[50].tpr_min == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(band[50].tpr_max == 1.0);
  }
  SUBCASE("identical curves give a zero-width band equal to the curve") {
    apex::Rng rng(3);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 30; ++i) {
      scores.push_back(rng.uniform());
      labels.push_back(i % 2);
    }
    const auto curve = apex::roc_curve(scores, labels);
    const auto one = apex::average_roc_vertical({curve});
    const auto two = apex::average_roc_vertical({curve, curve});
    for (std::size_t g = 0; g < one.size(); ++g) {
      CHECK(one[g].tpr_mean == one[g].tpr_min);
      CHECK(one[g].tpr_mean == one[g].tpr_max);
      CHECK(two[g].tpr_mean == one[g].tpr_mean);
      CHECK(two[g].tpr_min == two[g].tpr_max);
    }
  }
  SUBCASE("band contains the mean curve") {
    apex::Rng rng(9);
    std::vector<std::vector<apex::RocPoint>> curves;
    for (int c = 0; c < 5; ++c) {
      std::vector<double> scores;
      std::vector<int> labels;
      for (int i = 0; i < 20; ++i) {
        scores.push_back(rng.uniform());
        labels.push_back(i % 2);
      }
      curves.push_back(apex::roc_curve(scores, labels));
    }
    for (const auto& p : apex::average_roc_vertical(curves)) {
      CHECK(p.tpr_min <= p.tpr_mean);
      CHECK(p.tpr_mean <= p.tpr_max);
    }
  }
  SUBCASE("rejects an empty curve set") {
    CHECK_THROWS_AS(apex::average_roc_vertical({}), apex::InputError);
  }
}

TEST_CASE("leave-one-subject-out protocol") {
  SUBCASE("cohort of one is rejected") {
    const auto cohort = make_cohort({1}, 4, 2, 5);
    CHECK_THROWS_AS(
        apex::loso_evaluate(cohort, apex::Task::arousal, quick_params(1)),
        apex::ProtocolError);
  }
  SUBCASE("duplicate ids are rejected") {
    auto cohort = make_cohort({1, 2, 1}, 4, 2, 5);
    CHECK_THROWS_AS(
        apex::loso_evaluate(cohort, apex::Task::arousal, quick_params(1)),
        apex::InputError);
  }
  SUBCASE("two subjects leave single-member folds") {
    const auto cohort = make_cohort({1, 2}, 6, 2, 5);
    const auto report =
        apex::loso_evaluate(cohort, apex::Task::arousal, quick_params(1));
    REQUIRE(report.folds.size() == 2);
    CHECK(report.folds[0].test_subject_id == 1);
    CHECK(report.folds[0].member_subjects == std::vector<int>{2});
    CHECK(report.folds[0].weights.scores == std::vector<double>{1.0});
    CHECK(report.folds[1].member_subjects == std::vector<int>{1});
    CHECK(report.folds[1].weights.scores == std::vector<double>{1.0});
  }
  SUBCASE("no fold trains on its own test subject") {
    const auto cohort = make_cohort({5, 3, 1, 4, 2}, 5, 2, 17);
    const auto report =
        apex::loso_evaluate(cohort, apex::Task::valence, quick_params(2));
    REQUIRE(report.folds.size() == 5);
    for (std::size_t i = 0; i < report.folds.size(); ++i) {
      const auto& fold = report.folds[i];
      CHECK(fold.test_subject_id == static_cast<int>(i) + 1);
      CHECK(fold.member_subjects.size() == 4);
      CHECK(std::find(fold.member_subjects.begin(),
                      fold.member_subjects.end(),
                      fold.test_subject_id) == fold.member_subjects.end());
      CHECK(fold.mask.kept.size() == 4);
    }
    double window_sum = 0, trial_sum = 0;
    for (const auto& fold : report.folds) {
      window_sum += fold.window_accuracy;
      trial_sum += fold.trial_accuracy;
    }
    CHECK(report.mean_window_accuracy ==
          doctest::Approx(window_sum / 5).epsilon(1e-12));
    CHECK(report.mean_trial_accuracy ==
          doctest::Approx(trial_sum / 5).epsilon(1e-12));
  }
  SUBCASE("single-class test subjects are excluded from roc averaging") {
    auto cohort = make_cohort({1, 2, 3, 4}, 5, 2, 23);
    for (auto& row : cohort[2].rows.rows) {
      row.label_arousal = 1;
      row.label_valence = 1;
    }
    const auto report =
        apex::loso_evaluate(cohort, apex::Task::arousal, quick_params(3));
    CHECK(report.roc_excluded_subjects == std::vector<int>{3});
    const auto& fold = report.folds[2];
    CHECK(fold.test_subject_id == 3);
    CHECK_FALSE(fold.roc_valid);
    CHECK(fold.roc.empty());
    CHECK(std::isnan(fold.auc));
    // Accuracy is still defined for the excluded fold.
    CHECK(fold.window_accuracy >= 0.0);
    double auc_sum = 0;
    for (const auto& f : report.folds) {
      if (f.roc_valid) auc_sum += f.auc;
    }
    CHECK(report.mean_auc == doctest::Approx(auc_sum / 3).epsilon(1e-12));
  }
  SUBCASE("a video with mixed labels is rejected") {
    auto cohort = make_cohort({1, 2, 3}, 4, 2, 29);
    cohort[0].rows.rows[0].label_arousal = 1;  // video 0 is otherwise label 0
    CHECK_THROWS_AS(
        apex::loso_evaluate(cohort, apex::Task::arousal, quick_params(4)),
        apex::InputError);
  }
  SUBCASE("uniform mode reports uniform weights") {
    const auto cohort = make_cohort({1, 2, 3, 4}, 4, 2, 31);
    auto params = quick_params(5);
    params.mode = apex::WeightMode::uniform;
    const auto report =
        apex::loso_evaluate(cohort, apex::Task::arousal, params);
    for (const auto& fold : report.folds) {
      for (double s : fold.weights.scores) CHECK(s == 1.0 / 3.0);
    }
  }
}

TEST_CASE("loso determinism") {
  const auto cohort = make_cohort({1, 2, 3, 4, 5}, 5, 3, 77);
  auto params = quick_params(11);

  const auto a = apex::loso_evaluate(cohort, apex::Task::arousal, params);
  const auto b = apex::loso_evaluate(cohort, apex::Task::arousal, params);
  CHECK(apex::report_to_json(a) == apex::report_to_json(b));

  params.jobs = 3;
  const auto c = apex::loso_evaluate(cohort, apex::Task::arousal, params);
  CHECK(apex::report_to_json(a) == apex::report_to_json(c));

  params.jobs = 1;
  const auto d = apex::loso_evaluate(cohort, apex::Task::arousal, params);
  CHECK(apex::report_to_json(a) == apex::report_to_json(d));
}

TEST_CASE("report artifacts") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "apex_eval_test";
  fs::create_directories(dir);

  const auto cohort = make_cohort({1, 2, 3, 4}, 5, 2, 99);
  const auto report =
      apex::loso_evaluate(cohort, apex::Task::valence, quick_params(13));

  SUBCASE("report json parses and carries the fold structure") {
    apex::write_report_json(dir / "report.json", report);
    const auto doc = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(doc.at("task") == "valence");
    CHECK(doc.at("mode") == "attention");
    CHECK(doc.at("folds").size() == 4);
    CHECK(doc.at("mean_roc").size() == 101);
    const auto& fold = doc.at("folds")[0];
    CHECK(fold.at("test_subject_id") == 1);
    CHECK(fold.at("weights").size() == 3);
    CHECK(fold.at("mask").size() == 4);
    CHECK(fold.at("windows").size() == 10);

    apex::write_report_json(dir / "again.json", report);
    CHECK(slurp(dir / "report.json") == slurp(dir / "again.json"));
  }
  SUBCASE("roc csv covers the grid") {
    apex::write_roc_csv(dir / "roc.csv", report);
    std::ifstream in(dir / "roc.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "fpr,tpr_mean,tpr_min,tpr_max");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      if (!line.empty()) ++rows;
    }
    CHECK(rows == 101);
  }
  SUBCASE("svg plot renders the band and the mean curve") {
    apex::write_roc_svg(dir / "roc.svg", report);
    const auto svg = slurp(dir / "roc.svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("<polygon") != std::string::npos);
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
  }
  SUBCASE("weights table lists every fold-member pair") {
    apex::write_weights_table(dir / "weights.csv", report);
    std::ifstream in(dir / "weights.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "test_subject,member_subject,product,normalized,score");
    std::size_t rows = 0;
    std::set<std::string> test_ids;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ++rows;
      test_ids.insert(line.substr(0, line.find(',')));
    }
    CHECK(rows == 4 * 3);
    CHECK(test_ids == std::set<std::string>{"1", "2", "3", "4"});
  }
}
