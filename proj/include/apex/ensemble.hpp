#pragma once

// Personality-attention ensemble: one decision tree per training subject,
// combined by a weighted vote whose weights come from big-five similarity.
//
// Weight pipeline for a test subject: raw trait inner products against every
// member (traits stay on their native [1,7] scale), min-max rescale to [0,1],
// then a plain softmax. An all-equal product vector rescales to zeros, so the
// softmax degenerates to exactly uniform weights and the ensemble reduces to
// plain average bagging.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "apex/features.hpp"
#include "apex/selection.hpp"
#include "apex/tree.hpp"

namespace apex {

enum class Task { arousal, valence };

std::string task_name(Task task);
Task task_from_name(const std::string& name);  // ConfigError on unknown names

// Label column of a feature row under the given task.
int label_of(const FeatureVector& row, Task task);

struct PersonalityTraits {
  double extraversion = 4;
  double agreeableness = 4;
  double conscientiousness = 4;
  double emotional_stability = 4;
  double openness = 4;

  std::array<double, 5> as_array() const;
};

// Trait column names in as_array order.
const std::array<std::string, 5>& trait_names();

// Every trait must sit in [1,7]; InputError names the offending trait.
void validate_traits(const PersonalityTraits& traits);

struct SubjectDataset {
  int subject_id = 0;
  PersonalityTraits traits;
  FeatureMatrix rows;  // only this subject's rows
};

struct AttentionWeights {
  std::vector<double> scores;  // aligned with member order
};

// Scores must be positive, at most 1, and sum to 1 within 1e-9. The upper
// bound is attained only by a single-member ensemble, where softmax yields
// exactly [1.0].
void validate_weights(const AttentionWeights& weights);

struct ApexMember {
  int subject_id = 0;
  PersonalityTraits traits;
  DecisionTree tree;
};

struct ApexModel {
  Task task = Task::arousal;
  FeatureMask mask;
  std::vector<ApexMember> members;  // subject ids unique, cohort order
};

// Five-term inner product of raw trait vectors. Range [5, 245].
double personality_product(const PersonalityTraits& a,
                           const PersonalityTraits& b);

// Min-max rescale to [0,1]; a constant vector maps to all zeros.
std::vector<double> normalize_products(const std::vector<double>& products);

// Plain softmax exp(x)/sum(exp); inputs must lie in [0,1].
AttentionWeights attention_scores(const std::vector<double>& normalized);

struct Prediction {
  double aggregate = 0;  // convex combination of member inferences
  int label = 0;         // 1 iff aggregate >= 0.5 (inclusive)
};

// Weighted vote over member inferences in [0,1], then the inclusive step.
Prediction ensemble_predict(const std::vector<double>& inferences,
                            const AttentionWeights& weights);

// One tree per subject, fit only on that subject's rows restricted to the
// mask's features (in mask order). Member order follows cohort order.
ApexModel fit_apex(const std::vector<SubjectDataset>& cohort,
                   const TreeParams& params, const FeatureMask& mask,
                   Task task, std::uint64_t seed);

// Baseline switch: `uniform` keeps the same members but forces every weight
// to 1/N, turning the ensemble into plain average bagging.
enum class WeightMode { attention, uniform };

std::string weight_mode_name(WeightMode mode);
WeightMode weight_mode_from_name(const std::string& name);

struct SubjectPrediction {
  std::vector<double> products;     // raw inner products, per member
  std::vector<double> normalized;   // min-max rescaled products
  AttentionWeights weights;         // constant across this subject's windows
  std::vector<Prediction> windows;  // aligned with test.rows
};

// ProtocolError if the test subject is one of the members.
SubjectPrediction predict_subject(const ApexModel& model,
                                  const SubjectDataset& test,
                                  WeightMode mode = WeightMode::attention);

// Bundle layout: <dir>/model.json plus trees/<subject_id>.json per member.
void save_model(const std::filesystem::path& dir, const ApexModel& model);
ApexModel load_model(const std::filesystem::path& dir);

// Per-member weight table for one test subject:
// test_subject,member_subject,product,normalized,score
void write_weights_csv(const std::filesystem::path& path, int test_subject,
                       const ApexModel& model, const SubjectPrediction& pred);

}  // namespace apex
