#include "apex/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "apex/csv.hpp"
#include "apex/errors.hpp"
#include "apex/rng.hpp"
#include "json.hpp"

namespace apex {
namespace {

void check_member_rows(const SubjectDataset& subject, const char* op) {
  const std::string who =
      std::string(op) + ": subject " + std::to_string(subject.subject_id);
  if (subject.rows.rows.empty()) {
    throw InputError(who + " has no feature rows");
  }
  for (const auto& row : subject.rows.rows) {
    if (row.subject_id != subject.subject_id) {
      throw InputError(who + " carries a row for subject " +
                       std::to_string(row.subject_id));
    }
    if (row.values.size() != registry_size()) {
      throw InputError(who + " has a row with " +
                       std::to_string(row.values.size()) + " features");
    }
  }
}

void check_mask(const FeatureMask& mask, const char* op) {
  if (mask.kept.empty()) {
    throw ConfigError(std::string(op) + ": empty feature mask");
  }
  for (std::size_t f : mask.kept) {
    if (f >= registry_size()) {
      throw InputError(std::string(op) + ": mask feature " +
                       std::to_string(f) + " out of registry range");
    }
  }
}

std::vector<double> masked_values(const FeatureVector& row,
                                  const FeatureMask& mask) {
  std::vector<double> x(mask.kept.size());
  for (std::size_t j = 0; j < mask.kept.size(); ++j) {
    x[j] = row.values[mask.kept[j]];
  }
  return x;
}

}  // namespace

std::string task_name(Task task) {
  return task == Task::arousal ? "arousal" : "valence";
}

Task task_from_name(const std::string& name) {
  if (name == "arousal") return Task::arousal;
  if (name == "valence") return Task::valence;
  throw ConfigError("unknown task '" + name + "' (expected arousal|valence)");
}

int label_of(const FeatureVector& row, Task task) {
  return task == Task::arousal ? row.label_arousal : row.label_valence;
}

std::string weight_mode_name(WeightMode mode) {
  return mode == WeightMode::attention ? "attention" : "uniform";
}

WeightMode weight_mode_from_name(const std::string& name) {
  if (name == "attention") return WeightMode::attention;
  if (name == "uniform") return WeightMode::uniform;
  throw ConfigError("unknown weight mode '" + name +
                    "' (expected attention|uniform)");
}

std::array<double, 5> PersonalityTraits::as_array() const {
  return {extraversion, agreeableness, conscientiousness, emotional_stability,
          openness};
}

const std::array<std::string, 5>& trait_names() {
  static const std::array<std::string, 5> names = {
      "extraversion", "agreeableness", "conscientiousness",
      "emotional_stability", "openness"};
  return names;
}

void validate_traits(const PersonalityTraits& traits) {
  const auto values = traits.as_array();
  for (std::size_t d = 0; d < values.size(); ++d) {
    if (!(values[d] >= 1.0 && values[d] <= 7.0)) {
      throw InputError("trait " + trait_names()[d] + " = " +
                       format_double(values[d]) + " outside [1,7]");
    }
  }
}

void validate_weights(const AttentionWeights& weights) {
  if (weights.scores.empty()) throw InputError("empty attention weights");
  double sum = 0;
  for (double s : weights.scores) {
    if (!(s > 0.0 && s <= 1.0)) {
      throw InputError("attention score " + format_double(s) +
                       " outside (0,1]");
    }
    sum += s;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw InputError("attention scores sum to " + format_double(sum));
  }
}

double personality_product(const PersonalityTraits& a,
                           const PersonalityTraits& b) {
  validate_traits(a);
  validate_traits(b);
  const auto va = a.as_array();
  const auto vb = b.as_array();
  double sum = 0;
  for (std::size_t d = 0; d < va.size(); ++d) sum += va[d] * vb[d];
  return sum;
}

std::vector<double> normalize_products(const std::vector<double>& products) {
  if (products.empty()) throw InputError("normalize_products: empty input");
  for (double p : products) {
    if (!std::isfinite(p)) {
      throw InputError("normalize_products: non-finite input");
    }
  }
  const auto [lo_it, hi_it] =
      std::minmax_element(products.begin(), products.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  std::vector<double> out(products.size(), 0.0);
  if (span > 0) {
    for (std::size_t i = 0; i < products.size(); ++i) {
      out[i] = (products[i] - lo) / span;
    }
  }
  return out;
}

AttentionWeights attention_scores(const std::vector<double>& normalized) {
  if (normalized.empty()) throw InputError("attention_scores: empty input");
  double denom = 0;
  std::vector<double> expd(normalized.size());
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    if (!(normalized[i] >= 0.0 && normalized[i] <= 1.0)) {
      throw InputError("attention_scores: input " +
                       format_double(normalized[i]) + " outside [0,1]");
    }
    expd[i] = std::exp(normalized[i]);
    denom += expd[i];
  }
  AttentionWeights weights;
  weights.scores.resize(expd.size());
  for (std::size_t i = 0; i < expd.size(); ++i) {
    weights.scores[i] = expd[i] / denom;
  }
  return weights;
}

Prediction ensemble_predict(const std::vector<double>& inferences,
                            const AttentionWeights& weights) {
  validate_weights(weights);
  if (inferences.size() != weights.scores.size()) {
    throw InputError("ensemble_predict: " + std::to_string(inferences.size()) +
                     " inferences vs " + std::to_string(weights.scores.size()) +
                     " weights");
  }
  double aggregate = 0;
  for (std::size_t i = 0; i < inferences.size(); ++i) {
    if (!(inferences[i] >= 0.0 && inferences[i] <= 1.0)) {
      throw InputError("ensemble_predict: inference " +
                       format_double(inferences[i]) + " outside [0,1]");
    }
    aggregate += weights.scores[i] * inferences[i];
  }
  Prediction pred;
  pred.aggregate = aggregate;
  pred.label = aggregate >= 0.5 ? 1 : 0;
  return pred;
}

ApexModel fit_apex(const std::vector<SubjectDataset>& cohort,
                   const TreeParams& params, const FeatureMask& mask,
                   Task task, std::uint64_t seed) {
  if (cohort.empty()) throw FitError("fit_apex: empty cohort");
  check_mask(mask, "fit_apex");

  ApexModel model;
  model.task = task;
  model.mask = mask;
  std::set<int> seen;
  for (const auto& subject : cohort) {
    if (!seen.insert(subject.subject_id).second) {
      throw InputError("fit_apex: duplicate subject id " +
                       std::to_string(subject.subject_id));
    }
    validate_traits(subject.traits);
    check_member_rows(subject, "fit_apex");

    std::vector<std::vector<double>> X;
    std::vector<int> y;
    X.reserve(subject.rows.rows.size());
    y.reserve(subject.rows.rows.size());
    for (const auto& row : subject.rows.rows) {
      const int label = label_of(row, task);
      if (label != 0 && label != 1) {
        throw InputError("fit_apex: subject " +
                         std::to_string(subject.subject_id) +
                         " has non-binary label " + std::to_string(label));
      }
      X.push_back(masked_values(row, mask));
      y.push_back(label);
    }

    ApexMember member;
    member.subject_id = subject.subject_id;
    member.traits = subject.traits;
    member.tree = DecisionTree::fit(
        X, y, params,
        derive_seed(seed, static_cast<std::uint64_t>(subject.subject_id)));
    model.members.push_back(std::move(member));
  }
  return model;
}

SubjectPrediction predict_subject(const ApexModel& model,
                                  const SubjectDataset& test,
                                  WeightMode mode) {
  if (model.members.empty()) {
    throw InputError("predict_subject: model has no members");
  }
  check_mask(model.mask, "predict_subject");
  for (const auto& member : model.members) {
    if (member.subject_id == test.subject_id) {
      throw ProtocolError("test subject " + std::to_string(test.subject_id) +
                          " is a member of the model");
    }
  }
  validate_traits(test.traits);
  check_member_rows(test, "predict_subject");

  SubjectPrediction pred;
  pred.products.reserve(model.members.size());
  for (const auto& member : model.members) {
    pred.products.push_back(personality_product(member.traits, test.traits));
  }
  pred.normalized = normalize_products(pred.products);
  if (mode == WeightMode::attention) {
    pred.weights = attention_scores(pred.normalized);
  } else {
    pred.weights.scores.assign(
        model.members.size(),
        1.0 / static_cast<double>(model.members.size()));
  }

  pred.windows.reserve(test.rows.rows.size());
  std::vector<double> inferences(model.members.size());
  for (const auto& row : test.rows.rows) {
    const auto x = masked_values(row, model.mask);
    for (std::size_t i = 0; i < model.members.size(); ++i) {
      inferences[i] = model.members[i].tree.predict_proba(x);
    }
    pred.windows.push_back(ensemble_predict(inferences, pred.weights));
  }
  return pred;
}

void save_model(const std::filesystem::path& dir, const ApexModel& model) {
  if (model.members.empty()) throw InputError("save_model: no members");
  check_mask(model.mask, "save_model");

  std::filesystem::create_directories(dir / "trees");
  nlohmann::json doc;
  doc["task"] = task_name(model.task);
  auto& mask = doc["mask"];
  mask["kept"] = model.mask.kept;
  std::vector<std::string> columns;
  for (std::size_t f : model.mask.kept) columns.push_back(feature_column(feature_registry()[f]));
  mask["columns"] = columns;
  auto& members = doc["members"];
  members = nlohmann::json::array();
  for (const auto& member : model.members) {
    nlohmann::json entry;
    entry["subject_id"] = member.subject_id;
    const auto values = member.traits.as_array();
    for (std::size_t d = 0; d < values.size(); ++d) {
      entry["traits"][trait_names()[d]] = values[d];
    }
    members.push_back(entry);

    std::ofstream tree_out(dir / "trees" /
                           (std::to_string(member.subject_id) + ".json"));
    if (!tree_out) {
      throw IngestError("cannot write tree file for subject " +
                        std::to_string(member.subject_id) + " under " +
                        dir.string());
    }
    tree_out << member.tree.to_json() << "\n";
  }

  std::ofstream out(dir / "model.json");
  if (!out) throw IngestError("cannot write " + (dir / "model.json").string());
  out << doc.dump(2) << "\n";
}

ApexModel load_model(const std::filesystem::path& dir) {
  const auto model_path = dir / "model.json";
  std::ifstream in(model_path);
  if (!in) throw IngestError("cannot open " + model_path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(model_path.string() + ": " + e.what());
  }

  ApexModel model;
  try {
    model.task = task_from_name(doc.at("task").get<std::string>());
    const auto& mask = doc.at("mask");
    model.mask.kept = mask.at("kept").get<std::vector<std::size_t>>();
    check_mask(model.mask, "load_model");
    const auto columns = mask.at("columns").get<std::vector<std::string>>();
    if (columns.size() != model.mask.kept.size()) {
      throw IngestError("mask column list length mismatch");
    }
    for (std::size_t j = 0; j < columns.size(); ++j) {
      if (columns[j] != feature_column(feature_registry()[model.mask.kept[j]])) {
        throw IngestError("mask column '" + columns[j] +
                          "' does not name feature " +
                          std::to_string(model.mask.kept[j]));
      }
    }

    std::set<int> seen;
    for (const auto& entry : doc.at("members")) {
      ApexMember member;
      member.subject_id = entry.at("subject_id").get<int>();
      if (!seen.insert(member.subject_id).second) {
        throw IngestError("duplicate subject id " +
                          std::to_string(member.subject_id));
      }
      const auto& traits = entry.at("traits");
      member.traits.extraversion = traits.at("extraversion").get<double>();
      member.traits.agreeableness = traits.at("agreeableness").get<double>();
      member.traits.conscientiousness =
          traits.at("conscientiousness").get<double>();
      member.traits.emotional_stability =
          traits.at("emotional_stability").get<double>();
      member.traits.openness = traits.at("openness").get<double>();
      validate_traits(member.traits);

      const auto tree_path =
          dir / "trees" / (std::to_string(member.subject_id) + ".json");
      std::ifstream tree_in(tree_path);
      if (!tree_in) throw IngestError("cannot open " + tree_path.string());
      std::stringstream buffer;
      buffer << tree_in.rdbuf();
      member.tree = DecisionTree::from_json(buffer.str());
      if (member.tree.required_features() > model.mask.kept.size()) {
        throw IngestError(tree_path.string() + ": tree consults " +
                          std::to_string(member.tree.required_features()) +
                          " features but the mask keeps " +
                          std::to_string(model.mask.kept.size()));
      }
      model.members.push_back(std::move(member));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(model_path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw IngestError(model_path.string() + ": " + e.what());
  }
  if (model.members.empty()) {
    throw IngestError(model_path.string() + ": no members");
  }
  return model;
}

void write_weights_csv(const std::filesystem::path& path, int test_subject,
                       const ApexModel& model, const SubjectPrediction& pred) {
  if (pred.products.size() != model.members.size() ||
      pred.normalized.size() != model.members.size() ||
      pred.weights.scores.size() != model.members.size()) {
    throw InputError("write_weights_csv: prediction does not match model");
  }
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  out << "test_subject,member_subject,product,normalized,score\n";
  for (std::size_t i = 0; i < model.members.size(); ++i) {
    out << test_subject << "," << model.members[i].subject_id << ","
        << format_double(pred.products[i]) << ","
        << format_double(pred.normalized[i]) << ","
        << format_double(pred.weights.scores[i]) << "\n";
  }
}

}  // namespace apex
