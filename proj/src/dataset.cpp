#include "apex/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "apex/csv.hpp"
#include "apex/errors.hpp"
#include "apex/signal.hpp"

namespace apex {
namespace {

const char* kPersonalityHeader =
    "subject_id,extraversion,agreeableness,conscientiousness,"
    "emotional_stability,openness";
const char* kTrialsHeader = "subject_id,video_id,arousal,valence";

std::string row_ref(const std::filesystem::path& path, std::size_t row) {
  return path.string() + ":" + std::to_string(row);
}

// Re-type parse failures so everything raised while reading files is an
// IngestError carrying the file:row reference.
int field_int(std::string_view text, const std::string& where) {
  try {
    return static_cast<int>(parse_int(text, where));
  } catch (const Error& e) {
    throw IngestError(e.what());
  }
}

double field_double(std::string_view text, const std::string& where) {
  double v = 0.0;
  try {
    v = parse_double(text, where);
  } catch (const Error& e) {
    throw IngestError(e.what());
  }
  if (!std::isfinite(v)) {
    throw IngestError(where + ": non-finite value '" + std::string(text) +
                      "'");
  }
  return v;
}

std::filesystem::path signal_path(const std::filesystem::path& root,
                                  int subject_id, const char* channel,
                                  int video_id) {
  return root / ("subject_" + std::to_string(subject_id)) /
         (std::string(channel) + "_" + std::to_string(video_id) + ".csv");
}

struct TrialRow {
  int subject_id;
  int video_id;
  double arousal;
  double valence;
};

}  // namespace

double rating_median(const std::vector<double>& ratings) {
  if (ratings.empty()) throw InputError("rating_median: empty input");
  std::vector<double> sorted = ratings;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  if (n % 2 == 1) return sorted[n / 2];
  return (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
}

std::vector<int> binarize_ratings(const std::vector<double>& ratings,
                                  std::optional<double> threshold) {
  if (ratings.empty()) throw InputError("binarize_ratings: empty input");
  bool prebinary = true;
  for (double r : ratings) {
    if (!std::isfinite(r)) {
      throw InputError("binarize_ratings: non-finite rating");
    }
    if (r != 0.0 && r != 1.0) prebinary = false;
  }
  std::vector<int> labels;
  labels.reserve(ratings.size());
  if (prebinary && !threshold) {
    for (double r : ratings) labels.push_back(r == 1.0 ? 1 : 0);
    return labels;
  }
  const double cut = threshold ? *threshold : rating_median(ratings);
  for (double r : ratings) labels.push_back(r > cut ? 1 : 0);
  return labels;
}

void write_dataset(const std::filesystem::path& root,
                   const std::vector<RawSubject>& subjects) {
  if (subjects.empty()) throw InputError("write_dataset: no subjects");
  std::set<int> seen;
  for (const auto& subject : subjects) {
    if (!seen.insert(subject.subject_id).second) {
      throw InputError("write_dataset: duplicate subject id " +
                       std::to_string(subject.subject_id));
    }
    validate_traits(subject.traits);
  }

  std::filesystem::create_directories(root);
  std::ofstream personality(root / "personality.csv");
  if (!personality) {
    throw IngestError("cannot write " + (root / "personality.csv").string());
  }
  personality << kPersonalityHeader << "\n";
  for (const auto& subject : subjects) {
    const auto traits = subject.traits.as_array();
    personality << subject.subject_id;
    for (double t : traits) personality << "," << format_double(t);
    personality << "\n";
  }

  std::ofstream trials(root / "trials.csv");
  if (!trials) {
    throw IngestError("cannot write " + (root / "trials.csv").string());
  }
  trials << kTrialsHeader << "\n";
  for (const auto& subject : subjects) {
    std::filesystem::create_directories(
        root / ("subject_" + std::to_string(subject.subject_id)));
    for (const auto& trial : subject.trials) {
      if (trial.subject_id != subject.subject_id) {
        throw InputError("write_dataset: subject " +
                         std::to_string(subject.subject_id) +
                         " carries a trial for subject " +
                         std::to_string(trial.subject_id));
      }
      trials << trial.subject_id << "," << trial.video_id << ","
             << trial.label_arousal << "," << trial.label_valence << "\n";
      write_signal_csv(
          signal_path(root, trial.subject_id, "ecg", trial.video_id),
          trial.ecg);
      write_signal_csv(
          signal_path(root, trial.subject_id, "gsr", trial.video_id),
          trial.gsr);
    }
  }
}

std::vector<RawSubject> ingest_dataset(const std::filesystem::path& root,
                                       const BinarizeSpec& binarize) {
  // Personality table.
  const auto personality_path = root / "personality.csv";
  std::ifstream personality(personality_path);
  if (!personality) {
    throw IngestError("cannot open " + personality_path.string());
  }
  std::string line;
  if (!std::getline(personality, line) || trim(line) != kPersonalityHeader) {
    throw IngestError("bad header in " + personality_path.string());
  }
  std::map<int, PersonalityTraits> traits_by_id;
  std::size_t row_no = 1;
  while (std::getline(personality, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    const auto cols = split_csv_line(line);
    if (cols.size() != 6) {
      throw IngestError(row_ref(personality_path, row_no) +
                        ": expected 6 columns");
    }
    const std::string where = row_ref(personality_path, row_no);
    const int id = field_int(cols[0], where);
    PersonalityTraits traits;
    traits.extraversion = field_double(cols[1], where);
    traits.agreeableness = field_double(cols[2], where);
    traits.conscientiousness = field_double(cols[3], where);
    traits.emotional_stability = field_double(cols[4], where);
    traits.openness = field_double(cols[5], where);
    try {
      validate_traits(traits);
    } catch (const Error& e) {
      throw IngestError(where + ": " + e.what());
    }
    if (!traits_by_id.emplace(id, traits).second) {
      throw IngestError(where + ": duplicate subject id " +
                        std::to_string(id));
    }
  }
  if (traits_by_id.empty()) {
    throw IngestError(personality_path.string() + ": no subjects");
  }

  // Trial table.
  const auto trials_path = root / "trials.csv";
  std::ifstream trials_in(trials_path);
  if (!trials_in) throw IngestError("cannot open " + trials_path.string());
  if (!std::getline(trials_in, line) || trim(line) != kTrialsHeader) {
    throw IngestError("bad header in " + trials_path.string());
  }
  std::vector<TrialRow> rows;
  std::set<std::pair<int, int>> seen;
  row_no = 1;
  while (std::getline(trials_in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    const auto cols = split_csv_line(line);
    if (cols.size() != 4) {
      throw IngestError(row_ref(trials_path, row_no) + ": expected 4 columns");
    }
    const std::string where = row_ref(trials_path, row_no);
    TrialRow row;
    row.subject_id = field_int(cols[0], where);
    row.video_id = field_int(cols[1], where);
    row.arousal = field_double(cols[2], where);
    row.valence = field_double(cols[3], where);
    if (!traits_by_id.count(row.subject_id)) {
      throw IngestError(where + ": subject " + std::to_string(row.subject_id) +
                        " has no personality row");
    }
    if (!seen.emplace(row.subject_id, row.video_id).second) {
      throw IngestError(where + ": duplicate trial (subject " +
                        std::to_string(row.subject_id) + ", video " +
                        std::to_string(row.video_id) + ")");
    }
    rows.push_back(row);
  }
  if (rows.empty()) throw IngestError(trials_path.string() + ": no trials");

  // Labels: pass through {0,1} or split at the task medians.
  std::vector<double> arousal_ratings, valence_ratings;
  for (const auto& row : rows) {
    arousal_ratings.push_back(row.arousal);
    valence_ratings.push_back(row.valence);
  }
  const auto labels_a =
      binarize_ratings(arousal_ratings, binarize.arousal_threshold);
  const auto labels_v =
      binarize_ratings(valence_ratings, binarize.valence_threshold);

  // Assembly in (subject, video) order, reading both signal files per trial.
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rows[a].subject_id != rows[b].subject_id) {
      return rows[a].subject_id < rows[b].subject_id;
    }
    return rows[a].video_id < rows[b].video_id;
  });

  std::vector<RawSubject> subjects;
  for (std::size_t i : order) {
    const TrialRow& row = rows[i];
    if (subjects.empty() || subjects.back().subject_id != row.subject_id) {
      RawSubject subject;
      subject.subject_id = row.subject_id;
      subject.traits = traits_by_id.at(row.subject_id);
      subjects.push_back(std::move(subject));
    }
    Trial trial;
    trial.subject_id = row.subject_id;
    trial.video_id = row.video_id;
    trial.label_arousal = labels_a[i];
    trial.label_valence = labels_v[i];
    trial.ecg =
        read_signal_csv(signal_path(root, row.subject_id, "ecg", row.video_id));
    trial.gsr =
        read_signal_csv(signal_path(root, row.subject_id, "gsr", row.video_id));
    subjects.back().trials.push_back(std::move(trial));
  }
  return subjects;
}

std::vector<int> read_exclusion_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  std::vector<int> ids;
  std::string line;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    const auto text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    ids.push_back(field_int(text, row_ref(path, row_no)));
  }
  return ids;
}

}  // namespace apex
