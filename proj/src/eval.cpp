#include "apex/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "apex/csv.hpp"
#include "apex/errors.hpp"
#include "apex/parallel.hpp"
#include "apex/rng.hpp"
#include "json.hpp"

namespace apex {
namespace {

constexpr std::size_t kGridPoints = 101;  // fpr grid 0, 0.01, ..., 1

void check_curve(const std::vector<RocPoint>& roc, const char* op) {
  if (roc.size() < 2) {
    throw InputError(std::string(op) + ": curve needs at least 2 points");
  }
  if (roc.front().fpr != 0.0 || roc.front().tpr != 0.0 ||
      roc.back().fpr != 1.0 || roc.back().tpr != 1.0) {
    throw InputError(std::string(op) + ": curve must span (0,0) to (1,1)");
  }
  for (std::size_t i = 1; i < roc.size(); ++i) {
    if (roc[i].fpr < roc[i - 1].fpr || roc[i].tpr < roc[i - 1].tpr) {
      throw InputError(std::string(op) + ": curve is not monotone");
    }
  }
}

// tpr at the given fpr; exact hits take the topmost point of a vertical
// segment, otherwise the bracketing segment is interpolated linearly.
double roc_tpr_at(const std::vector<RocPoint>& roc, double x) {
  std::size_t j = 0;
  while (j < roc.size() && roc[j].fpr <= x) ++j;
  if (j == roc.size()) return roc.back().tpr;
  if (j == 0) return roc.front().tpr;  // unreachable for valid curves, x >= 0
  const RocPoint& a = roc[j - 1];
  const RocPoint& b = roc[j];
  if (a.fpr == x) return a.tpr;
  return a.tpr + (b.tpr - a.tpr) * (x - a.fpr) / (b.fpr - a.fpr);
}

struct TrialAgg {
  int video_id = 0;
  int truth = 0;
  int positives = 0;
  int total = 0;
};

double trial_majority_accuracy(const FoldResult& fold) {
  std::vector<TrialAgg> trials;
  for (const auto& w : fold.windows) {
    auto it = std::find_if(trials.begin(), trials.end(), [&](const TrialAgg& t) {
      return t.video_id == w.video_id;
    });
    if (it == trials.end()) {
      trials.push_back({w.video_id, w.truth, 0, 0});
      it = trials.end() - 1;
    } else if (it->truth != w.truth) {
      throw InputError("subject " + std::to_string(fold.test_subject_id) +
                       " video " + std::to_string(w.video_id) +
                       " carries mixed labels");
    }
    it->positives += w.predicted;
    it->total += 1;
  }
  int correct = 0;
  for (const auto& t : trials) {
    const int vote = 2 * t.positives >= t.total ? 1 : 0;  // tie goes positive
    correct += vote == t.truth;
  }
  return static_cast<double>(correct) / static_cast<double>(trials.size());
}

nlohmann::json roc_to_json(const std::vector<RocPoint>& roc) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : roc) {
    arr.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}});
  }
  return arr;
}

}  // namespace

double accuracy(const std::vector<int>& predicted,
                const std::vector<int>& truth) {
  if (predicted.empty() || predicted.size() != truth.size()) {
    throw InputError("accuracy: mismatched or empty label sequences");
  }
  std::size_t agree = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    agree += predicted[i] == truth[i];
  }
  return static_cast<double>(agree) / static_cast<double>(predicted.size());
}

std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                const std::vector<int>& labels) {
  if (scores.empty() || scores.size() != labels.size()) {
    throw InputError("roc_curve: mismatched or empty inputs");
  }
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw InputError("roc_curve: non-finite score");
    }
    if (labels[i] == 1) {
      ++n_pos;
    } else if (labels[i] == 0) {
      ++n_neg;
    } else {
      throw InputError("roc_curve: labels must be 0 or 1");
    }
  }
  if (n_pos == 0 || n_neg == 0) {
    throw InputError("roc_curve: labels are single-class");
  }

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  std::vector<RocPoint> roc = {{0.0, 0.0}};
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < idx.size()) {
    const double threshold = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == threshold) {
      if (labels[idx[i]] == 1) {
        ++tp;
      } else {
        ++fp;
      }
      ++i;
    }
    const RocPoint point = {static_cast<double>(fp) / n_neg,
                            static_cast<double>(tp) / n_pos};
    if (point.fpr != roc.back().fpr || point.tpr != roc.back().tpr) {
      roc.push_back(point);
    }
  }
  if (roc.back().fpr != 1.0 || roc.back().tpr != 1.0) {
    roc.push_back({1.0, 1.0});
  }
  return roc;
}

double auc_of(const std::vector<RocPoint>& roc) {
  check_curve(roc, "auc_of");
  double area = 0;
  for (std::size_t i = 1; i < roc.size(); ++i) {
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2;
  }
  return area;
}

std::vector<RocBandPoint> average_roc_vertical(
    const std::vector<std::vector<RocPoint>>& curves) {
  if (curves.empty()) throw InputError("average_roc_vertical: no curves");
  for (const auto& c : curves) check_curve(c, "average_roc_vertical");

  std::vector<RocBandPoint> band(kGridPoints);
  for (std::size_t g = 0; g < kGridPoints; ++g) {
    const double x = static_cast<double>(g) / (kGridPoints - 1);
    double sum = 0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& curve : curves) {
      const double t = roc_tpr_at(curve, x);
      sum += t;
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
    band[g] = {x, sum / static_cast<double>(curves.size()), lo, hi};
  }
  return band;
}

EvaluationReport loso_evaluate(const std::vector<SubjectDataset>& cohort,
                               Task task, const EvalParams& params) {
  if (cohort.size() < 2) {
    throw ProtocolError("leave-one-subject-out needs at least 2 subjects, got " +
                        std::to_string(cohort.size()));
  }
  std::set<int> ids;
  for (const auto& subject : cohort) {
    if (!ids.insert(subject.subject_id).second) {
      throw InputError("duplicate subject id " +
                       std::to_string(subject.subject_id) + " in cohort");
    }
  }

  // Folds in ascending test-subject order; training keeps cohort order.
  std::vector<std::size_t> order(cohort.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cohort[a].subject_id < cohort[b].subject_id;
  });

  EvaluationReport report;
  report.task = task;
  report.mode = params.mode;
  report.seed = params.seed;
  report.folds.resize(cohort.size());

  parallel_for(cohort.size(), params.jobs, [&](std::size_t fi) {
    const std::size_t ti = order[fi];
    const SubjectDataset& test = cohort[ti];
    const std::uint64_t fold_seed =
        derive_seed(params.seed, static_cast<std::uint64_t>(test.subject_id));

    std::vector<SubjectDataset> training;
    training.reserve(cohort.size() - 1);
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      if (i != ti) training.push_back(cohort[i]);
    }

    FeatureMatrix pool;
    std::vector<int> pool_labels;
    for (const auto& subject : training) {
      for (const auto& row : subject.rows.rows) {
        pool.rows.push_back(row);
        pool_labels.push_back(label_of(row, task));
      }
    }
    SelectionParams selection = params.selection;
    selection.seed = fold_seed;
    const FeatureMask mask = select_features(pool, pool_labels, selection);

    const ApexModel model =
        fit_apex(training, params.tree, mask, task, fold_seed);
    const SubjectPrediction pred = predict_subject(model, test, params.mode);

    FoldResult fold;
    fold.test_subject_id = test.subject_id;
    fold.mask = mask;
    fold.products = pred.products;
    fold.normalized = pred.normalized;
    fold.weights = pred.weights;
    for (const auto& member : model.members) {
      fold.member_subjects.push_back(member.subject_id);
    }

    std::vector<int> predicted, truths;
    std::vector<double> aggregates;
    for (std::size_t w = 0; w < test.rows.rows.size(); ++w) {
      const auto& row = test.rows.rows[w];
      const int truth = label_of(row, task);
      if (truth != 0 && truth != 1) {
        throw InputError("subject " + std::to_string(test.subject_id) +
                         " has non-binary label " + std::to_string(truth));
      }
      WindowOutcome outcome;
      outcome.video_id = row.video_id;
      outcome.window_index = row.window_index;
      outcome.aggregate = pred.windows[w].aggregate;
      outcome.predicted = pred.windows[w].label;
      outcome.truth = truth;
      fold.windows.push_back(outcome);
      predicted.push_back(outcome.predicted);
      truths.push_back(truth);
      aggregates.push_back(outcome.aggregate);
    }
    fold.window_accuracy = accuracy(predicted, truths);
    fold.trial_accuracy = trial_majority_accuracy(fold);

    const bool has_pos = std::find(truths.begin(), truths.end(), 1) != truths.end();
    const bool has_neg = std::find(truths.begin(), truths.end(), 0) != truths.end();
    if (has_pos && has_neg) {
      fold.roc = roc_curve(aggregates, truths);
      fold.auc = auc_of(fold.roc);
      fold.roc_valid = true;
    } else {
      fold.auc = std::numeric_limits<double>::quiet_NaN();
      fold.roc_valid = false;
    }
    report.folds[fi] = std::move(fold);
  });

  double window_sum = 0, trial_sum = 0;
  std::vector<std::vector<RocPoint>> curves;
  double auc_sum = 0;
  std::size_t auc_count = 0;
  for (const auto& fold : report.folds) {
    window_sum += fold.window_accuracy;
    trial_sum += fold.trial_accuracy;
    if (fold.roc_valid) {
      curves.push_back(fold.roc);
      auc_sum += fold.auc;
      ++auc_count;
      if (report.best_subject < 0 || fold.auc > report.best_auc) {
        report.best_auc = fold.auc;
        report.best_subject = fold.test_subject_id;
      }
      if (report.worst_subject < 0 || fold.auc < report.worst_auc) {
        report.worst_auc = fold.auc;
        report.worst_subject = fold.test_subject_id;
      }
    } else {
      report.roc_excluded_subjects.push_back(fold.test_subject_id);
    }
  }
  report.mean_window_accuracy = window_sum / static_cast<double>(report.folds.size());
  report.mean_trial_accuracy = trial_sum / static_cast<double>(report.folds.size());
  if (auc_count > 0) {
    report.mean_auc = auc_sum / static_cast<double>(auc_count);
    report.mean_roc = average_roc_vertical(curves);
  } else {
    report.mean_auc = std::numeric_limits<double>::quiet_NaN();
    report.best_auc = std::numeric_limits<double>::quiet_NaN();
    report.worst_auc = std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

std::string report_to_json(const EvaluationReport& report) {
  nlohmann::json doc;
  doc["task"] = task_name(report.task);
  doc["mode"] = weight_mode_name(report.mode);
  doc["seed"] = report.seed;
  doc["mean_window_accuracy"] = report.mean_window_accuracy;
  doc["mean_trial_accuracy"] = report.mean_trial_accuracy;
  doc["mean_auc"] = report.mean_auc;
  doc["best"] = {{"subject_id", report.best_subject}, {"auc", report.best_auc}};
  doc["worst"] = {{"subject_id", report.worst_subject},
                  {"auc", report.worst_auc}};
  doc["roc_excluded_subjects"] = report.roc_excluded_subjects;

  nlohmann::json grid = nlohmann::json::array();
  for (const auto& p : report.mean_roc) {
    grid.push_back({{"fpr", p.fpr},
                    {"tpr_mean", p.tpr_mean},
                    {"tpr_min", p.tpr_min},
                    {"tpr_max", p.tpr_max}});
  }
  doc["mean_roc"] = grid;

  nlohmann::json folds = nlohmann::json::array();
  for (const auto& fold : report.folds) {
    nlohmann::json f;
    f["test_subject_id"] = fold.test_subject_id;
    f["window_accuracy"] = fold.window_accuracy;
    f["trial_accuracy"] = fold.trial_accuracy;
    f["auc"] = fold.auc;
    f["roc"] = fold.roc_valid ? roc_to_json(fold.roc) : nlohmann::json::array();

    std::vector<std::string> columns;
    for (std::size_t idx : fold.mask.kept) {
      columns.push_back(feature_column(feature_registry()[idx]));
    }
    f["mask"] = columns;

    nlohmann::json weights = nlohmann::json::array();
    for (std::size_t i = 0; i < fold.member_subjects.size(); ++i) {
      weights.push_back({{"member_subject", fold.member_subjects[i]},
                         {"product", fold.products[i]},
                         {"normalized", fold.normalized[i]},
                         {"score", fold.weights.scores[i]}});
    }
    f["weights"] = weights;

    nlohmann::json windows = nlohmann::json::array();
    for (const auto& w : fold.windows) {
      windows.push_back({{"video_id", w.video_id},
                         {"window_index", w.window_index},
                         {"aggregate", w.aggregate},
                         {"predicted", w.predicted},
                         {"truth", w.truth}});
    }
    f["windows"] = windows;
    folds.push_back(f);
  }
  doc["folds"] = folds;
  return doc.dump(2) + "\n";
}

void write_report_json(const std::filesystem::path& path,
                       const EvaluationReport& report) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  out << report_to_json(report);
}

void write_roc_csv(const std::filesystem::path& path,
                   const EvaluationReport& report) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  out << "fpr,tpr_mean,tpr_min,tpr_max\n";
  for (const auto& p : report.mean_roc) {
    out << format_double(p.fpr) << "," << format_double(p.tpr_mean) << ","
        << format_double(p.tpr_min) << "," << format_double(p.tpr_max) << "\n";
  }
}

void write_roc_svg(const std::filesystem::path& path,
                   const EvaluationReport& report) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());

  const double size = 560, margin = 50, plot = size - 2 * margin;
  const auto px = [&](double fpr) { return margin + fpr * plot; };
  const auto py = [&](double tpr) { return size - margin - tpr * plot; };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"560\" "
         "height=\"560\" viewBox=\"0 0 560 560\">\n";
  out << "  <rect x=\"" << margin << "\" y=\"" << margin << "\" width=\""
      << plot << "\" height=\"" << plot
      << "\" fill=\"white\" stroke=\"black\"/>\n";
  out << "  <line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\""
      << px(1) << "\" y2=\"" << py(1)
      << "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";

  if (!report.mean_roc.empty()) {
    out << "  <polygon fill=\"#d0d0d0\" stroke=\"none\" points=\"";
    for (const auto& p : report.mean_roc) {
      out << format_double(px(p.fpr)) << "," << format_double(py(p.tpr_max))
          << " ";
    }
    for (auto it = report.mean_roc.rbegin(); it != report.mean_roc.rend();
         ++it) {
      out << format_double(px(it->fpr)) << "," << format_double(py(it->tpr_min))
          << " ";
    }
    out << "\"/>\n";
    out << "  <polyline fill=\"none\" stroke=\"#1050c0\" stroke-width=\"2\" "
           "points=\"";
    for (const auto& p : report.mean_roc) {
      out << format_double(px(p.fpr)) << "," << format_double(py(p.tpr_mean))
          << " ";
    }
    out << "\"/>\n";
  }

  for (double tick : {0.0, 0.5, 1.0}) {
    out << "  <text x=\"" << format_double(px(tick) - 8) << "\" y=\""
        << format_double(size - margin + 20)
        << "\" font-size=\"12\" font-family=\"sans-serif\">"
        << format_double(tick) << "</text>\n";
    out << "  <text x=\"" << format_double(margin - 30) << "\" y=\""
        << format_double(py(tick) + 4)
        << "\" font-size=\"12\" font-family=\"sans-serif\">"
        << format_double(tick) << "</text>\n";
  }
  out << "  <text x=\"" << size / 2 - 60 << "\" y=\"" << size - 10
      << "\" font-size=\"14\" font-family=\"sans-serif\">false positive "
         "rate</text>\n";
  out << "  <text x=\"15\" y=\"" << size / 2 + 50
      << "\" font-size=\"14\" font-family=\"sans-serif\" "
         "transform=\"rotate(-90 15 "
      << size / 2 + 50 << ")\">true positive rate</text>\n";
  out << "</svg>\n";
}

void write_weights_table(const std::filesystem::path& path,
                         const EvaluationReport& report) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  out << "test_subject,member_subject,product,normalized,score\n";
  for (const auto& fold : report.folds) {
    for (std::size_t i = 0; i < fold.member_subjects.size(); ++i) {
      out << fold.test_subject_id << "," << fold.member_subjects[i] << ","
          << format_double(fold.products[i]) << ","
          << format_double(fold.normalized[i]) << ","
          << format_double(fold.weights.scores[i]) << "\n";
    }
  }
}

}  // namespace apex
