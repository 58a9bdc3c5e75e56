#include "apex/selection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <tuple>

#include "apex/csv.hpp"
#include "apex/errors.hpp"
#include "apex/rng.hpp"

namespace apex {

namespace {

void validate_matrix(const FeatureMatrix& matrix, const char* op) {
  if (matrix.rows.empty()) {
    throw InputError(std::string(op) + ": empty feature matrix");
  }
  for (const auto& row : matrix.rows) {
    if (row.values.size() != registry_size()) {
      throw InputError(std::string(op) + ": row width mismatch");
    }
  }
}

void validate_labels(const FeatureMatrix& matrix, const std::vector<int>& labels,
                     const char* op) {
  if (labels.size() != matrix.rows.size()) {
    throw InputError(std::string(op) + ": labels/rows size mismatch");
  }
  bool has0 = false, has1 = false;
  for (int l : labels) {
    if (l == 0) {
      has0 = true;
    } else if (l == 1) {
      has1 = true;
    } else {
      throw InputError(std::string(op) + ": labels must be 0 or 1");
    }
  }
  if (!has0 || !has1) {
    throw SelectionError(std::string(op) +
                         ": both label classes must be present");
  }
}

void validate_candidates(const std::vector<std::size_t>& candidates,
                         const char* op) {
  if (candidates.empty()) {
    throw InputError(std::string(op) + ": empty candidate set");
  }
  for (std::size_t c : candidates) {
    if (c >= registry_size()) {
      throw InputError(std::string(op) + ": candidate index out of range");
    }
  }
}

// Sorts (score, feature) pairs by descending score, ties toward the lower
// registry index.
void rank_descending(std::vector<std::pair<double, std::size_t>>& scored) {
  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
}

}  // namespace

FeatureMask variance_threshold(const FeatureMatrix& matrix, double tau) {
  validate_matrix(matrix, "variance_threshold");
  if (tau < 0.0) throw ConfigError("variance_threshold: tau must be >= 0");

  const double n = static_cast<double>(matrix.rows.size());
  FeatureMask mask;
  std::string table;
  for (std::size_t f = 0; f < registry_size(); ++f) {
    double mean = 0.0;
    for (const auto& row : matrix.rows) mean += row.values[f];
    mean /= n;
    double ss = 0.0;
    for (const auto& row : matrix.rows) {
      const double d = row.values[f] - mean;
      ss += d * d;
    }
    const double variance = ss / n;
    table += "  " + feature_column(feature_registry()[f]) + " = " +
             format_double(variance) + "\n";
    if (variance > tau) {
      mask.kept.push_back(f);
      mask.provenance.push_back({"variance", f, variance});
    }
  }
  if (mask.kept.empty()) {
    throw SelectionError(
        "variance_threshold: no feature exceeds tau = " + format_double(tau) +
        "; variance table:\n" + table);
  }
  return mask;
}

FeatureMask select_k_best(const FeatureMatrix& matrix,
                          const std::vector<int>& labels, std::size_t k,
                          const std::vector<std::size_t>& candidates) {
  validate_matrix(matrix, "select_k_best");
  validate_labels(matrix, labels, "select_k_best");
  validate_candidates(candidates, "select_k_best");
  if (k < 1 || k > candidates.size()) {
    throw ConfigError("select_k_best: k must be in [1, candidate count]");
  }

  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t f : candidates) {
    double sum[2] = {0.0, 0.0};
    double count[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < matrix.rows.size(); ++i) {
      sum[labels[i]] += matrix.rows[i].values[f];
      count[labels[i]] += 1.0;
    }
    const double mean0 = sum[0] / count[0];
    const double mean1 = sum[1] / count[1];
    const double grand = (sum[0] + sum[1]) / (count[0] + count[1]);
    double ssw = 0.0;
    for (std::size_t i = 0; i < matrix.rows.size(); ++i) {
      const double d =
          matrix.rows[i].values[f] - (labels[i] == 0 ? mean0 : mean1);
      ssw += d * d;
    }
    const double ssb = count[0] * (mean0 - grand) * (mean0 - grand) +
                       count[1] * (mean1 - grand) * (mean1 - grand);
    const double dof_w = count[0] + count[1] - 2.0;

    double f_stat;
    if (ssw > 0.0 && dof_w > 0.0) {
      f_stat = ssb / (ssw / dof_w);
    } else if (ssb > 0.0) {
      f_stat = std::numeric_limits<double>::infinity();
    } else {
      f_stat = 0.0;  // constant within and between: uninformative
    }
    scored.push_back({f_stat, f});
  }
  rank_descending(scored);

  FeatureMask mask;
  for (std::size_t i = 0; i < k; ++i) {
    mask.kept.push_back(scored[i].second);
    mask.provenance.push_back({"kbest", scored[i].second, scored[i].first});
  }
  return mask;
}

FeatureMask tree_importance_select(const FeatureMatrix& matrix,
                                   const std::vector<int>& labels,
                                   std::size_t k, std::uint64_t seed,
                                   const std::vector<std::size_t>& candidates,
                                   int n_trees,
                                   const TreeParams& tree_params) {
  validate_matrix(matrix, "tree_importance_select");
  validate_labels(matrix, labels, "tree_importance_select");
  validate_candidates(candidates, "tree_importance_select");
  if (k < 1 || k > candidates.size()) {
    throw ConfigError(
        "tree_importance_select: k must be in [1, candidate count]");
  }
  if (n_trees < 1) {
    throw ConfigError("tree_importance_select: n_trees must be >= 1");
  }

  // Canonical row order makes bootstrap draws independent of input order.
  const std::size_t n = matrix.rows.size();
  std::vector<std::size_t> canon(n);
  for (std::size_t i = 0; i < n; ++i) canon[i] = i;
  std::stable_sort(canon.begin(), canon.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = matrix.rows[a];
    const auto& rb = matrix.rows[b];
    return std::tuple(ra.subject_id, ra.video_id, ra.window_index) <
           std::tuple(rb.subject_id, rb.video_id, rb.window_index);
  });

  std::vector<std::vector<double>> X(n, std::vector<double>(candidates.size()));
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = matrix.rows[canon[i]];
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      X[i][c] = row.values[candidates[c]];
    }
    y[i] = labels[canon[i]];
  }

  std::vector<double> total(candidates.size(), 0.0);
  for (int t = 0; t < n_trees; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    std::vector<std::int64_t> weights(n, 0);
    for (std::size_t draw = 0; draw < n; ++draw) {
      weights[rng.below(n)] += 1;
    }
    bool has0 = false, has1 = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (weights[i] > 0) (y[i] == 0 ? has0 : has1) = true;
    }
    if (!has0 || !has1) continue;  // degenerate bootstrap carries no signal
    const DecisionTree tree = DecisionTree::fit_weighted(X, y, weights,
                                                         tree_params);
    const auto& imp = tree.feature_importances();
    for (std::size_t c = 0; c < candidates.size(); ++c) total[c] += imp[c];
  }

  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    scored.push_back({total[c], candidates[c]});
  }
  rank_descending(scored);

  FeatureMask mask;
  for (std::size_t i = 0; i < k; ++i) {
    mask.kept.push_back(scored[i].second);
    mask.provenance.push_back({"importance", scored[i].second, scored[i].first});
  }
  return mask;
}

FeatureMask select_features(const FeatureMatrix& matrix,
                            const std::vector<int>& labels,
                            const SelectionParams& params) {
  if (params.k < 1) throw ConfigError("select_features: k must be >= 1");

  const FeatureMask var_mask = variance_threshold(matrix, params.variance_tau);

  const std::size_t k_mid = std::min(2 * params.k, var_mask.kept.size());
  const FeatureMask kbest_mask =
      select_k_best(matrix, labels, k_mid, var_mask.kept);

  const std::size_t k_final = std::min(params.k, kbest_mask.kept.size());
  FeatureMask final_mask = tree_importance_select(
      matrix, labels, k_final, params.seed, kbest_mask.kept, params.n_trees,
      params.tree_params);

  FeatureMask out;
  out.kept = final_mask.kept;
  out.provenance = var_mask.provenance;
  out.provenance.insert(out.provenance.end(), kbest_mask.provenance.begin(),
                        kbest_mask.provenance.end());
  out.provenance.insert(out.provenance.end(), final_mask.provenance.begin(),
                        final_mask.provenance.end());
  return out;
}

void write_mask_csv(const std::filesystem::path& path, const FeatureMask& mask) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write mask file " + path.string());
  out << "rank,modality,feature,score,stage\n";
  std::string stage;
  int rank = 0;
  for (const auto& entry : mask.provenance) {
    if (entry.stage != stage) {
      stage = entry.stage;
      rank = 0;
    }
    ++rank;
    const auto& def = feature_registry()[entry.feature];
    out << rank << ',' << (def.modality == Modality::hrv ? "hrv" : "gsr") << ','
        << def.name << ',' << format_double(entry.score) << ',' << entry.stage
        << '\n';
  }
}

}  // namespace apex
