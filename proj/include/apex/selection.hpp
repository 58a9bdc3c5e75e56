#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "apex/features.hpp"
#include "apex/tree.hpp"

namespace apex {

struct MaskEntry {
  std::string stage;    // "variance" | "kbest" | "importance"
  std::size_t feature;  // registry index
  double score;         // variance, F statistic, or summed Gini importance
};

// Result of a selection stage or of the whole pipeline. `kept` holds
// registry indices in ranked order; `provenance` records every stage's
// surviving features with their scores.
struct FeatureMask {
  std::vector<std::size_t> kept;
  std::vector<MaskEntry> provenance;
};

struct SelectionParams {
  double variance_tau = 1e-4;
  std::size_t k = 10;  // final mask size
  int n_trees = 25;
  TreeParams tree_params;  // weak-learner defaults
  std::uint64_t seed = 0;
};

// Keeps features whose population variance over all rows exceeds tau.
// Throws SelectionError (with the full variance table in the message) when
// nothing survives.
FeatureMask variance_threshold(const FeatureMatrix& matrix, double tau = 1e-4);

// Ranks candidate features by the one-way ANOVA F statistic between the two
// label classes and keeps the top k. A feature with zero within-class
// variance and positive between-class separation scores +infinity; ties go
// to the lower registry index.
FeatureMask select_k_best(const FeatureMatrix& matrix,
                          const std::vector<int>& labels, std::size_t k,
                          const std::vector<std::size_t>& candidates);

// Ranks candidates by total Gini importance over a seeded bootstrap forest
// and keeps the top k. Rows are canonicalized by (subject, video, window)
// before drawing bootstraps, so the result is row-order invariant.
FeatureMask tree_importance_select(const FeatureMatrix& matrix,
                                   const std::vector<int>& labels,
                                   std::size_t k, std::uint64_t seed,
                                   const std::vector<std::size_t>& candidates,
                                   int n_trees = 25,
                                   const TreeParams& tree_params = {});

// Full three-stage pipeline: variance gate, then F-statistic top-2k, then
// forest-importance top-k. Provenance accumulates across stages.
FeatureMask select_features(const FeatureMatrix& matrix,
                            const std::vector<int>& labels,
                            const SelectionParams& params);

void write_mask_csv(const std::filesystem::path& path, const FeatureMask& mask);

}  // namespace apex
