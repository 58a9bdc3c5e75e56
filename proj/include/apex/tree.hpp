#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace apex {

struct TreeParams {
  int max_depth = 5;
  int min_samples_leaf = 5;
  double min_impurity_decrease = 0.0;
};

// CART binary classifier with probabilistic leaves. Splits minimize Gini
// impurity over midpoint thresholds; value <= threshold routes left; ties
// between candidate splits go to the lower feature index, then the lower
// threshold. With min_impurity_decrease = 0 an impure node takes the best
// structural candidate even at zero gain; with a positive setting every
// realized split must strictly exceed it.
class DecisionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double p = 0.0;      // leaf positive-class fraction
    std::int64_t n = 0;  // leaf support (weighted row count)
  };

  static DecisionTree fit(const std::vector<std::vector<double>>& X,
                          const std::vector<int>& y, const TreeParams& params,
                          std::uint64_t seed = 0);

  // Bootstrap-style variant: integer row multiplicities; rows with weight 0
  // are ignored entirely. min_samples_leaf counts weighted rows.
  static DecisionTree fit_weighted(const std::vector<std::vector<double>>& X,
                                   const std::vector<int>& y,
                                   const std::vector<std::int64_t>& weights,
                                   const TreeParams& params,
                                   std::uint64_t seed = 0);

  // Routing requires x to cover every feature index the tree consults.
  double predict_proba(const std::vector<double>& x) const;

  // Gini importance per feature: sum over splits of (node weight share) x
  // (impurity decrease). Available on freshly fitted trees only; not part
  // of the serialized form.
  const std::vector<double>& feature_importances() const;

  std::size_t required_features() const { return required_features_; }
  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  int depth() const;

  // Nested JSON: {"feature","threshold","left","right"} for internal nodes,
  // {"p","n"} for leaves. Round-trips exactly.
  std::string to_json() const;
  static DecisionTree from_json(const std::string& text);

 private:
  std::vector<Node> nodes_;  // nodes_[0] is the root
  std::size_t required_features_ = 0;
  std::vector<double> importances_;
  bool has_importances_ = false;
};

}  // namespace apex
