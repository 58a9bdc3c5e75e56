#include "apex/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

#include "apex/errors.hpp"

namespace apex {

namespace {

double gini(std::int64_t pos, std::int64_t total) {
  const double p = static_cast<double>(pos) / static_cast<double>(total);
  const double q = 1.0 - p;
  return 1.0 - p * p - q * q;
}

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = -1.0;
  std::int64_t left_weight = 0;
};

}  // namespace

DecisionTree DecisionTree::fit(const std::vector<std::vector<double>>& X,
                               const std::vector<int>& y,
                               const TreeParams& params, std::uint64_t seed) {
  return fit_weighted(X, y, std::vector<std::int64_t>(X.size(), 1), params,
                      seed);
}

DecisionTree DecisionTree::fit_weighted(
    const std::vector<std::vector<double>>& X, const std::vector<int>& y,
    const std::vector<std::int64_t>& weights, const TreeParams& params,
    std::uint64_t /*seed*/) {
  if (params.max_depth < 1 || params.min_samples_leaf < 1 ||
      params.min_impurity_decrease < 0.0) {
    throw ConfigError("DecisionTree: invalid TreeParams");
  }
  if (X.empty()) throw FitError("DecisionTree: empty training data");
  if (y.size() != X.size() || weights.size() != X.size()) {
    throw InputError("DecisionTree: X/y/weights size mismatch");
  }
  const std::size_t n_features = X[0].size();
  if (n_features == 0) throw FitError("DecisionTree: rows have no features");
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (X[i].size() != n_features) {
      throw InputError("DecisionTree: ragged feature rows");
    }
    if (y[i] != 0 && y[i] != 1) {
      throw InputError("DecisionTree: labels must be 0 or 1");
    }
    if (weights[i] < 0) {
      throw InputError("DecisionTree: negative row weight");
    }
    for (double v : X[i]) {
      if (!std::isfinite(v)) {
        throw InputError("DecisionTree: non-finite feature value");
      }
    }
  }

  std::vector<int> active;
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (weights[i] > 0) active.push_back(static_cast<int>(i));
  }
  if (active.empty()) {
    throw FitError("DecisionTree: all row weights are zero");
  }
  const std::size_t n = active.size();

  // One index array per feature, each sorted by that feature's value (row
  // index breaks value ties so the order never depends on input order).
  std::vector<std::vector<int>> order(n_features, active);
  for (std::size_t f = 0; f < n_features; ++f) {
    std::sort(order[f].begin(), order[f].end(), [&](int a, int b) {
      const double va = X[static_cast<std::size_t>(a)][f];
      const double vb = X[static_cast<std::size_t>(b)][f];
      if (va != vb) return va < vb;
      return a < b;
    });
  }

  DecisionTree tree;
  tree.required_features_ = n_features;
  tree.importances_.assign(n_features, 0.0);
  tree.has_importances_ = true;

  const auto min_leaf = static_cast<std::int64_t>(params.min_samples_leaf);
  std::int64_t root_weight = 0;
  for (int i : active) root_weight += weights[static_cast<std::size_t>(i)];

  std::vector<int> scratch(n);

  // Builds the subtree over rows order[*][lo, hi) and returns its node id.
  const auto build = [&](auto&& self, std::size_t lo, std::size_t hi,
                         int depth) -> int {
    std::int64_t w_total = 0, w_pos = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto row = static_cast<std::size_t>(order[0][i]);
      w_total += weights[row];
      if (y[row] == 1) w_pos += weights[row];
    }

    const auto make_leaf = [&]() {
      Node leaf;
      leaf.p = static_cast<double>(w_pos) / static_cast<double>(w_total);
      leaf.n = w_total;
      tree.nodes_.push_back(leaf);
      return static_cast<int>(tree.nodes_.size() - 1);
    };

    if (w_pos == 0 || w_pos == w_total || depth >= params.max_depth ||
        w_total < 2 * min_leaf) {
      return make_leaf();
    }

    const double parent_gini = gini(w_pos, w_total);
    SplitChoice best;
    for (std::size_t f = 0; f < n_features; ++f) {
      std::int64_t wl = 0, wl_pos = 0;
      for (std::size_t i = lo; i + 1 < hi; ++i) {
        const auto row = static_cast<std::size_t>(order[f][i]);
        wl += weights[row];
        if (y[row] == 1) wl_pos += weights[row];
        const double v = X[row][f];
        const double vn = X[static_cast<std::size_t>(order[f][i + 1])][f];
        if (!(vn > v)) continue;
        if (wl < min_leaf || w_total - wl < min_leaf) continue;

        const double gain = parent_gini -
                            (static_cast<double>(wl) / static_cast<double>(w_total)) *
                                gini(wl_pos, wl) -
                            (static_cast<double>(w_total - wl) /
                             static_cast<double>(w_total)) *
                                gini(w_pos - wl_pos, w_total - wl);
        double thr = 0.5 * (v + vn);
        if (!(thr > v && thr < vn)) thr = v;  // midpoint collapsed in fp

        const bool better =
            !best.found || gain > best.gain ||
            (gain == best.gain &&
             (static_cast<int>(f) < best.feature ||
              (static_cast<int>(f) == best.feature && thr < best.threshold)));
        if (better) {
          best.found = true;
          best.feature = static_cast<int>(f);
          best.threshold = thr;
          best.gain = gain;
          best.left_weight = wl;
        }
      }
    }

    const bool admissible =
        best.found && (params.min_impurity_decrease > 0.0
                           ? best.gain > params.min_impurity_decrease
                           : best.gain >= 0.0);
    if (!admissible) return make_leaf();

    tree.importances_[static_cast<std::size_t>(best.feature)] +=
        (static_cast<double>(w_total) / static_cast<double>(root_weight)) *
        best.gain;

    // Stable partition of every feature's index range by the chosen split,
    // preserving each array's sort order.
    std::size_t n_left = 0;
    for (std::size_t f = 0; f < n_features; ++f) {
      std::size_t l = 0, r = 0;
      for (std::size_t i = lo; i < hi; ++i) {
        const int row = order[f][i];
        if (X[static_cast<std::size_t>(row)][static_cast<std::size_t>(
                best.feature)] <= best.threshold) {
          order[f][lo + l] = row;
          ++l;
        } else {
          scratch[r] = row;
          ++r;
        }
      }
      for (std::size_t i = 0; i < r; ++i) order[f][lo + l + i] = scratch[i];
      n_left = l;
    }

    Node node;
    node.feature = best.feature;
    node.threshold = best.threshold;
    tree.nodes_.push_back(node);
    const auto id = static_cast<int>(tree.nodes_.size() - 1);
    const int left = self(self, lo, lo + n_left, depth + 1);
    const int right = self(self, lo + n_left, hi, depth + 1);
    tree.nodes_[static_cast<std::size_t>(id)].left = left;
    tree.nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
  };

  // The root's node is pushed before any recursion, so it is nodes_[0].
  build(build, 0, n, 0);
  return tree;
}

double DecisionTree::predict_proba(const std::vector<double>& x) const {
  if (nodes_.empty()) throw InputError("DecisionTree: empty tree");
  if (x.size() < required_features_) {
    throw InputError("DecisionTree: input has " + std::to_string(x.size()) +
                     " features, tree needs " +
                     std::to_string(required_features_));
  }
  for (double v : x) {
    if (!std::isfinite(v)) {
      throw InputError("DecisionTree: non-finite input value");
    }
  }
  int id = 0;
  while (nodes_[static_cast<std::size_t>(id)].feature >= 0) {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    id = x[static_cast<std::size_t>(node.feature)] <= node.threshold
             ? node.left
             : node.right;
  }
  return nodes_[static_cast<std::size_t>(id)].p;
}

const std::vector<double>& DecisionTree::feature_importances() const {
  if (!has_importances_) {
    throw InputError(
        "DecisionTree: importances are only available on freshly fitted "
        "trees");
  }
  return importances_;
}

int DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  // Iterative depth over the explicit node vector.
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int deepest = 0;
  while (!stack.empty()) {
    const auto [id, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.feature >= 0) {
      stack.push_back({node.left, d + 1});
      stack.push_back({node.right, d + 1});
    }
  }
  return deepest;
}

namespace {

nlohmann::json node_to_json(const std::vector<DecisionTree::Node>& nodes,
                            int id) {
  const auto& node = nodes[static_cast<std::size_t>(id)];
  nlohmann::json j;
  if (node.feature < 0) {
    j["p"] = node.p;
    j["n"] = node.n;
  } else {
    j["feature"] = node.feature;
    j["threshold"] = node.threshold;
    j["left"] = node_to_json(nodes, node.left);
    j["right"] = node_to_json(nodes, node.right);
  }
  return j;
}

int node_from_json(const nlohmann::json& j,
                   std::vector<DecisionTree::Node>& nodes) {
  if (!j.is_object()) throw InputError("tree JSON: node must be an object");
  DecisionTree::Node node;
  if (j.contains("p")) {
    if (!j.contains("n") || j.size() != 2) {
      throw InputError("tree JSON: leaf must have exactly {p, n}");
    }
    node.p = j.at("p").get<double>();
    node.n = j.at("n").get<std::int64_t>();
    if (!(node.p >= 0.0 && node.p <= 1.0) || node.n < 0) {
      throw InputError("tree JSON: leaf values out of range");
    }
    nodes.push_back(node);
    return static_cast<int>(nodes.size() - 1);
  }
  if (!j.contains("feature") || !j.contains("threshold") ||
      !j.contains("left") || !j.contains("right") || j.size() != 4) {
    throw InputError(
        "tree JSON: internal node must have exactly {feature, threshold, "
        "left, right}");
  }
  node.feature = j.at("feature").get<int>();
  node.threshold = j.at("threshold").get<double>();
  if (node.feature < 0 || !std::isfinite(node.threshold)) {
    throw InputError("tree JSON: bad split");
  }
  nodes.push_back(node);
  const auto id = static_cast<int>(nodes.size() - 1);
  const int left = node_from_json(j.at("left"), nodes);
  const int right = node_from_json(j.at("right"), nodes);
  nodes[static_cast<std::size_t>(id)].left = left;
  nodes[static_cast<std::size_t>(id)].right = right;
  return id;
}

}  // namespace

std::string DecisionTree::to_json() const {
  if (nodes_.empty()) throw InputError("DecisionTree: empty tree");
  return node_to_json(nodes_, 0).dump();
}

DecisionTree DecisionTree::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("tree JSON: parse failed: ") + e.what());
  }
  DecisionTree tree;
  node_from_json(j, tree.nodes_);
  std::size_t required = 0;
  for (const auto& node : tree.nodes_) {
    if (node.feature >= 0) {
      required = std::max(required, static_cast<std::size_t>(node.feature) + 1);
    }
  }
  tree.required_features_ = required;
  return tree;
}

}  // namespace apex
