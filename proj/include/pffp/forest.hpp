#pragma once
// Random-forest prior over the four behavior classes from the two summary
// features (normalized maximum deceleration, penetration depth). Trees are
// grown by greedy Gini-gain splits with midpoint thresholds; leaves keep the
// class histogram so predictions are soft frequencies, not hard votes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pffp/errors.hpp"
#include "pffp/parallel.hpp"
#include "pffp/rng.hpp"

namespace pffp::forest {

inline constexpr int kNumFeatures = 2;
inline constexpr int kNumClasses = 4;

struct DataPoint {
  std::array<double, kNumFeatures> x{};
  int class_index = 0;  // 0..3
};

// Flattened pre-order node. feature == -1 marks a leaf; counts hold the
// per-class histogram of the training rows that reached it.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::array<std::int64_t, kNumClasses> counts{};
};

using Tree = std::vector<TreeNode>;

struct HyperParams {
  int n_trees = 200;
  int max_depth = 0;  // 0 = unbounded
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  bool bootstrap_replacement = true;  // false = 63.2% subsample without repeats
  int features_per_split = kNumFeatures;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_trees < 1 || min_samples_split < 1 || min_samples_leaf < 1 || max_depth < 0) {
      throw DataError("forest hyperparameters must be positive");
    }
    if (min_samples_leaf > min_samples_split) {
      throw DataError("min_samples_leaf must not exceed min_samples_split");
    }
    if (features_per_split < 1 || features_per_split > kNumFeatures) {
      throw DataError("features_per_split must be 1 or 2");
    }
  }
};

struct ForestModel {
  std::vector<Tree> trees;
  HyperParams hyperparams;
};

inline double gini(const std::array<std::int64_t, kNumClasses>& histogram) {
  std::int64_t total = 0;
  for (const auto c : histogram) total += c;
  if (total <= 0) throw EmptyHistogram();
  double sum_sq = 0.0;
  for (const auto c : histogram) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

namespace detail {

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

// Best Gini-gain split over the candidate features. Thresholds are midpoints
// between consecutive distinct sorted values; both children must satisfy
// min_samples_leaf. Ties keep the first candidate encountered.
inline SplitChoice best_split(std::span<const DataPoint> rows, std::span<const std::size_t> idx,
                              std::span<const int> features, int min_samples_leaf,
                              double parent_impurity) {
  SplitChoice best;
  const std::size_t n = idx.size();

  std::array<std::int64_t, kNumClasses> total{};
  for (const auto i : idx) total[static_cast<std::size_t>(rows[i].class_index)] += 1;

  std::vector<std::pair<double, int>> sorted(n);
  for (const int f : features) {
    for (std::size_t j = 0; j < n; ++j) {
      sorted[j] = {rows[idx[j]].x[static_cast<std::size_t>(f)], rows[idx[j]].class_index};
    }
    std::sort(sorted.begin(), sorted.end());

    std::array<std::int64_t, kNumClasses> left{};
    for (std::size_t j = 0; j + 1 < n; ++j) {
      left[static_cast<std::size_t>(sorted[j].second)] += 1;
      if (sorted[j].first == sorted[j + 1].first) continue;

      const auto n_left = static_cast<std::int64_t>(j + 1);
      const auto n_right = static_cast<std::int64_t>(n) - n_left;
      if (n_left < min_samples_leaf || n_right < min_samples_leaf) continue;

      double gini_left = 0.0, gini_right = 0.0;
      double sq_left = 0.0, sq_right = 0.0;
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        const double pl = static_cast<double>(left[c]) / static_cast<double>(n_left);
        const double pr =
            static_cast<double>(total[c] - left[c]) / static_cast<double>(n_right);
        sq_left += pl * pl;
        sq_right += pr * pr;
      }
      gini_left = 1.0 - sq_left;
      gini_right = 1.0 - sq_right;

      const double weighted = (static_cast<double>(n_left) * gini_left +
                               static_cast<double>(n_right) * gini_right) /
                              static_cast<double>(n);
      const double gain = parent_impurity - weighted;
      if (gain > best.gain) {
        best.found = true;
        best.feature = f;
        best.threshold = 0.5 * (sorted[j].first + sorted[j + 1].first);
        best.gain = gain;
      }
    }
  }
  return best;
}

inline int grow(Tree& tree, std::span<const DataPoint> rows, std::vector<std::size_t>& idx,
                const HyperParams& hp, Rng& rng, int depth) {
  std::array<std::int64_t, kNumClasses> counts{};
  for (const auto i : idx) counts[static_cast<std::size_t>(rows[i].class_index)] += 1;
  const double impurity = gini(counts);

  const int node = static_cast<int>(tree.size());
  tree.push_back(TreeNode{});
  tree[static_cast<std::size_t>(node)].counts = counts;

  const bool depth_capped = hp.max_depth > 0 && depth >= hp.max_depth;
  if (depth_capped || idx.size() < static_cast<std::size_t>(hp.min_samples_split) ||
      impurity <= 0.0) {
    return node;
  }

  std::array<int, kNumFeatures> all{0, 1};
  std::span<const int> candidates;
  int chosen = 0;
  if (hp.features_per_split >= kNumFeatures) {
    candidates = std::span<const int>(all.data(), kNumFeatures);
  } else {
    chosen = static_cast<int>(rng.index(kNumFeatures));
    candidates = std::span<const int>(&chosen, 1);
  }

  const auto split = best_split(rows, idx, candidates, hp.min_samples_leaf, impurity);
  if (!split.found) return node;

  std::vector<std::size_t> left_idx, right_idx;
  left_idx.reserve(idx.size());
  right_idx.reserve(idx.size());
  for (const auto i : idx) {
    if (rows[i].x[static_cast<std::size_t>(split.feature)] <= split.threshold) {
      left_idx.push_back(i);
    } else {
      right_idx.push_back(i);
    }
  }
  idx.clear();
  idx.shrink_to_fit();

  tree[static_cast<std::size_t>(node)].feature = split.feature;
  tree[static_cast<std::size_t>(node)].threshold = split.threshold;
  const int left = grow(tree, rows, left_idx, hp, rng, depth + 1);
  tree[static_cast<std::size_t>(node)].left = left;
  const int right = grow(tree, rows, right_idx, hp, rng, depth + 1);
  tree[static_cast<std::size_t>(node)].right = right;
  return node;
}

}  // namespace detail

inline Tree train_tree(std::span<const DataPoint> rows, const HyperParams& hp, Rng& rng) {
  hp.validate();
  if (rows.empty()) throw DataError("cannot train a tree on zero rows");
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Tree tree;
  detail::grow(tree, rows, idx, hp, rng, 0);
  return tree;
}

// Bootstrap draw for one tree: n rows with replacement, or a 63.2% subsample
// without repeats (the expected distinct fraction of a replacement bootstrap).
inline std::vector<std::size_t> bootstrap_indices(std::size_t n, bool with_replacement, Rng& rng) {
  std::vector<std::size_t> out;
  if (with_replacement) {
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(rng.index(n));
  } else {
    const auto m = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(0.632 * static_cast<double>(n))));
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < m; ++i) {
      std::swap(pool[i], pool[i + rng.index(n - i)]);
    }
    out.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
    std::sort(out.begin(), out.end());
  }
  return out;
}

// Per-tree generators derive from the master seed, so results are identical
// for any thread count.
inline ForestModel train_forest(const std::vector<DataPoint>& rows, const HyperParams& hp,
                                int threads = 1) {
  hp.validate();
  if (rows.empty()) throw DataError("cannot train a forest on zero rows");

  ForestModel model;
  model.hyperparams = hp;
  model.trees.resize(static_cast<std::size_t>(hp.n_trees));
  parallel_for(static_cast<std::size_t>(hp.n_trees), threads, [&](std::size_t t) {
    Rng rng(mix_seed(hp.seed, t));
    const auto picks = bootstrap_indices(rows.size(), hp.bootstrap_replacement, rng);
    std::vector<DataPoint> sample;
    sample.reserve(picks.size());
    for (const auto i : picks) sample.push_back(rows[i]);
    model.trees[t] = train_tree(sample, hp, rng);
  });
  return model;
}

inline const TreeNode& descend(const Tree& tree, const std::array<double, kNumFeatures>& x) {
  const TreeNode* node = &tree.front();
  while (node->feature >= 0) {
    const int next = x[static_cast<std::size_t>(node->feature)] <= node->threshold ? node->left
                                                                                   : node->right;
    node = &tree[static_cast<std::size_t>(next)];
  }
  return *node;
}

// Average of per-leaf class frequencies across trees; sums to 1.
inline std::array<double, kNumClasses> predict_proba(const ForestModel& model,
                                                     const std::array<double, kNumFeatures>& x) {
  if (model.trees.empty()) throw UntrainedModel();
  std::array<double, kNumClasses> probs{};
  for (const auto& tree : model.trees) {
    const auto& leaf = descend(tree, x);
    std::int64_t total = 0;
    for (const auto c : leaf.counts) total += c;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      probs[c] += static_cast<double>(leaf.counts[c]) / static_cast<double>(total);
    }
  }
  for (auto& p : probs) p /= static_cast<double>(model.trees.size());
  return probs;
}

inline int predict_class_index(const ForestModel& model, const std::array<double, kNumFeatures>& x) {
  const auto probs = predict_proba(model, x);
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

// --- grid search with stratified cross-validation ---

struct GridPointScore {
  HyperParams params;
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
};

struct GridSearchResult {
  HyperParams best;
  ForestModel model;  // best point retrained on the full training set
  std::vector<GridPointScore> table;
};

// Fold id per row: per class, shuffled then dealt round-robin, with the class
// index offsetting the first fold so small classes spread across folds.
inline std::vector<int> stratified_folds(const std::vector<DataPoint>& rows, int folds, Rng& rng) {
  std::vector<int> fold_of(rows.size(), 0);
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].class_index == c) members.push_back(i);
    }
    Rng class_rng = rng.fork(static_cast<std::uint64_t>(c) + 101);
    class_rng.shuffle(members);
    for (std::size_t j = 0; j < members.size(); ++j) {
      fold_of[members[j]] = static_cast<int>((j + static_cast<std::size_t>(c)) %
                                             static_cast<std::size_t>(folds));
    }
  }
  return fold_of;
}

// Default search space; features_per_split stays at 2 (both features).
inline std::vector<HyperParams> default_grid(std::uint64_t seed) {
  std::vector<HyperParams> grid;
  std::size_t index = 0;
  for (const int trees : {100, 200, 500}) {
    for (const int depth : {0, 5, 10, 20}) {
      for (const int min_split : {2, 5, 10}) {
        for (const int min_leaf : {1, 2, 4}) {
          if (min_leaf > min_split) continue;
          for (const bool replacement : {true, false}) {
            HyperParams hp;
            hp.n_trees = trees;
            hp.max_depth = depth;
            hp.min_samples_split = min_split;
            hp.min_samples_leaf = min_leaf;
            hp.bootstrap_replacement = replacement;
            hp.seed = mix_seed(seed, index++);
            grid.push_back(hp);
          }
        }
      }
    }
  }
  return grid;
}

// Mean accuracy over stratified folds per grid point; the winner (ties to
// fewer trees, then shallower depth) is retrained on the full training set.
inline GridSearchResult grid_search_cv(const std::vector<DataPoint>& train,
                                       const std::vector<HyperParams>& grid, int folds = 5,
                                       std::uint64_t seed = 0, int threads = 1) {
  if (grid.empty()) throw GridEmpty();
  if (train.size() < static_cast<std::size_t>(folds) || folds < 2) {
    throw DataError("need at least `folds` training rows");
  }

  Rng fold_rng(mix_seed(seed, 0xf01d));
  const auto fold_of = stratified_folds(train, folds, fold_rng);

  std::vector<GridPointScore> table(grid.size());
  parallel_for(grid.size(), threads, [&](std::size_t g) {
    GridPointScore score;
    score.params = grid[g];
    for (int f = 0; f < folds; ++f) {
      std::vector<DataPoint> fit_rows, hold_rows;
      for (std::size_t i = 0; i < train.size(); ++i) {
        (fold_of[i] == f ? hold_rows : fit_rows).push_back(train[i]);
      }
      if (hold_rows.empty() || fit_rows.empty()) continue;

      HyperParams hp = grid[g];
      hp.seed = mix_seed(grid[g].seed, static_cast<std::uint64_t>(f));
      const auto model = train_forest(fit_rows, hp, 1);
      std::size_t hits = 0;
      for (const auto& row : hold_rows) {
        if (predict_class_index(model, row.x) == row.class_index) ++hits;
      }
      score.fold_accuracy.push_back(static_cast<double>(hits) /
                                    static_cast<double>(hold_rows.size()));
    }
    score.mean_accuracy =
        score.fold_accuracy.empty()
            ? 0.0
            : std::accumulate(score.fold_accuracy.begin(), score.fold_accuracy.end(), 0.0) /
                  static_cast<double>(score.fold_accuracy.size());
    table[g] = std::move(score);
  });

  std::size_t best = 0;
  const auto depth_rank = [](const HyperParams& hp) {
    return hp.max_depth == 0 ? std::numeric_limits<int>::max() : hp.max_depth;
  };
  for (std::size_t g = 1; g < table.size(); ++g) {
    const auto& cand = table[g];
    const auto& curr = table[best];
    if (cand.mean_accuracy > curr.mean_accuracy) {
      best = g;
    } else if (cand.mean_accuracy == curr.mean_accuracy) {
      if (cand.params.n_trees < curr.params.n_trees ||
          (cand.params.n_trees == curr.params.n_trees &&
           depth_rank(cand.params) < depth_rank(curr.params))) {
        best = g;
      }
    }
  }

  GridSearchResult result;
  result.best = table[best].params;
  result.table = std::move(table);
  result.model = train_forest(train, result.best, threads);
  return result;
}

}  // namespace pffp::forest
