#pragma once

// Condition-based flagging of sparse/mixed predictions, the combined
// anomaly verdict, and the two lightweight baseline detectors (isolation
// forest and local outlier factor).

#include "rhgr/anomaly/vae.hpp"
#include "rhgr/model/metrics.hpp"

namespace rhgr::anomaly {

enum class ConditionFlag { None, Sparse, Mixed };

inline const char* condition_name(ConditionFlag f) {
  switch (f) {
    case ConditionFlag::None: return "none";
    case ConditionFlag::Sparse: return "sparse";
    case ConditionFlag::Mixed: return "mixed";
  }
  return "?";
}

// Inside the extended tolerance window of the refined truth segment:
// mixed if two or more distinct non-background classes are predicted,
// else sparse if something is predicted but the longest single-class run
// is at most 4 frames, else none.
inline ConditionFlag flag_conditions(const std::vector<int>& preds,
                                     const std::vector<int>& truth) {
  if (preds.size() != truth.size())
    throw ShapeError("flag_conditions: prediction length mismatch");
  auto [lo, hi] = model::extended_window(truth);
  std::set<int> classes;
  std::size_t longest = 0, run = 0;
  int prev = 0;
  std::size_t nonzero = 0;
  for (std::size_t i = lo; i <= hi; ++i) {
    const int p = preds[i];
    if (p != 0) {
      classes.insert(p);
      ++nonzero;
      run = (p == prev) ? run + 1 : 1;
      longest = std::max(longest, run);
    } else {
      run = 0;
    }
    prev = p;
  }
  if (classes.size() >= 2) return ConditionFlag::Mixed;
  if (nonzero > 0 && longest <= 4) return ConditionFlag::Sparse;
  return ConditionFlag::None;
}

enum class Category { Nominal, ConditionFlagged, ExclusiveVae, Both };

inline const char* category_name(Category c) {
  switch (c) {
    case Category::Nominal: return "nominal";
    case Category::ConditionFlagged: return "condition-flagged";
    case Category::ExclusiveVae: return "exclusive-vae-flagged";
    case Category::Both: return "both";
  }
  return "?";
}

struct AnomalyVerdict {
  ConditionFlag condition = ConditionFlag::None;
  bool vae_flagged = false;
  double e_rec = 0.0;
  double threshold = 0.0;
  Category category = Category::Nominal;
};

inline AnomalyVerdict judge(const Vec& x, const std::vector<int>& preds,
                            const std::vector<int>& truth, VaeModel& vae,
                            const UserThreshold& thr) {
  AnomalyVerdict v;
  v.condition = flag_conditions(preds, truth);
  v.e_rec = reconstruction_error(vae, x);
  v.threshold = thr.value;
  v.vae_flagged = v.e_rec > thr.value;
  const bool cond = v.condition != ConditionFlag::None;
  if (cond && v.vae_flagged) v.category = Category::Both;
  else if (cond) v.category = Category::ConditionFlagged;
  else if (v.vae_flagged) v.category = Category::ExclusiveVae;
  else v.category = Category::Nominal;
  return v;
}

// Ten-value summary of a recording (per feature: mean and span), the
// compact alternative input for the baseline detectors.
inline Vec summary_features(const dsp::FeatureSequence& seq) {
  Vec out;
  for (std::size_t j = 0; j < dsp::kNumFeatures; ++j) {
    double mn = std::numeric_limits<double>::infinity(), mx = -mn, mean = 0.0;
    for (const auto& f : seq.frames) {
      const double v = f.as_array()[j];
      mn = std::min(mn, v);
      mx = std::max(mx, v);
      mean += v;
    }
    mean /= static_cast<double>(seq.size());
    out.push_back(mean);
    out.push_back(mx - mn);
  }
  return out;
}

// --- Isolation forest -----------------------------------------------------

namespace detail {

// Average unsuccessful-search path length in a BST of n points.
inline double avg_path(std::size_t n) {
  if (n <= 1) return 0.0;
  const double h = std::log(static_cast<double>(n - 1)) + 0.5772156649015329;
  return 2.0 * h - 2.0 * static_cast<double>(n - 1) / static_cast<double>(n);
}

struct IsoNode {
  int feature = -1;       // -1: leaf
  double split = 0.0;
  std::size_t size = 0;   // leaf size
  int left = -1, right = -1;
};

}  // namespace detail

struct IsolationForest {
  std::size_t n_trees = 250;
  double contamination = 0.055;
  std::size_t subsample = 256;
  double score_threshold = 0.0;
  std::size_t sample_size = 0;

  std::vector<std::vector<detail::IsoNode>> trees;

  void fit(const std::vector<Vec>& data, std::uint64_t seed) {
    if (data.empty()) throw DataError("IsolationForest: empty training set");
    const std::size_t dim = data[0].size();
    Rng rng(derive_seed(seed, "iforest"));
    sample_size = std::min(subsample, data.size());
    const std::size_t max_depth = static_cast<std::size_t>(
        std::ceil(std::log2(std::max<std::size_t>(sample_size, 2))));
    trees.clear();
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t t = 0; t < n_trees; ++t) {
      std::shuffle(all.begin(), all.end(), rng);
      std::vector<std::size_t> idx(all.begin(),
                                   all.begin() + static_cast<std::ptrdiff_t>(sample_size));
      std::vector<detail::IsoNode> tree;
      build(tree, data, idx, 0, max_depth, dim, rng);
      trees.push_back(std::move(tree));
    }
    // threshold at the contamination quantile of the training scores
    Vec scores;
    for (const auto& x : data) scores.push_back(score(x));
    std::sort(scores.begin(), scores.end());
    const std::size_t flagged = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::lround(contamination * static_cast<double>(scores.size()))));
    score_threshold = scores[scores.size() - flagged];
  }

  double score(const Vec& x) const {
    if (trees.empty()) throw ConfigError("IsolationForest: not fitted");
    double total = 0.0;
    for (const auto& tree : trees) {
      int node = 0;
      double depth = 0.0;
      while (tree[static_cast<std::size_t>(node)].feature >= 0) {
        const auto& nd = tree[static_cast<std::size_t>(node)];
        node = x[static_cast<std::size_t>(nd.feature)] < nd.split ? nd.left : nd.right;
        depth += 1.0;
      }
      total += depth + detail::avg_path(tree[static_cast<std::size_t>(node)].size);
    }
    const double mean_path = total / static_cast<double>(trees.size());
    return std::pow(2.0, -mean_path / detail::avg_path(sample_size));
  }

  bool flagged(const Vec& x) const { return score(x) > score_threshold; }

 private:
  static void build(std::vector<detail::IsoNode>& tree, const std::vector<Vec>& data,
                    std::vector<std::size_t> idx, std::size_t depth,
                    std::size_t max_depth, std::size_t dim, Rng& rng) {
    const std::size_t me = tree.size();
    tree.emplace_back();
    if (idx.size() <= 1 || depth >= max_depth) {
      tree[me].size = idx.size();
      return;
    }
    // pick a feature with spread; give up after a few tries
    for (int attempt = 0; attempt < 8; ++attempt) {
      const std::size_t f = static_cast<std::size_t>(rand_uniform(rng) *
                                                     static_cast<double>(dim)) % dim;
      double mn = std::numeric_limits<double>::infinity(), mx = -mn;
      for (std::size_t i : idx) {
        mn = std::min(mn, data[i][f]);
        mx = std::max(mx, data[i][f]);
      }
      if (mx <= mn) continue;
      const double split = mn + rand_uniform(rng) * (mx - mn);
      std::vector<std::size_t> l, r;
      for (std::size_t i : idx) (data[i][f] < split ? l : r).push_back(i);
      if (l.empty() || r.empty()) continue;
      tree[me].feature = static_cast<int>(f);
      tree[me].split = split;
      tree[me].left = static_cast<int>(tree.size());
      build(tree, data, std::move(l), depth + 1, max_depth, dim, rng);
      tree[me].right = static_cast<int>(tree.size());
      build(tree, data, std::move(r), depth + 1, max_depth, dim, rng);
      return;
    }
    tree[me].size = idx.size();
  }
};

// --- Local outlier factor -------------------------------------------------

struct LofScorer {
  std::size_t k = 35;
  double flag_threshold = 1.5;

  std::vector<Vec> points;
  Vec k_distance;  // per training point
  Vec lrd;         // local reachability density per training point

  void fit(const std::vector<Vec>& data, std::size_t k_neighbors = 35) {
    k = k_neighbors;
    if (data.size() < k + 1)
      throw ConfigError("LofScorer: need at least k+1 training points");
    points = data;
    const std::size_t n = points.size();
    std::vector<std::vector<std::pair<double, std::size_t>>> knn(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::pair<double, std::size_t>> d;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) d.push_back({dist(points[i], points[j]), j});
      std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
      d.resize(k);
      knn[i] = std::move(d);
    }
    k_distance.resize(n);
    for (std::size_t i = 0; i < n; ++i) k_distance[i] = knn[i].back().first;
    lrd.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double reach = 0.0;
      for (const auto& [d, j] : knn[i]) reach += std::max(k_distance[j], d);
      lrd[i] = reach > 0.0 ? static_cast<double>(k) / reach
                           : std::numeric_limits<double>::infinity();
    }
  }

  double score(const Vec& x) const {
    if (points.empty()) throw ConfigError("LofScorer: not fitted");
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < points.size(); ++j) d.push_back({dist(x, points[j]), j});
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    double reach = 0.0, neighbor_lrd = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      reach += std::max(k_distance[d[i].second], d[i].first);
      neighbor_lrd += lrd[d[i].second];
    }
    const double lrd_x = reach > 0.0 ? static_cast<double>(k) / reach
                                     : std::numeric_limits<double>::infinity();
    if (!std::isfinite(lrd_x)) return 1.0;  // duplicate of a dense point
    return neighbor_lrd / static_cast<double>(k) / lrd_x;
  }

  bool flagged(const Vec& x) const { return score(x) > flag_threshold; }

  static double dist(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw ShapeError("LofScorer: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  }
};

}  // namespace rhgr::anomaly
