#include "pipegrader/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pipegrader {
namespace {

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double score = -1.0;
};

struct GiniCriterion {
  std::span<const int> y;
  int num_classes;
  std::vector<double> total;
  std::vector<double> left;

  std::size_t width() const { return static_cast<std::size_t>(num_classes); }

  bool pure(std::span<const std::size_t> rows) const {
    for (auto r : rows) {
      if (y[r] != y[rows.front()]) return false;
    }
    return true;
  }

  void leaf(std::span<const std::size_t> rows, std::vector<double>& out) const {
    std::vector<double> freq(width(), 0.0);
    for (auto r : rows) freq[static_cast<std::size_t>(y[r])] += 1.0;
    for (auto& f : freq) out.push_back(f / static_cast<double>(rows.size()));
  }

  // Maximises sum_c L_c^2/n_L + sum_c R_c^2/n_R, which minimises the
  // size-weighted Gini impurity of the children.
  void scan(std::span<const std::pair<double, std::size_t>> sorted, int feature,
            std::size_t min_leaf, SplitCandidate& best) {
    total.assign(width(), 0.0);
    left.assign(width(), 0.0);
    for (const auto& [v, r] : sorted) total[static_cast<std::size_t>(y[r])] += 1.0;
    double sum_left_sq = 0.0;
    double sum_right_sq = 0.0;
    for (double t : total) sum_right_sq += t * t;
    const std::size_t n = sorted.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const auto c = static_cast<std::size_t>(y[sorted[i].second]);
      const double l = left[c];
      const double rgt = total[c] - l;
      sum_left_sq += 2.0 * l + 1.0;
      sum_right_sq -= 2.0 * rgt - 1.0;
      left[c] = l + 1.0;
      const std::size_t n_left = i + 1;
      if (n_left < min_leaf || n - n_left < min_leaf) continue;
      if (!(sorted[i].first < sorted[i + 1].first)) continue;
      const double score = sum_left_sq / static_cast<double>(n_left) +
                           sum_right_sq / static_cast<double>(n - n_left);
      if (score > best.score) {
        best.score = score;
        best.feature = feature;
        double mid = 0.5 * (sorted[i].first + sorted[i + 1].first);
        if (!(mid < sorted[i + 1].first)) mid = sorted[i].first;
        best.threshold = mid;
      }
    }
  }
};

struct SquaredErrorCriterion {
  std::span<const double> y;

  std::size_t width() const { return 1; }

  bool pure(std::span<const std::size_t> rows) const {
    for (auto r : rows) {
      if (y[r] != y[rows.front()]) return false;
    }
    return true;
  }

  void leaf(std::span<const std::size_t> rows, std::vector<double>& out) const {
    double sum = 0.0;
    for (auto r : rows) sum += y[r];
    out.push_back(sum / static_cast<double>(rows.size()));
  }

  void scan(std::span<const std::pair<double, std::size_t>> sorted, int feature,
            std::size_t min_leaf, SplitCandidate& best) {
    double total = 0.0;
    for (const auto& [v, r] : sorted) total += y[r];
    double sum_left = 0.0;
    const std::size_t n = sorted.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
      sum_left += y[sorted[i].second];
      const std::size_t n_left = i + 1;
      if (n_left < min_leaf || n - n_left < min_leaf) continue;
      if (!(sorted[i].first < sorted[i + 1].first)) continue;
      const double sum_right = total - sum_left;
      const double score = sum_left * sum_left / static_cast<double>(n_left) +
                           sum_right * sum_right / static_cast<double>(n - n_left);
      if (score > best.score) {
        best.score = score;
        best.feature = feature;
        double mid = 0.5 * (sorted[i].first + sorted[i + 1].first);
        if (!(mid < sorted[i + 1].first)) mid = sorted[i].first;
        best.threshold = mid;
      }
    }
  }
};

}  // namespace

std::size_t resolve_max_features(double fraction, std::size_t num_features) {
  if (num_features == 0) return 0;
  const auto k = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(num_features) - 1e-12));
  return std::clamp<std::size_t>(k, 1, num_features);
}

template <class Criterion>
void DecisionTree::grow(const Eigen::MatrixXd& x, Criterion& criterion,
                        std::vector<std::size_t>& rows,
                        const TreeOptions& options, Rng& rng) {
  nodes_.clear();
  values_.clear();
  value_width_ = criterion.width();
  if (rows.empty()) throw std::invalid_argument("cannot fit a tree on no rows");

  const auto num_features = static_cast<std::size_t>(x.cols());
  const std::size_t max_features =
      options.max_features == 0 ? num_features
                                : std::min(options.max_features, num_features);
  const std::size_t min_leaf = std::max<std::size_t>(options.min_samples_leaf, 1);

  struct Pending {
    std::uint32_t node;
    std::size_t begin;
    std::size_t end;
  };
  std::vector<Pending> stack;
  nodes_.push_back(Node{});
  stack.push_back({0, 0, rows.size()});

  std::vector<int> features(num_features);
  std::vector<std::pair<double, std::size_t>> sorted;
  sorted.reserve(rows.size());

  auto make_leaf = [&](std::uint32_t node, std::span<const std::size_t> span) {
    nodes_[node].feature = -1;
    nodes_[node].value_offset = static_cast<std::uint32_t>(values_.size());
    criterion.leaf(span, values_);
  };

  while (!stack.empty()) {
    const Pending task = stack.back();
    stack.pop_back();
    std::span<const std::size_t> span(rows.data() + task.begin,
                                      task.end - task.begin);
    if (span.size() < 2 * min_leaf || criterion.pure(span)) {
      make_leaf(task.node, span);
      continue;
    }

    // Draw features without replacement until `max_features` non-constant
    // ones have been scanned (or none remain).
    std::iota(features.begin(), features.end(), 0);
    SplitCandidate best;
    std::size_t scanned = 0;
    for (std::size_t i = 0; i < num_features && scanned < max_features; ++i) {
      const std::size_t j = i + rng.index(num_features - i);
      std::swap(features[i], features[j]);
      const int f = features[i];
      sorted.clear();
      for (auto r : span) {
        sorted.emplace_back(x(static_cast<Eigen::Index>(r), f), r);
      }
      std::sort(sorted.begin(), sorted.end());
      if (!(sorted.front().first < sorted.back().first)) continue;
      ++scanned;
      criterion.scan(sorted, f, min_leaf, best);
    }
    if (best.feature < 0) {
      make_leaf(task.node, span);
      continue;
    }

    auto* first = rows.data() + task.begin;
    auto* last = rows.data() + task.end;
    auto* middle = std::stable_partition(first, last, [&](std::size_t r) {
      return x(static_cast<Eigen::Index>(r), best.feature) <= best.threshold;
    });
    const std::size_t mid = task.begin + static_cast<std::size_t>(middle - first);

    const auto left = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(Node{});
    const auto right = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(Node{});
    nodes_[task.node].feature = best.feature;
    nodes_[task.node].threshold = best.threshold;
    nodes_[task.node].left = left;
    nodes_[task.node].right = right;
    stack.push_back({right, mid, task.end});
    stack.push_back({left, task.begin, mid});
  }
}

void DecisionTree::fit_classifier(const Eigen::MatrixXd& x, std::span<const int> y,
                                  int num_classes,
                                  std::span<const std::size_t> rows,
                                  const TreeOptions& options, Rng& rng) {
  GiniCriterion criterion{y, num_classes, {}, {}};
  std::vector<std::size_t> work(rows.begin(), rows.end());
  grow(x, criterion, work, options, rng);
}

void DecisionTree::fit_regressor(const Eigen::MatrixXd& x, std::span<const double> y,
                                 std::span<const std::size_t> rows,
                                 const TreeOptions& options, Rng& rng) {
  SquaredErrorCriterion criterion{y};
  std::vector<std::size_t> work(rows.begin(), rows.end());
  grow(x, criterion, work, options, rng);
}

std::span<const double> DecisionTree::leaf_value(const Eigen::MatrixXd& x,
                                                 Eigen::Index row) const {
  std::uint32_t node = 0;
  while (nodes_[node].feature >= 0) {
    const auto& n = nodes_[node];
    node = x(row, n.feature) <= n.threshold ? n.left : n.right;
  }
  return {values_.data() + nodes_[node].value_offset, value_width_};
}

namespace {

std::vector<std::size_t> draw_rows(std::size_t n, bool bootstrap, Rng& rng) {
  std::vector<std::size_t> rows(n);
  if (bootstrap) {
    for (auto& r : rows) r = rng.index(n);
    std::sort(rows.begin(), rows.end());
  } else {
    std::iota(rows.begin(), rows.end(), std::size_t{0});
  }
  return rows;
}

}  // namespace

void RandomForestClassifier::fit(const Eigen::MatrixXd& x, std::span<const int> y,
                                 int num_classes) {
  if (x.rows() == 0) throw std::invalid_argument("random forest: empty training set");
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw std::invalid_argument("random forest: shape mismatch");
  }
  num_classes_ = num_classes;
  TreeOptions tree_options;
  tree_options.max_features = resolve_max_features(
      options_.max_features_fraction, static_cast<std::size_t>(x.cols()));
  tree_options.min_samples_leaf = options_.min_samples_leaf;
  trees_.assign(options_.n_estimators, DecisionTree{});
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    Rng rng(mix_seed(seed_, t));
    const auto rows = draw_rows(static_cast<std::size_t>(x.rows()),
                                options_.bootstrap, rng);
    trees_[t].fit_classifier(x, y, num_classes, rows, tree_options, rng);
  }
}

Eigen::MatrixXd RandomForestClassifier::predict_proba(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(x.rows(), num_classes_);
  for (const auto& tree : trees_) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const auto leaf = tree.leaf_value(x, r);
      for (int c = 0; c < num_classes_; ++c) probs(r, c) += leaf[static_cast<std::size_t>(c)];
    }
  }
  for (Eigen::Index r = 0; r < x.rows(); ++r) probs.row(r) /= probs.row(r).sum();
  return probs;
}

void RandomForestRegressor::fit(const Eigen::MatrixXd& x, std::span<const double> y) {
  if (x.rows() == 0) throw std::invalid_argument("regression forest: empty training set");
  TreeOptions tree_options;
  tree_options.max_features = resolve_max_features(
      options_.max_features_fraction, static_cast<std::size_t>(x.cols()));
  tree_options.min_samples_leaf = options_.min_samples_leaf;
  trees_.assign(options_.n_estimators, DecisionTree{});
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    Rng rng(mix_seed(seed_, t));
    const auto rows = draw_rows(static_cast<std::size_t>(x.rows()),
                                options_.bootstrap, rng);
    trees_[t].fit_regressor(x, y, rows, tree_options, rng);
  }
}

RegressionPrediction RandomForestRegressor::predict(const Eigen::MatrixXd& x) const {
  RegressionPrediction out;
  out.mean = Eigen::VectorXd::Zero(x.rows());
  out.variance = Eigen::VectorXd::Zero(x.rows());
  const auto n = static_cast<double>(trees_.size());
  std::vector<double> leaves(trees_.size());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      leaves[t] = trees_[t].leaf_value(x, r)[0];
    }
    const double mean = std::accumulate(leaves.begin(), leaves.end(), 0.0) / n;
    double sq = 0.0;
    for (double v : leaves) sq += (v - mean) * (v - mean);
    out.mean(r) = mean;
    out.variance(r) = n > 1 ? sq / (n - 1) : 0.0;
  }
  return out;
}

}  // namespace pipegrader
