#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pipegrader/random.hpp"

namespace pipegrader {

struct TreeOptions {
  std::size_t max_features = 0;  // 0 means all features
  std::size_t min_samples_leaf = 1;
};

/// Unpruned CART tree. Classification trees split on Gini impurity and
/// store class frequencies at the leaves; regression trees split on squared
/// error and store the mean target.
class DecisionTree {
 public:
  /// `rows` may contain repeats (bootstrap samples).
  void fit_classifier(const Eigen::MatrixXd& x, std::span<const int> y,
                      int num_classes, std::span<const std::size_t> rows,
                      const TreeOptions& options, Rng& rng);
  void fit_regressor(const Eigen::MatrixXd& x, std::span<const double> y,
                     std::span<const std::size_t> rows,
                     const TreeOptions& options, Rng& rng);

  /// Leaf payload: class frequencies (num_classes values) or one mean.
  std::span<const double> leaf_value(const Eigen::MatrixXd& x,
                                     Eigen::Index row) const;
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::uint32_t value_offset = 0;
  };

  template <class Criterion>
  void grow(const Eigen::MatrixXd& x, Criterion& criterion,
            std::vector<std::size_t>& rows, const TreeOptions& options,
            Rng& rng);

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::size_t value_width_ = 1;
};

struct ForestOptions {
  std::size_t n_estimators = 100;
  double max_features_fraction = 1.0;  // ceil(fraction * d), at least 1
  bool bootstrap = true;
  std::size_t min_samples_leaf = 1;
};

class RandomForestClassifier {
 public:
  RandomForestClassifier(ForestOptions options, std::uint64_t seed)
      : options_(options), seed_(seed) {}

  void fit(const Eigen::MatrixXd& x, std::span<const int> y, int num_classes);
  /// Mean of leaf class frequencies over trees; rows sum to 1.
  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& x) const;

 private:
  ForestOptions options_;
  std::uint64_t seed_;
  int num_classes_ = 0;
  std::vector<DecisionTree> trees_;
};

struct RegressionPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;  // sample variance across trees
};

class RandomForestRegressor {
 public:
  RandomForestRegressor(ForestOptions options, std::uint64_t seed)
      : options_(options), seed_(seed) {}

  void fit(const Eigen::MatrixXd& x, std::span<const double> y);
  RegressionPrediction predict(const Eigen::MatrixXd& x) const;

 private:
  ForestOptions options_;
  std::uint64_t seed_;
  std::vector<DecisionTree> trees_;
};

std::size_t resolve_max_features(double fraction, std::size_t num_features);

}  // namespace pipegrader
