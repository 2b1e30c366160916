#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include <Eigen/Dense>

#include "pipegrader/datasets.hpp"
#include "pipegrader/forest.hpp"

namespace pipegrader {

/// Rows are samples, columns features.
using FeatureMatrix = Eigen::MatrixXd;

/// A component could not be fitted or applied (degenerate input, bad
/// hyperparameter). The evaluator turns these into penalised trials.
class ComponentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- Feature extraction ----------------------------------------------------

struct GlcmStatistics {
  double contrast = 0.0;
  double correlation = 0.0;
  double energy = 0.0;
  double entropy = 0.0;
  double homogeneity = 0.0;
  double variance = 0.0;
};

inline constexpr int kGlcmLevels = 16;

/// Statistics of the symmetric, normalised co-occurrence matrix for pixel
/// offset (row_offset, col_offset) after quantisation to 16 gray levels.
GlcmStatistics glcm_statistics(const Image& image, int row_offset,
                               int col_offset);

/// Six Haralick statistics averaged over 0, 45, 90 and 135 degrees.
FeatureMatrix haralick_features(std::span<const Image> images, int distance);

/// Box-filter resampling to `size` x `size`, flattened row-major.
FeatureMatrix downsample_features(std::span<const Image> images, int size);

/// Stand-in for a pretrained network: 16x16 downsample, a frozen 256->64
/// random projection, then tanh.
FeatureMatrix frozen_projection_features(std::span<const Image> images);
inline constexpr int kProjectionWidth = 64;

// --- Feature transformation -------------------------------------------------

class PcaModel {
 public:
  static PcaModel fit(const FeatureMatrix& train, bool whitening);
  FeatureMatrix transform(const FeatureMatrix& x) const;

  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  const Eigen::MatrixXd& components() const { return components_; }

 private:
  Eigen::RowVectorXd mean_;
  Eigen::MatrixXd components_;  // cols = retained principal axes
  Eigen::VectorXd eigenvalues_;
  bool whitening_ = false;
};

FeatureMatrix pca_fit_transform(const FeatureMatrix& train,
                                const FeatureMatrix& apply, bool whitening);

class IsomapModel {
 public:
  static IsomapModel fit(const FeatureMatrix& train, int n_neighbors,
                         int n_components);
  /// Nystrom extension; each row reaches the training graph through its
  /// nearest training points.
  FeatureMatrix transform(const FeatureMatrix& x) const;

  const Eigen::MatrixXd& geodesic() const { return geodesic_; }
  const FeatureMatrix& embedding() const { return embedding_; }
  /// True if the kNN graph was disconnected and had to be stitched.
  bool stitched() const { return stitched_; }

 private:
  FeatureMatrix train_;
  Eigen::MatrixXd geodesic_;
  Eigen::VectorXd mean_sq_geodesic_;  // column means of geodesic^2
  Eigen::MatrixXd vectors_;           // top eigenvectors of the MDS Gram
  Eigen::VectorXd values_;
  FeatureMatrix embedding_;
  int n_neighbors_ = 0;
  bool stitched_ = false;
};

FeatureMatrix isomap_fit_transform(const FeatureMatrix& train,
                                   const FeatureMatrix& apply, int n_neighbors,
                                   int n_components);

/// Train-fitted z-score; zero-variance columns keep unit scale.
class Standardizer {
 public:
  static Standardizer fit(const FeatureMatrix& train);
  FeatureMatrix transform(const FeatureMatrix& x) const;

 private:
  Eigen::RowVectorXd mean_;
  Eigen::RowVectorXd scale_;
};

// --- Learners ---------------------------------------------------------------

Eigen::MatrixXd random_forest(const FeatureMatrix& train_x,
                              std::span<const int> train_y, int num_classes,
                              const FeatureMatrix& apply_x,
                              std::size_t n_estimators, double max_features,
                              std::uint64_t seed, bool bootstrap = true);

/// One-vs-rest RBF kernel ridge on standardised features, softmax over the
/// per-class margins. Functional stand-in for an SVM with (C, gamma).
class KernelRidgeClassifier {
 public:
  KernelRidgeClassifier(double c, double gamma) : c_(c), gamma_(gamma) {}
  void fit(const FeatureMatrix& x, std::span<const int> y, int num_classes);
  Eigen::MatrixXd predict_proba(const FeatureMatrix& x) const;
  Eigen::MatrixXd kernel(const FeatureMatrix& a, const FeatureMatrix& b) const;

 private:
  double c_;
  double gamma_;
  Standardizer standardizer_;
  FeatureMatrix train_;
  Eigen::MatrixXd dual_;  // n x classes
};

Eigen::MatrixXd kernel_classifier(const FeatureMatrix& train_x,
                                  std::span<const int> train_y, int num_classes,
                                  const FeatureMatrix& apply_x, double c,
                                  double gamma);

class NearestNeighborClassifier {
 public:
  void fit(const FeatureMatrix& x, std::span<const int> y, int num_classes);
  /// One-hot rows; ties go to the lowest training index.
  Eigen::MatrixXd predict_proba(const FeatureMatrix& x) const;

 private:
  FeatureMatrix train_;
  std::vector<int> labels_;
  int num_classes_ = 0;
};

// --- Uniform component contract --------------------------------------------

enum class ComponentRole { kFeatureExtraction, kFeatureTransformation, kLearning };

std::string_view to_string(ComponentRole role);
ComponentRole parse_role(std::string_view text);

class Extractor {
 public:
  virtual ~Extractor() = default;
  virtual FeatureMatrix extract(std::span<const Image> images) const = 0;
};

class Transformer {
 public:
  virtual ~Transformer() = default;
  virtual void fit(const FeatureMatrix& train) = 0;
  virtual FeatureMatrix transform(const FeatureMatrix& x) const = 0;
};

class Learner {
 public:
  virtual ~Learner() = default;
  virtual void fit(const FeatureMatrix& x, std::span<const int> y,
                   int num_classes) = 0;
  virtual Eigen::MatrixXd predict_proba(const FeatureMatrix& x) const = 0;
};

using ComponentInstance = std::variant<std::unique_ptr<Extractor>,
                                       std::unique_ptr<Transformer>,
                                       std::unique_ptr<Learner>>;

/// Unqualified hyperparameter name -> decimal-string value.
using ParameterValues = std::map<std::string, std::string>;

bool is_known_component(std::string_view algorithm_id);
ComponentRole component_role(std::string_view algorithm_id);

/// Builds an unfitted component. `seed` drives the stochastic learners.
ComponentInstance make_component(std::string_view algorithm_id,
                                 const ParameterValues& params,
                                 std::uint64_t seed);

/// Hyperparameter-free benchmarks: 8x8 downsample, identity, 1-NN.
ComponentInstance naive_component(ComponentRole role);
std::string_view naive_component_id(ComponentRole role);

}  // namespace pipegrader
