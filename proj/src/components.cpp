#include "pipegrader/components.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "pipegrader/linalg.hpp"
#include "pipegrader/random.hpp"

namespace pipegrader {
namespace {

constexpr std::uint64_t kProjectionSeed = 0x9a4d3f1e5b7c2081ULL;
constexpr int kProjectionInput = 16;

int quantize(double v) {
  const int level = static_cast<int>(std::floor(v * kGlcmLevels));
  return std::clamp(level, 0, kGlcmLevels - 1);
}

void require_finite(const Eigen::MatrixXd& m, std::string_view what) {
  if (!m.allFinite()) {
    throw ComponentError(std::string(what) + " produced non-finite values");
  }
}

const Eigen::MatrixXd& projection_matrix() {
  static const Eigen::MatrixXd kMatrix = [] {
    constexpr int kInputs = kProjectionInput * kProjectionInput;
    Eigen::MatrixXd w(kInputs, kProjectionWidth);
    Rng rng(kProjectionSeed);
    for (int c = 0; c < kProjectionWidth; ++c) {
      for (int r = 0; r < kInputs; ++r) w(r, c) = rng.normal() / 16.0;
    }
    return w;
  }();
  return kMatrix;
}

}  // namespace

GlcmStatistics glcm_statistics(const Image& image, int row_offset,
                               int col_offset) {
  std::array<double, kGlcmLevels * kGlcmLevels> p{};
  double pairs = 0.0;
  for (int r = 0; r < image.height; ++r) {
    const int r2 = r + row_offset;
    if (r2 < 0 || r2 >= image.height) continue;
    for (int c = 0; c < image.width; ++c) {
      const int c2 = c + col_offset;
      if (c2 < 0 || c2 >= image.width) continue;
      const int a = quantize(image.at(r, c));
      const int b = quantize(image.at(r2, c2));
      p[static_cast<std::size_t>(a * kGlcmLevels + b)] += 1.0;
      p[static_cast<std::size_t>(b * kGlcmLevels + a)] += 1.0;
      pairs += 2.0;
    }
  }
  if (pairs == 0.0) {
    throw ComponentError("image too small for co-occurrence offset");
  }
  for (auto& v : p) v /= pairs;

  GlcmStatistics s;
  double mean = 0.0;
  for (int i = 0; i < kGlcmLevels; ++i) {
    for (int j = 0; j < kGlcmLevels; ++j) mean += i * p[static_cast<std::size_t>(i * kGlcmLevels + j)];
  }
  double asm_sum = 0.0;
  double cov = 0.0;
  for (int i = 0; i < kGlcmLevels; ++i) {
    for (int j = 0; j < kGlcmLevels; ++j) {
      const double v = p[static_cast<std::size_t>(i * kGlcmLevels + j)];
      if (v == 0.0) continue;
      const double diff = i - j;
      s.contrast += v * diff * diff;
      s.homogeneity += v / (1.0 + diff * diff);
      s.entropy -= v * std::log(v);
      s.variance += v * (i - mean) * (i - mean);
      cov += v * (i - mean) * (j - mean);
      asm_sum += v * v;
    }
  }
  s.energy = std::sqrt(asm_sum);
  // A constant patch has no spread; treat it as perfectly correlated.
  s.correlation = s.variance > 1e-15 ? cov / s.variance : 1.0;
  if (s.entropy == 0.0) s.entropy = 0.0;  // normalise -0
  return s;
}

FeatureMatrix haralick_features(std::span<const Image> images, int distance) {
  if (distance < 1) throw ComponentError("Haralick distance must be >= 1");
  FeatureMatrix out(static_cast<Eigen::Index>(images.size()), 6);
  const std::array<std::pair<int, int>, 4> offsets = {
      std::pair{0, distance}, std::pair{-distance, distance},
      std::pair{-distance, 0}, std::pair{-distance, -distance}};
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    if (img.height < distance + 1 || img.width < distance + 1) {
      throw ComponentError("image smaller than Haralick distance + 1");
    }
    GlcmStatistics mean;
    for (const auto& [dr, dc] : offsets) {
      const auto s = glcm_statistics(img, dr, dc);
      mean.contrast += s.contrast / 4.0;
      mean.correlation += s.correlation / 4.0;
      mean.energy += s.energy / 4.0;
      mean.entropy += s.entropy / 4.0;
      mean.homogeneity += s.homogeneity / 4.0;
      mean.variance += s.variance / 4.0;
    }
    out.row(static_cast<Eigen::Index>(i)) << mean.contrast, mean.correlation,
        mean.energy, mean.entropy, mean.homogeneity, mean.variance;
  }
  return out;
}

FeatureMatrix downsample_features(std::span<const Image> images, int size) {
  FeatureMatrix out(static_cast<Eigen::Index>(images.size()), size * size);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    for (int r = 0; r < size; ++r) {
      const int r0 = r * img.height / size;
      const int r1 = std::max(r0 + 1, (r + 1) * img.height / size);
      for (int c = 0; c < size; ++c) {
        const int c0 = c * img.width / size;
        const int c1 = std::max(c0 + 1, (c + 1) * img.width / size);
        double sum = 0.0;
        for (int y = r0; y < r1; ++y) {
          for (int x = c0; x < c1; ++x) sum += img.at(y, x);
        }
        out(static_cast<Eigen::Index>(i), r * size + c) = sum / ((r1 - r0) * (c1 - c0));
      }
    }
  }
  return out;
}

FeatureMatrix frozen_projection_features(std::span<const Image> images) {
  const FeatureMatrix pixels = downsample_features(images, kProjectionInput);
  FeatureMatrix out = pixels * projection_matrix();
  return out.array().tanh().matrix();
}

PcaModel PcaModel::fit(const FeatureMatrix& train, bool whitening) {
  if (train.rows() < 2) throw ComponentError("PCA needs at least 2 rows");
  PcaModel model;
  model.whitening_ = whitening;
  model.mean_ = train.colwise().mean();
  const FeatureMatrix centered = train.rowwise() - model.mean_;
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(train.rows() - 1);
  const auto eig = jacobi_eigen(cov);
  const double top = eig.values.size() ? eig.values(0) : 0.0;
  const Eigen::Index limit = std::min<Eigen::Index>(train.rows() - 1, train.cols());
  Eigen::Index keep = 0;
  while (keep < limit && top > 1e-12 && eig.values(keep) > 1e-10 * top) ++keep;
  if (keep == 0) throw ComponentError("PCA: training data has no variance");
  model.components_ = eig.vectors.leftCols(keep);
  model.eigenvalues_ = eig.values.head(keep);
  return model;
}

FeatureMatrix PcaModel::transform(const FeatureMatrix& x) const {
  FeatureMatrix out = (x.rowwise() - mean_) * components_;
  if (whitening_) {
    out = out * eigenvalues_.cwiseSqrt().cwiseInverse().asDiagonal();
  }
  require_finite(out, "PCA");
  return out;
}

FeatureMatrix pca_fit_transform(const FeatureMatrix& train,
                                const FeatureMatrix& apply, bool whitening) {
  return PcaModel::fit(train, whitening).transform(apply);
}

namespace {

// Indices of the k nearest rows (by the given distance row), ties by index.
std::vector<Eigen::Index> nearest(const Eigen::RowVectorXd& distances,
                                  std::size_t k,
                                  Eigen::Index exclude = -1) {
  std::vector<Eigen::Index> order;
  order.reserve(static_cast<std::size_t>(distances.size()));
  for (Eigen::Index j = 0; j < distances.size(); ++j) {
    if (j != exclude) order.push_back(j);
  }
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                    order.end(), [&](Eigen::Index a, Eigen::Index b) {
                      if (distances(a) != distances(b)) return distances(a) < distances(b);
                      return a < b;
                    });
  order.resize(k);
  return order;
}

}  // namespace

IsomapModel IsomapModel::fit(const FeatureMatrix& train, int n_neighbors,
                             int n_components) {
  const Eigen::Index n = train.rows();
  if (n_neighbors < 1) throw ComponentError("ISOMAP: n_neighbors must be >= 1");
  if (n <= n_neighbors) {
    throw ComponentError("ISOMAP: need more training rows than neighbors");
  }
  if (n_components < 1 || n_components > n - 1) {
    throw ComponentError("ISOMAP: n_components exceeds training rows - 1");
  }
  IsomapModel model;
  model.train_ = train;
  model.n_neighbors_ = n_neighbors;

  const Eigen::MatrixXd dist = squared_distances(train, train).cwiseSqrt();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd weight = Eigen::MatrixXd::Constant(n, n, kInf);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (auto j : nearest(dist.row(i), static_cast<std::size_t>(n_neighbors), i)) {
      weight(i, j) = dist(i, j);
      weight(j, i) = dist(i, j);
    }
  }

  // Join components through their closest cross-component pair until the
  // graph is connected.
  while (true) {
    std::vector<int> comp(static_cast<std::size_t>(n), -1);
    int count = 0;
    for (Eigen::Index s = 0; s < n; ++s) {
      if (comp[static_cast<std::size_t>(s)] >= 0) continue;
      std::vector<Eigen::Index> queue{s};
      comp[static_cast<std::size_t>(s)] = count;
      while (!queue.empty()) {
        const auto u = queue.back();
        queue.pop_back();
        for (Eigen::Index v = 0; v < n; ++v) {
          if (comp[static_cast<std::size_t>(v)] < 0 && std::isfinite(weight(u, v))) {
            comp[static_cast<std::size_t>(v)] = count;
            queue.push_back(v);
          }
        }
      }
      ++count;
    }
    if (count == 1) break;
    model.stitched_ = true;
    double best = kInf;
    Eigen::Index bi = 0, bj = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        if (comp[static_cast<std::size_t>(i)] != comp[static_cast<std::size_t>(j)] &&
            dist(i, j) < best) {
          best = dist(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    weight(bi, bj) = best;
    weight(bj, bi) = best;
  }

  // Dense Dijkstra from every node.
  Eigen::MatrixXd geo(n, n);
  std::vector<double> d(static_cast<std::size_t>(n));
  std::vector<char> done(static_cast<std::size_t>(n));
  for (Eigen::Index s = 0; s < n; ++s) {
    std::fill(d.begin(), d.end(), kInf);
    std::fill(done.begin(), done.end(), 0);
    d[static_cast<std::size_t>(s)] = 0.0;
    for (Eigen::Index it = 0; it < n; ++it) {
      Eigen::Index u = -1;
      for (Eigen::Index v = 0; v < n; ++v) {
        if (!done[static_cast<std::size_t>(v)] &&
            (u < 0 || d[static_cast<std::size_t>(v)] < d[static_cast<std::size_t>(u)])) {
          u = v;
        }
      }
      done[static_cast<std::size_t>(u)] = 1;
      for (Eigen::Index v = 0; v < n; ++v) {
        const double w = weight(u, v);
        if (std::isfinite(w) && d[static_cast<std::size_t>(u)] + w < d[static_cast<std::size_t>(v)]) {
          d[static_cast<std::size_t>(v)] = d[static_cast<std::size_t>(u)] + w;
        }
      }
    }
    for (Eigen::Index v = 0; v < n; ++v) geo(s, v) = d[static_cast<std::size_t>(v)];
  }
  model.geodesic_ = 0.5 * (geo + geo.transpose());
  model.geodesic_.diagonal().setZero();

  // Classical MDS on the geodesic distances.
  const Eigen::MatrixXd sq = model.geodesic_.cwiseProduct(model.geodesic_);
  model.mean_sq_geodesic_ = sq.colwise().mean().transpose();
  const double grand = sq.mean();
  Eigen::MatrixXd gram(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      gram(i, j) = -0.5 * (sq(i, j) - model.mean_sq_geodesic_(i) -
                           model.mean_sq_geodesic_(j) + grand);
    }
  }
  const auto eig = jacobi_eigen(gram);
  model.vectors_ = eig.vectors.leftCols(n_components);
  model.values_ = eig.values.head(n_components);
  const double top = std::max(eig.values(0), 0.0);
  for (Eigen::Index c = 0; c < n_components; ++c) {
    if (!(model.values_(c) > 1e-12 * top) || top <= 0.0) model.values_(c) = 0.0;
  }
  model.embedding_.resize(n, n_components);
  for (Eigen::Index c = 0; c < n_components; ++c) {
    model.embedding_.col(c) = model.vectors_.col(c) * std::sqrt(model.values_(c));
  }
  return model;
}

FeatureMatrix IsomapModel::transform(const FeatureMatrix& x) const {
  const Eigen::Index n = train_.rows();
  const Eigen::Index m = values_.size();
  const Eigen::MatrixXd dist = squared_distances(x, train_).cwiseSqrt();
  FeatureMatrix out = FeatureMatrix::Zero(x.rows(), m);
  Eigen::VectorXd delta(n);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto hops = nearest(dist.row(r), static_cast<std::size_t>(n_neighbors_));
    for (Eigen::Index j = 0; j < n; ++j) {
      double g = std::numeric_limits<double>::infinity();
      for (auto h : hops) g = std::min(g, dist(r, h) + geodesic_(h, j));
      delta(j) = g * g;
    }
    for (Eigen::Index c = 0; c < m; ++c) {
      if (values_(c) <= 0.0) continue;
      out(r, c) = vectors_.col(c).dot(mean_sq_geodesic_ - delta) /
                  (2.0 * std::sqrt(values_(c)));
    }
  }
  require_finite(out, "ISOMAP");
  return out;
}

FeatureMatrix isomap_fit_transform(const FeatureMatrix& train,
                                   const FeatureMatrix& apply, int n_neighbors,
                                   int n_components) {
  return IsomapModel::fit(train, n_neighbors, n_components).transform(apply);
}

Standardizer Standardizer::fit(const FeatureMatrix& train) {
  Standardizer s;
  s.mean_ = train.colwise().mean();
  s.scale_.resize(train.cols());
  for (Eigen::Index c = 0; c < train.cols(); ++c) {
    const double var = (train.col(c).array() - s.mean_(c)).square().mean();
    s.scale_(c) = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return s;
}

FeatureMatrix Standardizer::transform(const FeatureMatrix& x) const {
  return ((x.rowwise() - mean_).array().rowwise() / scale_.array()).matrix();
}

Eigen::MatrixXd random_forest(const FeatureMatrix& train_x,
                              std::span<const int> train_y, int num_classes,
                              const FeatureMatrix& apply_x,
                              std::size_t n_estimators, double max_features,
                              std::uint64_t seed, bool bootstrap) {
  ForestOptions options;
  options.n_estimators = n_estimators;
  options.max_features_fraction = max_features;
  options.bootstrap = bootstrap;
  RandomForestClassifier forest(options, seed);
  forest.fit(train_x, train_y, num_classes);
  return forest.predict_proba(apply_x);
}

Eigen::MatrixXd KernelRidgeClassifier::kernel(const FeatureMatrix& a,
                                              const FeatureMatrix& b) const {
  return (-gamma_ * squared_distances(a, b).array()).exp().matrix();
}

void KernelRidgeClassifier::fit(const FeatureMatrix& x, std::span<const int> y,
                                int num_classes) {
  if (x.rows() == 0) throw ComponentError("kernel classifier: empty training set");
  if (!(c_ > 0.0) || !(gamma_ > 0.0)) {
    throw ComponentError("kernel classifier: C and gamma must be positive");
  }
  standardizer_ = Standardizer::fit(x);
  train_ = standardizer_.transform(x);
  const Eigen::Index n = train_.rows();
  Eigen::MatrixXd targets = Eigen::MatrixXd::Constant(n, num_classes, -1.0);
  for (Eigen::Index i = 0; i < n; ++i) targets(i, y[static_cast<std::size_t>(i)]) = 1.0;
  Eigen::MatrixXd system = kernel(train_, train_);
  system.diagonal().array() += 1.0 / c_;
  Eigen::LLT<Eigen::MatrixXd> llt(system);
  if (llt.info() != Eigen::Success) {
    throw ComponentError("kernel classifier: system not positive definite");
  }
  dual_ = llt.solve(targets);
}

Eigen::MatrixXd KernelRidgeClassifier::predict_proba(const FeatureMatrix& x) const {
  const Eigen::MatrixXd margins = kernel(standardizer_.transform(x), train_) * dual_;
  Eigen::MatrixXd probs(margins.rows(), margins.cols());
  for (Eigen::Index r = 0; r < margins.rows(); ++r) {
    const double top = margins.row(r).maxCoeff();
    probs.row(r) = (margins.row(r).array() - top).exp().matrix();
    probs.row(r) /= probs.row(r).sum();
  }
  require_finite(probs, "kernel classifier");
  return probs;
}

Eigen::MatrixXd kernel_classifier(const FeatureMatrix& train_x,
                                  std::span<const int> train_y, int num_classes,
                                  const FeatureMatrix& apply_x, double c,
                                  double gamma) {
  KernelRidgeClassifier model(c, gamma);
  model.fit(train_x, train_y, num_classes);
  return model.predict_proba(apply_x);
}

void NearestNeighborClassifier::fit(const FeatureMatrix& x, std::span<const int> y,
                                    int num_classes) {
  if (x.rows() == 0) throw ComponentError("1-NN: empty training set");
  train_ = x;
  labels_.assign(y.begin(), y.end());
  num_classes_ = num_classes;
}

Eigen::MatrixXd NearestNeighborClassifier::predict_proba(const FeatureMatrix& x) const {
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(x.rows(), num_classes_);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < train_.rows(); ++i) {
      const double d = (train_.row(i) - x.row(r)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    probs(r, labels_[static_cast<std::size_t>(best)]) = 1.0;
  }
  return probs;
}

// --- Registry ----------------------------------------------------------------

namespace {

std::string param(const ParameterValues& params, const std::string& name,
                  std::string_view algorithm) {
  auto it = params.find(name);
  if (it == params.end()) {
    throw ComponentError(std::string(algorithm) + ": missing hyperparameter '" +
                         name + "'");
  }
  return it->second;
}

int int_param(const ParameterValues& p, const std::string& name, std::string_view alg) {
  const auto text = param(p, name, alg);
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ComponentError(std::string(alg) + ": '" + name + "' is not an integer");
}

double real_param(const ParameterValues& p, const std::string& name, std::string_view alg) {
  const auto text = param(p, name, alg);
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ComponentError(std::string(alg) + ": '" + name + "' is not a number");
}

bool bool_param(const ParameterValues& p, const std::string& name, std::string_view alg) {
  const auto text = param(p, name, alg);
  if (text == "true") return true;
  if (text == "false") return false;
  throw ComponentError(std::string(alg) + ": '" + name + "' is not a boolean");
}

class HaralickExtractor final : public Extractor {
 public:
  explicit HaralickExtractor(int distance) : distance_(distance) {}
  FeatureMatrix extract(std::span<const Image> images) const override {
    return haralick_features(images, distance_);
  }

 private:
  int distance_;
};

class ProjectionExtractor final : public Extractor {
 public:
  FeatureMatrix extract(std::span<const Image> images) const override {
    return frozen_projection_features(images);
  }
};

class DownsampleExtractor final : public Extractor {
 public:
  FeatureMatrix extract(std::span<const Image> images) const override {
    return downsample_features(images, 8);
  }
};

class PcaTransformer final : public Transformer {
 public:
  explicit PcaTransformer(bool whitening) : whitening_(whitening) {}
  void fit(const FeatureMatrix& train) override {
    model_ = PcaModel::fit(train, whitening_);
  }
  FeatureMatrix transform(const FeatureMatrix& x) const override {
    if (!model_) throw ComponentError("PCA used before fit");
    return model_->transform(x);
  }

 private:
  bool whitening_;
  std::optional<PcaModel> model_;
};

class IsomapTransformer final : public Transformer {
 public:
  IsomapTransformer(int neighbors, int components)
      : neighbors_(neighbors), components_(components) {}
  void fit(const FeatureMatrix& train) override {
    model_ = IsomapModel::fit(train, neighbors_, components_);
  }
  FeatureMatrix transform(const FeatureMatrix& x) const override {
    if (!model_) throw ComponentError("ISOMAP used before fit");
    return model_->transform(x);
  }

 private:
  int neighbors_;
  int components_;
  std::optional<IsomapModel> model_;
};

class IdentityTransformer final : public Transformer {
 public:
  void fit(const FeatureMatrix&) override { fitted_ = true; }
  FeatureMatrix transform(const FeatureMatrix& x) const override {
    if (!fitted_) throw ComponentError("identity used before fit");
    return x;
  }

 private:
  bool fitted_ = false;
};

class ForestLearner final : public Learner {
 public:
  ForestLearner(std::size_t trees, double max_features, std::uint64_t seed)
      : options_{trees, max_features, true, 1}, seed_(seed) {}
  void fit(const FeatureMatrix& x, std::span<const int> y, int num_classes) override {
    if (x.rows() == 0) throw ComponentError("random forest: empty training set");
    forest_.emplace(options_, seed_);
    forest_->fit(x, y, num_classes);
  }
  Eigen::MatrixXd predict_proba(const FeatureMatrix& x) const override {
    if (!forest_) throw ComponentError("random forest used before fit");
    return forest_->predict_proba(x);
  }

 private:
  ForestOptions options_;
  std::uint64_t seed_;
  std::optional<RandomForestClassifier> forest_;
};

class KernelLearner final : public Learner {
 public:
  KernelLearner(double c, double gamma) : model_(c, gamma) {}
  void fit(const FeatureMatrix& x, std::span<const int> y, int num_classes) override {
    model_.fit(x, y, num_classes);
    fitted_ = true;
  }
  Eigen::MatrixXd predict_proba(const FeatureMatrix& x) const override {
    if (!fitted_) throw ComponentError("kernel classifier used before fit");
    return model_.predict_proba(x);
  }

 private:
  KernelRidgeClassifier model_;
  bool fitted_ = false;
};

class NearestNeighborLearner final : public Learner {
 public:
  void fit(const FeatureMatrix& x, std::span<const int> y, int num_classes) override {
    model_.fit(x, y, num_classes);
    fitted_ = true;
  }
  Eigen::MatrixXd predict_proba(const FeatureMatrix& x) const override {
    if (!fitted_) throw ComponentError("1-NN used before fit");
    return model_.predict_proba(x);
  }

 private:
  NearestNeighborClassifier model_;
  bool fitted_ = false;
};

struct RegistryEntry {
  std::string_view id;
  ComponentRole role;
};

constexpr std::array<RegistryEntry, 9> kRegistry = {{
    {"haralick", ComponentRole::kFeatureExtraction},
    {"cnn_frozen", ComponentRole::kFeatureExtraction},
    {"downsample8", ComponentRole::kFeatureExtraction},
    {"pca", ComponentRole::kFeatureTransformation},
    {"isomap", ComponentRole::kFeatureTransformation},
    {"identity", ComponentRole::kFeatureTransformation},
    {"rf", ComponentRole::kLearning},
    {"ksvm", ComponentRole::kLearning},
    {"nn1", ComponentRole::kLearning},
}};

}  // namespace

std::string_view to_string(ComponentRole role) {
  switch (role) {
    case ComponentRole::kFeatureExtraction:
      return "feature-extraction";
    case ComponentRole::kFeatureTransformation:
      return "feature-transformation";
    case ComponentRole::kLearning:
      return "learning";
  }
  return "learning";
}

ComponentRole parse_role(std::string_view text) {
  if (text == "feature-extraction" || text == "feature_extraction") {
    return ComponentRole::kFeatureExtraction;
  }
  if (text == "feature-transformation" || text == "feature_transformation") {
    return ComponentRole::kFeatureTransformation;
  }
  if (text == "learning") return ComponentRole::kLearning;
  throw ComponentError("unknown component role '" + std::string(text) + "'");
}

bool is_known_component(std::string_view algorithm_id) {
  return std::any_of(kRegistry.begin(), kRegistry.end(),
                     [&](const RegistryEntry& e) { return e.id == algorithm_id; });
}

ComponentRole component_role(std::string_view algorithm_id) {
  for (const auto& e : kRegistry) {
    if (e.id == algorithm_id) return e.role;
  }
  throw ComponentError("no component implementation for '" +
                       std::string(algorithm_id) + "'");
}

ComponentInstance make_component(std::string_view id, const ParameterValues& p,
                                 std::uint64_t seed) {
  if (id == "haralick") {
    return std::make_unique<HaralickExtractor>(int_param(p, "distance", id));
  }
  if (id == "cnn_frozen") return std::make_unique<ProjectionExtractor>();
  if (id == "downsample8") return std::make_unique<DownsampleExtractor>();
  if (id == "pca") return std::make_unique<PcaTransformer>(bool_param(p, "whitening", id));
  if (id == "isomap") {
    return std::make_unique<IsomapTransformer>(int_param(p, "n_neighbors", id),
                                               int_param(p, "n_components", id));
  }
  if (id == "identity") return std::make_unique<IdentityTransformer>();
  if (id == "rf") {
    const int trees = int_param(p, "n_estimators", id);
    if (trees < 1) throw ComponentError("rf: n_estimators must be >= 1");
    return std::make_unique<ForestLearner>(static_cast<std::size_t>(trees),
                                           real_param(p, "max_features", id), seed);
  }
  if (id == "ksvm") {
    return std::make_unique<KernelLearner>(real_param(p, "C", id),
                                           real_param(p, "gamma", id));
  }
  if (id == "nn1") return std::make_unique<NearestNeighborLearner>();
  throw ComponentError("no component implementation for '" + std::string(id) + "'");
}

std::string_view naive_component_id(ComponentRole role) {
  switch (role) {
    case ComponentRole::kFeatureExtraction:
      return "downsample8";
    case ComponentRole::kFeatureTransformation:
      return "identity";
    case ComponentRole::kLearning:
      return "nn1";
  }
  return "nn1";
}

ComponentInstance naive_component(ComponentRole role) {
  return make_component(naive_component_id(role), {}, 0);
}

}  // namespace pipegrader
