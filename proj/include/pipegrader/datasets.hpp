#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace pipegrader {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grayscale image, row-major, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h * w), fill) {}

  double& at(int r, int c) {
    return pixels[static_cast<std::size_t>(r * width + c)];
  }
  double at(int r, int c) const {
    return pixels[static_cast<std::size_t>(r * width + c)];
  }
};

struct ImageDataset {
  std::vector<Image> images;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::uint64_t seed = 0;

  std::size_t size() const { return images.size(); }
  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::vector<std::size_t> class_counts() const;
  ImageDataset subset(std::span<const std::size_t> indices) const;
  std::string fingerprint() const;
  /// Throws DatasetError if the dataset invariants do not hold.
  void validate() const;
};

/// Presets: breast-like, brain-like, matsc1-like, matsc2-like,
/// balanced-small. Images are 32x32.
ImageDataset generate_texture_dataset(std::string_view preset,
                                      std::uint64_t seed);
std::vector<std::string> texture_presets();

/// Stratified split; per class round(fraction * n) samples go to the first
/// (training) part, clamped so both parts keep at least one sample.
std::pair<ImageDataset, ImageDataset> split_train_test(const ImageDataset& ds,
                                                       double fraction = 0.8,
                                                       std::uint64_t seed = 0);

struct FoldPlan {
  int k = 0;
  std::vector<int> fold_assignment;
  std::uint64_t seed = 0;

  std::vector<std::size_t> train_indices(int fold) const;
  std::vector<std::size_t> valid_indices(int fold) const;
  std::string fingerprint() const;
};

FoldPlan make_folds(std::span<const int> labels, int k, std::uint64_t seed);
FoldPlan make_folds(const ImageDataset& ds, int k, std::uint64_t seed);

/// Mean negative log-likelihood of the true class after clipping each
/// probability to [1e-15, 1 - 1e-15] and renormalising the row.
double cross_entropy(const Eigen::MatrixXd& probs, std::span<const int> labels);

/// Directory of 8-bit grayscale PNGs plus `manifest.csv` (filename,label).
void export_dataset(const ImageDataset& ds, const std::string& directory);
ImageDataset import_dataset(const std::string& directory);

}  // namespace pipegrader
