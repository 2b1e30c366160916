#include "pipegrader/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <png.h>

#include "pipegrader/random.hpp"

namespace pipegrader {
namespace {

constexpr int kImageSize = 32;

struct Preset {
  std::string_view name;
  std::vector<std::string> class_names;
  std::vector<std::size_t> counts;
};

const std::vector<Preset>& presets() {
  static const std::vector<Preset> kPresets = {
      {"breast-like", {"benign", "in-situ", "invasive"}, {151, 93, 202}},
      {"brain-like", {"glioma", "healthy", "inflammation"}, {16, 210, 107}},
      {"matsc1-like", {"dendrites", "non-dendrites"}, {441, 132}},
      {"matsc2-like", {"transverse", "longitudinal"}, {393, 48}},
      {"balanced-small", {"class0", "class1", "class2"}, {40, 40, 40}},
  };
  return kPresets;
}

// Class c of K: a sinusoidal grating whose period is class-specific, with
// per-sample orientation, phase, small period jitter and additive pixel noise.
// Period is what the orientation-averaged GLCM statistics resolve; random
// orientation and phase make fixed pixel projections weak.
Image texture_image(int cls, Rng& rng) {
  const double base_period = 2.6 * std::pow(1.75, cls);
  const double period = base_period * rng.uniform(0.92, 1.08);
  const double theta = rng.uniform(0.0, std::numbers::pi);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double amplitude = rng.uniform(0.28, 0.36);
  const double freq = 2.0 * std::numbers::pi / period;
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  Image img(kImageSize, kImageSize);
  for (int r = 0; r < kImageSize; ++r) {
    for (int c = 0; c < kImageSize; ++c) {
      const double u = c * ct + r * st;
      double v = 0.5 + amplitude * std::sin(freq * u + phase) +
                 0.08 * rng.normal();
      img.at(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace

std::vector<std::size_t> ImageDataset::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (int label : labels) ++counts[static_cast<std::size_t>(label)];
  return counts;
}

ImageDataset ImageDataset::subset(std::span<const std::size_t> indices) const {
  ImageDataset out;
  out.class_names = class_names;
  out.seed = seed;
  out.images.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    out.images.push_back(images.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

std::string ImageDataset::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& name : class_names) h = fnv1a64(name + "\n", h);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    h = fnv1a64(std::to_string(labels[i]) + ":" + std::to_string(img.height) +
                    "x" + std::to_string(img.width) + ";",
                h);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(img.pixels.data()),
                                 img.pixels.size() * sizeof(double)),
                h);
  }
  return hex64(h);
}

void ImageDataset::validate() const {
  if (images.size() != labels.size()) {
    throw DatasetError("image and label counts differ");
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes()) {
      throw DatasetError("label out of range at sample " + std::to_string(i));
    }
    if (images[i].height != images.front().height ||
        images[i].width != images.front().width) {
      throw DatasetError("images differ in shape");
    }
  }
}

std::vector<std::string> texture_presets() {
  std::vector<std::string> names;
  for (const auto& p : presets()) names.emplace_back(p.name);
  return names;
}

ImageDataset generate_texture_dataset(std::string_view preset,
                                      std::uint64_t seed) {
  const auto it = std::find_if(presets().begin(), presets().end(),
                               [&](const Preset& p) { return p.name == preset; });
  if (it == presets().end()) {
    throw DatasetError("unknown dataset preset '" + std::string(preset) + "'");
  }
  ImageDataset ds;
  ds.class_names = it->class_names;
  ds.seed = seed;
  const int num_classes = static_cast<int>(it->counts.size());
  std::size_t sample = 0;
  for (int cls = 0; cls < num_classes; ++cls) {
    for (std::size_t n = 0; n < it->counts[static_cast<std::size_t>(cls)]; ++n) {
      Rng rng(mix_seed(seed, sample++));
      ds.images.push_back(texture_image(cls, rng));
      ds.labels.push_back(cls);
    }
  }
  return ds;
}

std::pair<ImageDataset, ImageDataset> split_train_test(const ImageDataset& ds,
                                                       double fraction,
                                                       std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw DatasetError("split fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> train, test;
  for (int cls = 0; cls < ds.num_classes(); ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] == cls) members.push_back(i);
    }
    if (members.size() < 2) {
      throw DatasetError("class '" + ds.class_names[static_cast<std::size_t>(cls)] +
                         "' has fewer than 2 samples");
    }
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(cls)));
    rng.shuffle(members);
    auto n_train = static_cast<std::size_t>(
        std::floor(fraction * static_cast<double>(members.size()) + 0.5));
    n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
    train.insert(train.end(), members.begin(), members.begin() + n_train);
    test.insert(test.end(), members.begin() + n_train, members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {ds.subset(train), ds.subset(test)};
}

std::vector<std::size_t> FoldPlan::train_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_assignment.size(); ++i) {
    if (fold_assignment[i] != fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::valid_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_assignment.size(); ++i) {
    if (fold_assignment[i] == fold) out.push_back(i);
  }
  return out;
}

std::string FoldPlan::fingerprint() const {
  std::string text = "k=" + std::to_string(k) + ";";
  for (int f : fold_assignment) text += std::to_string(f) + ",";
  return hex64(fnv1a64(text));
}

// Each class is shuffled and dealt round-robin; the dealing position carries
// over between classes so overall fold sizes also stay balanced.
FoldPlan make_folds(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw DatasetError("k must be at least 2");
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.fold_assignment.assign(labels.size(), -1);
  const int num_classes =
      labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::size_t offset = 0;
  for (int cls = 0; cls < num_classes; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) members.push_back(i);
    }
    if (members.empty()) continue;
    if (members.size() < static_cast<std::size_t>(k)) {
      throw DatasetError("class " + std::to_string(cls) + " has " +
                         std::to_string(members.size()) +
                         " samples, fewer than k=" + std::to_string(k));
    }
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(cls)));
    rng.shuffle(members);
    for (std::size_t j = 0; j < members.size(); ++j) {
      plan.fold_assignment[members[j]] =
          static_cast<int>((offset + j) % static_cast<std::size_t>(k));
    }
    offset += members.size();
  }
  return plan;
}

FoldPlan make_folds(const ImageDataset& ds, int k, std::uint64_t seed) {
  return make_folds(std::span<const int>(ds.labels), k, seed);
}

double cross_entropy(const Eigen::MatrixXd& probs, std::span<const int> labels) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size() || probs.rows() == 0) {
    throw std::invalid_argument("cross_entropy: shape mismatch");
  }
  constexpr double kClip = 1e-15;
  double total = 0.0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= probs.cols()) {
      throw std::invalid_argument("cross_entropy: label out of range");
    }
    if (std::abs(probs.row(r).sum() - 1.0) > 1e-6) {
      throw std::invalid_argument("cross_entropy: row does not sum to 1");
    }
    double row_sum = 0.0;
    double p_true = 0.0;
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      const double p = std::clamp(probs(r, c), kClip, 1.0 - kClip);
      row_sum += p;
      if (c == label) p_true = p;
    }
    total -= std::log(p_true / row_sum);
  }
  return total / static_cast<double>(probs.rows());
}

void export_dataset(const ImageDataset& ds, const std::string& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  std::ofstream manifest(fs::path(directory) / "manifest.csv");
  manifest << "filename,label\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& img = ds.images[i];
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05zu.png", i);
    std::vector<unsigned char> bytes(img.pixels.size());
    for (std::size_t p = 0; p < bytes.size(); ++p) {
      bytes[p] = static_cast<unsigned char>(
          std::lround(std::clamp(img.pixels[p], 0.0, 1.0) * 255.0));
    }
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = PNG_FORMAT_GRAY;
    const auto path = (fs::path(directory) / name).string();
    if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0,
                                 nullptr)) {
      throw DatasetError("failed to write " + path + ": " + png.message);
    }
    manifest << name << ','
             << ds.class_names[static_cast<std::size_t>(ds.labels[i])] << '\n';
  }
}

ImageDataset import_dataset(const std::string& directory) {
  namespace fs = std::filesystem;
  std::ifstream manifest(fs::path(directory) / "manifest.csv");
  if (!manifest) {
    throw DatasetError("no manifest.csv in " + directory);
  }
  ImageDataset ds;
  std::map<std::string, int> class_index;
  std::string line;
  std::getline(manifest, line);  // header
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw DatasetError("malformed manifest line: " + line);
    }
    const std::string file = line.substr(0, comma);
    std::string label = line.substr(comma + 1);
    if (!label.empty() && label.back() == '\r') label.pop_back();
    auto [it, inserted] =
        class_index.emplace(label, static_cast<int>(ds.class_names.size()));
    if (inserted) ds.class_names.push_back(label);

    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    const auto path = (fs::path(directory) / file).string();
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
      throw DatasetError("failed to read " + path + ": " + png.message);
    }
    png.format = PNG_FORMAT_GRAY;
    std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
      throw DatasetError("failed to decode " + path + ": " + png.message);
    }
    Image img(static_cast<int>(png.height), static_cast<int>(png.width));
    for (std::size_t p = 0; p < img.pixels.size(); ++p) {
      img.pixels[p] = bytes[p] / 255.0;
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(it->second);
  }
  ds.validate();
  return ds;
}

}  // namespace pipegrader
