#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "pipegrader/components.hpp"
#include "pipegrader/random.hpp"

using namespace pipegrader;

namespace {

Image checkerboard(int n) {
  Image img(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) img.at(r, c) = (r + c) % 2 ? 1.0 : 0.0;
  return img;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) r[order[i]] = static_cast<double>(i);
  return r;
}

double rank_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

/// Three Gaussian blobs in 2-D, `per` points each.
void blobs(int per, std::uint64_t seed, FeatureMatrix& x, std::vector<int>& y) {
  Rng rng(seed);
  const double centers[3][2] = {{0.0, 0.0}, {4.0, 0.0}, {0.0, 4.0}};
  x.resize(3 * per, 2);
  y.clear();
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < per; ++i) {
      const int row = c * per + i;
      x(row, 0) = centers[c][0] + 0.5 * rng.normal();
      x(row, 1) = centers[c][1] + 0.5 * rng.normal();
      y.push_back(c);
    }
  }
}

double accuracy(const Eigen::MatrixXd& probs, const std::vector<int>& y) {
  int hits = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index arg = 0;
    probs.row(i).maxCoeff(&arg);
    hits += static_cast<int>(arg) == y[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

}  // namespace

TEST_SUITE("components") {
  TEST_CASE("GLCM of a constant image") {
    const Image flat(8, 8, 0.4);
    const auto s = glcm_statistics(flat, 0, 1);
    CHECK(s.energy == doctest::Approx(1.0));
    CHECK(s.contrast == 0.0);
    CHECK(s.entropy == 0.0);
    CHECK(s.homogeneity == doctest::Approx(1.0));
    CHECK(std::isfinite(s.correlation));
  }

  TEST_CASE("GLCM of a checkerboard") {
    const auto board = checkerboard(8);
    CHECK(glcm_statistics(board, 0, 1).contrast == doctest::Approx(225.0));
    CHECK(glcm_statistics(board, -1, 1).contrast == doctest::Approx(0.0));
    const std::vector<Image> images = {board};
    const auto f = haralick_features(images, 1);
    REQUIRE(f.cols() == 6);
    CHECK(f(0, 0) == doctest::Approx(112.5));
    CHECK(f.allFinite());
  }

  TEST_CASE("Haralick rejects images smaller than the offset") {
    const std::vector<Image> images = {Image(3, 3, 0.5)};
    CHECK_NOTHROW(haralick_features(images, 2));
    CHECK_THROWS_AS(haralick_features(images, 3), ComponentError);
  }

  TEST_CASE("frozen projection") {
    const std::vector<Image> images = {Image(32, 32, 0.0), checkerboard(32)};
    const auto f = frozen_projection_features(images);
    CHECK(f.cols() == kProjectionWidth);
    CHECK(f.row(0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(f.allFinite());
    CHECK(frozen_projection_features(images) == f);
    const auto d = downsample_features(images, 8);
    CHECK(d.cols() == 64);
    CHECK(d(1, 0) == doctest::Approx(0.5));
  }

  TEST_CASE("PCA whitening and projection") {
    Rng rng(3);
    FeatureMatrix x(200, 3);
    for (int i = 0; i < 200; ++i) {
      const double a = rng.normal(), b = rng.normal();
      x(i, 0) = 3.0 * a + 1.0;
      x(i, 1) = a + 0.5 * b;
      x(i, 2) = -b + 2.0;
    }
    const auto white = pca_fit_transform(x, x, true);
    const Eigen::MatrixXd centered = white.rowwise() - white.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered / 199.0;
    CHECK((cov - Eigen::MatrixXd::Identity(cov.rows(), cov.cols())).cwiseAbs().maxCoeff() <
          1e-8);

    const auto plain = pca_fit_transform(x, x, false);
    const Eigen::MatrixXd pc = plain.rowwise() - plain.colwise().mean();
    Eigen::MatrixXd pcov = pc.transpose() * pc / 199.0;
    const Eigen::VectorXd diag = pcov.diagonal();
    pcov.diagonal().setZero();
    CHECK(pcov.cwiseAbs().maxCoeff() < 1e-8);
    for (Eigen::Index i = 0; i + 1 < diag.size(); ++i) CHECK(diag(i) >= diag(i + 1));

    Eigen::MatrixXd manual = plain;
    for (Eigen::Index c = 0; c < manual.cols(); ++c) manual.col(c) /= std::sqrt(diag(c));
    CHECK((manual - white).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("PCA on a line keeps one component; constant data fails") {
    FeatureMatrix line(10, 2);
    for (int i = 0; i < 10; ++i) line.row(i) << i, 2.0 * i;
    CHECK(PcaModel::fit(line, false).components().cols() == 1);
    const FeatureMatrix flat = FeatureMatrix::Constant(5, 3, 1.0);
    CHECK_THROWS_AS(PcaModel::fit(flat, true), ComponentError);
  }

  TEST_CASE("ISOMAP unrolls a circle") {
    const int n = 40;
    FeatureMatrix x(n, 2);
    std::vector<double> angle;
    for (int i = 0; i < n; ++i) {
      const double t = 1.5 * std::numbers::pi * i / (n - 1);
      x.row(i) << std::cos(t), std::sin(t);
      angle.push_back(t);
    }
    const auto model = IsomapModel::fit(x, 4, 1);
    const auto& g = model.geodesic();
    CHECK((g - g.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.diagonal().cwiseAbs().maxCoeff() == 0.0);
    CHECK_FALSE(model.stitched());
    std::vector<double> coord(model.embedding().col(0).data(),
                              model.embedding().col(0).data() + n);
    CHECK(std::abs(rank_correlation(coord, angle)) >= 0.99);
    CHECK((model.transform(x) - model.embedding()).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("ISOMAP stitches a disconnected graph") {
    FeatureMatrix x(8, 1);
    x << 0.0, 0.1, 0.2, 0.3, 10.0, 10.1, 10.2, 10.3;
    const auto model = IsomapModel::fit(x, 2, 1);
    CHECK(model.stitched());
    CHECK(model.geodesic().allFinite());
    CHECK(model.embedding().allFinite());
  }

  TEST_CASE("ISOMAP argument checks") {
    const FeatureMatrix x = FeatureMatrix::Random(5, 2);
    CHECK_THROWS_AS(IsomapModel::fit(x, 5, 2), ComponentError);
    CHECK_THROWS_AS(IsomapModel::fit(x, 2, 5), ComponentError);
  }

  TEST_CASE("random forest") {
    FeatureMatrix x;
    std::vector<int> y;
    blobs(20, 5, x, y);
    const auto probs = random_forest(x, y, 3, x, 30, 1.0, 17, false);
    CHECK(accuracy(probs, y) == 1.0);
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      CHECK(probs.row(i).sum() == doctest::Approx(1.0));
    }
    const auto boot_a = random_forest(x, y, 3, x, 20, 0.5, 99);
    const auto boot_b = random_forest(x, y, 3, x, 20, 0.5, 99);
    CHECK(boot_a == boot_b);
  }

  TEST_CASE("kernel classifier separates blobs across its grid") {
    FeatureMatrix x, test_x;
    std::vector<int> y, test_y;
    blobs(20, 8, x, y);
    blobs(20, 9, test_x, test_y);
    for (double c : {0.1, 25.075, 50.05, 75.025, 100.0}) {
      for (double gamma : {0.001, 0.25075, 0.5005, 0.75025, 1.0}) {
        const auto probs = kernel_classifier(x, y, 3, test_x, c, gamma);
        CHECK(probs.allFinite());
        CHECK(accuracy(probs, test_y) >= 0.95);
      }
    }
    KernelRidgeClassifier narrow(1.0, 0.1), wide(1.0, 1.0);
    narrow.fit(x, y, 3);
    wide.fit(x, y, 3);
    const auto kn = narrow.kernel(x.topRows(5), x.bottomRows(5));
    const auto kw = wide.kernel(x.topRows(5), x.bottomRows(5));
    CHECK((kn.array() >= kw.array()).all());
  }

  TEST_CASE("naive components") {
    const FeatureMatrix x = FeatureMatrix::Random(6, 3);
    auto identity = std::get<std::unique_ptr<Transformer>>(
        naive_component(ComponentRole::kFeatureTransformation));
    identity->fit(x);
    CHECK(identity->transform(x) == x);

    FeatureMatrix train(3, 1);
    train << 0.0, 1.0, 5.0;
    const std::vector<int> labels = {0, 1, 1};
    NearestNeighborClassifier nn;
    nn.fit(train, labels, 2);
    FeatureMatrix query(2, 1);
    query << 0.2, 4.0;
    const auto p = nn.predict_proba(query);
    CHECK(p(0, 0) == 1.0);
    CHECK(p(1, 1) == 1.0);
    CHECK(naive_component_id(ComponentRole::kLearning) == "nn1");
  }

  TEST_CASE("registry") {
    CHECK(is_known_component("haralick"));
    CHECK_FALSE(is_known_component("vgg"));
    CHECK(component_role("isomap") == ComponentRole::kFeatureTransformation);
    CHECK(parse_role("learning") == ComponentRole::kLearning);
    CHECK_THROWS_AS(make_component("vgg", {}, 0), ComponentError);
    CHECK_THROWS_AS(make_component("rf", {{"n_estimators", "ten"}, {"max_features", "0.5"}}, 0),
                    ComponentError);
    CHECK_THROWS_AS(make_component("rf", {{"n_estimators", "8"}}, 0), ComponentError);
    auto rf = make_component("rf", {{"n_estimators", "8"}, {"max_features", "0.5"}}, 1);
    CHECK(std::holds_alternative<std::unique_ptr<Learner>>(rf));
  }

  TEST_CASE("degenerate inputs never produce NaN") {
    const FeatureMatrix flat = FeatureMatrix::Constant(10, 4, 2.0);
    const std::vector<int> y = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    const auto rf = random_forest(flat, y, 2, flat, 8, 0.5, 0);
    CHECK(rf.allFinite());
    const auto k = kernel_classifier(flat, y, 2, flat, 1.0, 0.5);
    CHECK(k.allFinite());
    const auto st = Standardizer::fit(flat).transform(flat);
    CHECK(st.allFinite());
    const std::vector<Image> blank = {Image(32, 32, 0.0), Image(32, 32, 1.0)};
    CHECK(haralick_features(blank, 1).allFinite());
  }
}

TEST_SUITE("forest") {
  TEST_CASE("regressor variance vanishes on constant targets") {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(30, 3);
    const std::vector<double> y(30, 0.7);
    RandomForestRegressor forest({10, 1.0, true, 1}, 4);
    forest.fit(x, y);
    const auto pred = forest.predict(x);
    CHECK(pred.variance.cwiseAbs().maxCoeff() <= 1e-24);
    CHECK((pred.mean.array() - 0.7).abs().maxCoeff() < 1e-12);
  }

  TEST_CASE("regressor fits a step function") {
    Eigen::MatrixXd x(20, 1);
    std::vector<double> y;
    for (int i = 0; i < 20; ++i) {
      x(i, 0) = i;
      y.push_back(i < 10 ? 0.0 : 1.0);
    }
    RandomForestRegressor forest({5, 1.0, false, 1}, 0);
    forest.fit(x, y);
    const auto pred = forest.predict(x);
    for (int i = 0; i < 20; ++i) CHECK(pred.mean(i) == doctest::Approx(y[i]));
  }

  TEST_CASE("max features resolution") {
    CHECK(resolve_max_features(0.3, 6) == 2);
    CHECK(resolve_max_features(0.5, 6) == 3);
    CHECK(resolve_max_features(0.7, 6) == 5);
    CHECK(resolve_max_features(0.01, 6) == 1);
    CHECK(resolve_max_features(1.0, 6) == 6);
  }
}
