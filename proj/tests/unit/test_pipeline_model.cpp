#include <doctest.h>

#include <set>

#include "pipegrader/pipeline_model.hpp"
#include "pipegrader/random.hpp"

using namespace pipegrader;

TEST_SUITE("pipeline_model") {
  TEST_CASE("default image pipeline has the expected topology") {
    const auto spec = default_image_pipeline();
    REQUIRE(spec.num_steps() == 3);
    CHECK(spec.steps[0].pipeline_ids() == std::vector<std::string>{"haralick", "cnn_frozen"});
    CHECK(spec.steps[1].pipeline_ids() == std::vector<std::string>{"pca", "isomap"});
    CHECK(spec.steps[2].pipeline_ids() == std::vector<std::string>{"rf", "ksvm"});
    CHECK(spec.algorithm(0, "haralick").configuration_count() == 4);
    CHECK(spec.algorithm(0, "cnn_frozen").configuration_count() == 1);
    CHECK(spec.algorithm(1, "pca").configuration_count() == 2);
    CHECK(spec.algorithm(1, "isomap").configuration_count() == 15);
    CHECK(spec.algorithm(2, "rf").configuration_count() == 15);
    CHECK(spec.algorithm(2, "ksvm").configuration_count() == 15);
    CHECK(spec.has_naive_everywhere());
    CHECK(spec.folds == 5);
  }

  TEST_CASE("domain values keep document order and exact decimal text") {
    const auto spec = default_image_pipeline();
    const auto* c = spec.algorithm(2, "ksvm").find_hyperparameter("C");
    REQUIRE(c != nullptr);
    CHECK(c->values == std::vector<std::string>{"0.1", "25.075", "50.05", "75.025", "100.0"});
    const auto* w = spec.algorithm(1, "pca").find_hyperparameter("whitening");
    CHECK(w->values == std::vector<std::string>{"true", "false"});
  }

  TEST_CASE("degenerate single-step pipeline has one configuration") {
    const auto spec = load_spec(R"({"metric": "cross_entropy", "folds": 2, "steps": [
      {"name": "only", "algorithms": [{"id": "a", "naive": false, "hyperparameters": []}]}]})");
    CHECK(grid_size(spec, Restriction::cash(spec)) == 1);
    CHECK(enumerate_grid(spec).size() == 1);
    CHECK(enumerate_paths(spec, false).size() == 1);
  }

  TEST_CASE("schema violations are rejected") {
    CHECK_THROWS_AS(load_spec(R"({"metric": "cross_entropy", "folds": 5, "steps": [
      {"name": "s", "algorithms": [
        {"id": "a", "naive": false, "hyperparameters": []},
        {"id": "n", "naive": true, "hyperparameters": [
          {"name": "h", "kind": "integer", "values": [1]}]}]}]})"),
                    SpecError);
    CHECK_THROWS_AS(load_spec(R"({"metric": "cross_entropy", "folds": 5, "extra": 1,
      "steps": [{"name": "s", "algorithms": [{"id": "a", "naive": false, "hyperparameters": []}]}]})"),
                    SpecError);
    CHECK_THROWS_AS(load_spec(R"({"metric": "cross_entropy", "folds": 5, "steps": [
      {"name": "s", "algorithms": [
        {"id": "a", "naive": false, "hyperparameters": []},
        {"id": "a", "naive": false, "hyperparameters": []}]}]})"),
                    SpecError);
    CHECK_THROWS_AS(load_spec(R"({"metric": "cross_entropy", "folds": 5, "steps": [
      {"name": "s", "algorithms": [{"id": "a", "naive": false, "hyperparameters": []}]},
      {"name": "t", "algorithms": [{"id": "a", "naive": false, "hyperparameters": []}]}]})"),
                    SpecError);
    CHECK_THROWS_AS(load_spec(R"({"metric": "cross_entropy", "folds": 5, "steps": [
      {"name": "s", "algorithms": []}]})"),
                    SpecError);
    CHECK_THROWS_AS(load_spec(R"({"metric": "cross_entropy", "folds": 5, "steps": [
      {"name": "s", "algorithms": [{"id": "a", "naive": false, "hyperparameters": [
        {"name": "h", "kind": "integer", "values": []}]}]}]})"),
                    SpecError);
    CHECK_THROWS_AS(load_spec(R"({"metric": "cross_entropy", "folds": 5, "steps": [
      {"name": "s", "algorithms": [{"id": "a", "naive": false, "hyperparameters": [
        {"name": "h", "kind": "integer", "values": [1, 1]}]}]}]})"),
                    SpecError);
    CHECK_THROWS_AS(load_spec(R"({"metric": "cross_entropy", "folds": 1, "steps": [
      {"name": "s", "algorithms": [{"id": "a", "naive": false, "hyperparameters": []}]}]})"),
                    SpecError);
    CHECK_THROWS_AS(load_spec("not json"), SpecError);
  }

  TEST_CASE("path enumeration") {
    const auto spec = default_image_pipeline();
    const auto without = enumerate_paths(spec, false);
    CHECK(without.size() == 8);
    CHECK(enumerate_paths(spec, true).size() == 27);
    std::set<std::string> naive = {"downsample8", "identity", "nn1"};
    for (const auto& p : without) {
      for (const auto& id : p) CHECK(naive.count(id) == 0);
    }
    CHECK(without.front() == PathId{"haralick", "pca", "rf"});
  }

  TEST_CASE("grid sizes") {
    const auto spec = default_image_pipeline();
    CHECK(enumerate_grid(spec, Restriction::on_path({"haralick", "isomap", "rf"})).size() == 900);
    CHECK(enumerate_grid(spec).size() == 2550);
    CHECK(enumerate_grid(spec, Restriction::on_path({"cnn_frozen", "pca", "rf"})).size() == 30);
    CHECK(grid_size(spec, Restriction::everything(spec)) == 6 * 18 * 31);
    CHECK(enumerate_grid(spec, Restriction::everything(spec)).size() == 3348);
  }

  TEST_CASE("grid size matches the product-of-sums formula on random specs") {
    Rng rng(7);
    for (int trial = 0; trial < 25; ++trial) {
      std::string doc = R"({"metric": "cross_entropy", "folds": 3, "steps": [)";
      std::size_t expected = 1;
      const std::size_t steps = 1 + rng.index(3);
      for (std::size_t s = 0; s < steps; ++s) {
        if (s) doc += ",";
        doc += R"({"name": "s)" + std::to_string(s) + R"(", "algorithms": [)";
        std::size_t step_sum = 0;
        const std::size_t algs = 1 + rng.index(3);
        for (std::size_t a = 0; a < algs; ++a) {
          if (a) doc += ",";
          doc += R"({"id": "a)" + std::to_string(s) + "_" + std::to_string(a) + R"(", "naive": false, "hyperparameters": [)";
          std::size_t product = 1;
          const std::size_t hps = rng.index(3);
          for (std::size_t h = 0; h < hps; ++h) {
            if (h) doc += ",";
            const std::size_t n = 1 + rng.index(4);
            product *= n;
            doc += R"({"name": "h)" + std::to_string(h) + R"(", "kind": "integer", "values": [)";
            for (std::size_t v = 0; v < n; ++v) doc += (v ? "," : "") + std::to_string(v);
            doc += "]}";
          }
          doc += "]}";
          step_sum += product;
        }
        doc += "]}";
        expected *= step_sum;
      }
      doc += "]}";
      const auto spec = load_spec(doc);
      const auto grid = enumerate_grid(spec);
      CHECK(grid.size() == expected);
      std::set<std::string> keys;
      for (const auto& c : grid) keys.insert(canonical_key(c));
      CHECK(keys.size() == expected);
    }
  }

  TEST_CASE("restricted grid size is the product of path configuration counts") {
    const auto spec = default_image_pipeline();
    for (const auto& path : enumerate_paths(spec, true)) {
      std::size_t expected = 1;
      for (std::size_t s = 0; s < path.size(); ++s) {
        expected *= spec.algorithm(s, path[s]).configuration_count();
      }
      CHECK(grid_size(spec, Restriction::on_path(path)) == expected);
    }
  }

  TEST_CASE("canonical keys") {
    const auto spec = default_image_pipeline();
    std::set<std::string> keys;
    for (const auto& c : enumerate_grid(spec, Restriction::everything(spec))) {
      spec.validate(c);
      keys.insert(canonical_key(c));
    }
    CHECK(keys.size() == 3348);

    Configuration a;
    a.path = {"haralick", "isomap", "rf"};
    a.assignments = {{"haralick.distance", "1"}, {"isomap.n_neighbors", "3"},
                     {"isomap.n_components", "2"}, {"rf.n_estimators", "8"},
                     {"rf.max_features", "0.3"}};
    Configuration b;
    b.path = a.path;
    for (auto it = a.assignments.rbegin(); it != a.assignments.rend(); ++it) {
      b.assignments.insert(*it);
    }
    CHECK(canonical_key(a) == canonical_key(b));
    b.assignments["rf.max_features"] = "0.5";
    CHECK(canonical_key(a) != canonical_key(b));
  }

  TEST_CASE("validation rejects inactive or missing assignments") {
    const auto spec = default_image_pipeline();
    Configuration c;
    c.path = {"cnn_frozen", "pca", "rf"};
    c.assignments = {{"pca.whitening", "true"}, {"rf.n_estimators", "8"},
                     {"rf.max_features", "0.3"}};
    CHECK_NOTHROW(spec.validate(c));
    auto extra = c;
    extra.assignments["haralick.distance"] = "1";
    CHECK_THROWS_AS(spec.validate(extra), SpecError);
    auto missing = c;
    missing.assignments.erase("pca.whitening");
    CHECK_THROWS_AS(spec.validate(missing), SpecError);
    auto bad = c;
    bad.assignments["pca.whitening"] = "maybe";
    CHECK_THROWS_AS(spec.validate(bad), SpecError);
  }

  TEST_CASE("restrictions") {
    const auto spec = default_image_pipeline();
    CHECK_THROWS_AS(enumerate_grid(spec, Restriction::on_path({"nope", "pca", "rf"})), SpecError);
    Restriction fixed = Restriction::on_path({"haralick", "isomap", "rf"});
    fixed.fixed["isomap.n_neighbors"] = "5";
    const auto grid = enumerate_grid(spec, fixed);
    CHECK(grid.size() == 180);
    for (const auto& c : grid) CHECK(fixed.admits(spec, c));
    fixed.fixed["isomap.n_neighbors"] = "99";
    CHECK_THROWS_AS(enumerate_grid(spec, fixed), SpecError);

    const auto cash = Restriction::cash(spec);
    for (const auto& c : enumerate_grid(spec, Restriction::everything(spec))) {
      const bool has_naive = c.path[0] == "downsample8" || c.path[1] == "identity" ||
                             c.path[2] == "nn1";
      CHECK(cash.admits(spec, c) == !has_naive);
    }
  }

  TEST_CASE("prefix keys share extraction across downstream choices") {
    const auto spec = default_image_pipeline();
    std::set<std::string> first;
    for (const auto& c : enumerate_grid(spec)) first.insert(prefix_key(c, 1, spec));
    CHECK(first.size() == 5);
  }

  TEST_CASE("default analysis path has the most hyperparameters") {
    const auto spec = default_image_pipeline();
    CHECK(default_analysis_path(spec) == PathId{"haralick", "isomap", "rf"});
  }

  TEST_CASE("fingerprint is stable and content-sensitive") {
    const auto a = default_image_pipeline();
    const auto b = load_spec(a.to_json());
    CHECK(a.fingerprint() == b.fingerprint());
    auto c = a;
    c.folds = 4;
    CHECK(c.fingerprint() != a.fingerprint());
  }
}
