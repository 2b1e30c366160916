#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "pipegrader/attribution.hpp"
#include "pipegrader/random.hpp"

using namespace pipegrader;
using pipegrader::testing::domain_index;
using pipegrader::testing::make_table;

namespace {

const PathId kHir = {"haralick", "isomap", "rf"};

/// Runs a full grid over `restriction` and returns the ledger.
TrialLedger grid_ledger(const PipelineSpec& spec, const Restriction& restriction,
                        const std::function<double(const Configuration&)>& loss) {
  const auto table = make_table(spec, restriction, loss);
  LookupObjective objective(spec, table);
  TrialLedger ledger(objective.fingerprints());
  Evaluator evaluator(objective, ledger);
  grid_search(spec, restriction, evaluator);
  return ledger;
}

double value(const ContributionReport& report, const std::string& component) {
  const auto* e = report.find(component);
  REQUIRE(e != nullptr);
  return e->contribution;
}

}  // namespace

TEST_SUITE("attribution") {
  TEST_CASE("step contribution with flat algorithm losses") {
    const auto spec = default_image_pipeline();
    const auto ledger = grid_ledger(spec, Restriction::cash(spec), [](const Configuration& c) {
      return c.path[0] == "haralick" ? 0.2 : 0.4;
    });
    const auto report = contribution_steps(ledger, spec);
    CHECK(report.reference_min == doctest::Approx(0.2));
    CHECK(value(report, "feature_extraction") == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(value(report, "feature_transformation") == doctest::Approx(0.0));
    CHECK(value(report, "learning") == doctest::Approx(0.0));
    const auto* fe = report.find("feature_extraction");
    CHECK(fe->cell_minima.at("haralick") == doctest::Approx(0.2));
    CHECK(fe->cell_minima.at("cnn_frozen") == doctest::Approx(0.4));
    CHECK(fe->coverage == 1.0);
  }

  TEST_CASE("algorithm contribution over ISOMAP settings") {
    const auto spec = default_image_pipeline();
    const auto ledger = grid_ledger(spec, Restriction::on_path(kHir), [&](const Configuration& c) {
      return domain_index(spec, c, 1, "n_components") == 0 ? 0.2 : 0.4;
    });
    const auto report = contribution_algorithms(ledger, spec, kHir);
    CHECK(value(report, "isomap") == doctest::Approx(2.0 / 15.0).epsilon(1e-12));
    CHECK(value(report, "haralick") == doctest::Approx(0.0));
    CHECK(value(report, "rf") == doctest::Approx(0.0));
    CHECK(report.find("isomap")->cell_minima.size() == 15);
  }

  TEST_CASE("algorithm contribution equals mean minus min of f") {
    const auto spec = default_image_pipeline();
    auto f = [&](const Configuration& c) {
      return 0.1 + 0.03 * domain_index(spec, c, 1, "n_neighbors") +
             0.01 * domain_index(spec, c, 1, "n_components");
    };
    const auto ledger = grid_ledger(spec, Restriction::on_path(kHir), f);
    const auto report = contribution_algorithms(ledger, spec, kHir);
    double mean = 0.0;
    for (int k = 0; k < 5; ++k)
      for (int m = 0; m < 3; ++m) mean += 0.1 + 0.03 * k + 0.01 * m;
    mean /= 15.0;
    CHECK(value(report, "isomap") == doctest::Approx(mean - 0.1).epsilon(1e-12));
    CHECK(value(report, "haralick") == doctest::Approx(0.0));
  }

  TEST_CASE("hyperparameter contribution") {
    const auto spec = default_image_pipeline();
    const auto ledger = grid_ledger(spec, Restriction::on_path(kHir), [&](const Configuration& c) {
      return 0.1 * (1.0 + domain_index(spec, c, 1, "n_neighbors"));
    });
    const auto report = contribution_hyperparameters(ledger, spec, kHir,
                                                     default_hyperparameter_targets(spec, kHir));
    CHECK(report.entries.size() == 3);
    CHECK(value(report, "isomap.n_neighbors") == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(value(report, "haralick.distance") == doctest::Approx(0.0));
    CHECK(value(report, "rf.n_estimators") == doctest::Approx(0.0));
    CHECK_THROWS_AS(contribution_hyperparameters(ledger, spec, kHir, {"pca.whitening"}),
                    SpecError);
  }

  TEST_CASE("constant losses give zero everywhere") {
    const auto spec = default_image_pipeline();
    const auto ledger =
        grid_ledger(spec, Restriction::on_path(kHir), [](const Configuration&) { return 0.7; });
    for (auto scope : {Scope::kAlgorithms, Scope::kHyperparameters}) {
      for (const auto& e : contribution(scope, ledger, spec, kHir, {}).entries) {
        CHECK(e.contribution == 0.0);
      }
    }
  }

  TEST_CASE("default targets and component labels") {
    const auto spec = default_image_pipeline();
    CHECK(default_hyperparameter_targets(spec, kHir) ==
          std::vector<std::string>{"haralick.distance", "isomap.n_neighbors", "rf.n_estimators"});
    const auto steps = step_components(spec);
    CHECK(steps.size() == 3);
    CHECK(steps[2].label(spec) == "learning");
    CHECK_THROWS_AS(algorithm_components(spec, {"haralick", "nope", "rf"}), SpecError);
    CHECK(parse_scope("hyperparameters") == Scope::kHyperparameters);
  }

  TEST_CASE("hyperparameter-free algorithm contributes nothing") {
    const auto spec = default_image_pipeline();
    const PathId cnn = {"cnn_frozen", "pca", "rf"};
    const auto ledger = grid_ledger(spec, Restriction::on_path(cnn), [&](const Configuration& c) {
      return 0.1 + 0.01 * domain_index(spec, c, 2, "n_estimators");
    });
    const auto report = contribution_algorithms(ledger, spec, cnn);
    CHECK(value(report, "cnn_frozen") == 0.0);
    CHECK(report.find("cnn_frozen")->cell_minima.size() == 1);
    CHECK(value(report, "rf") > 0.0);
  }

  TEST_CASE("aggregation over seeds") {
    ContributionReport a, b;
    a.estimator = b.estimator = OptimizerKind::kRandom;
    a.entries.push_back({});
    a.entries[0].component = "x";
    a.entries[0].contribution = 0.1;
    b.entries = a.entries;
    b.entries[0].contribution = 0.2;
    const auto agg = aggregate_over_seeds({a, b});
    CHECK(agg.seeds == 2);
    CHECK(agg.entries[0].mean == doctest::Approx(0.15));
    CHECK(agg.entries[0].std == doctest::Approx(0.0707107).epsilon(1e-5));
    CHECK(agg.entries[0].per_seed == std::vector<double>{0.1, 0.2});

    const auto same = aggregate_over_seeds({a, a, a, a, a});
    CHECK(same.entries[0].std == 0.0);
    CHECK(same.entries[0].mean == doctest::Approx(0.1));

    a.estimator = b.estimator = OptimizerKind::kGrid;
    CHECK_THROWS_AS(aggregate_over_seeds({a, b}), std::invalid_argument);
    CHECK_NOTHROW(aggregate_over_seeds({a}));
    ContributionReport c = b;
    c.scope = Scope::kAlgorithms;
    c.estimator = OptimizerKind::kRandom;
    b.estimator = OptimizerKind::kRandom;
    CHECK_THROWS_AS(aggregate_over_seeds({b, c}), std::invalid_argument);
  }

  TEST_CASE("coverage handling") {
    const auto spec = default_image_pipeline();
    const auto restriction = Restriction::on_path(kHir);
    const auto table = make_table(spec, restriction, [&](const Configuration& c) {
      return 0.1 + 0.01 * domain_index(spec, c, 0, "distance");
    });
    LookupObjective objective(spec, table);
    TrialLedger ledger(objective.fingerprints());
    Evaluator evaluator(objective, ledger);
    for (const auto& c : enumerate_grid(spec, restriction)) {
      if (c.assignments.at("haralick.distance") != "4") evaluator.evaluate(c);
    }
    CHECK_THROWS_AS(contribution_algorithms(ledger, spec, kHir), CoverageError);
    AttributionOptions partial;
    partial.allow_partial = true;
    const auto report = contribution_algorithms(ledger, spec, kHir, partial);
    const auto* h = report.find("haralick");
    CHECK(h->coverage == doctest::Approx(0.75));
    CHECK(h->missing_cells.size() == 1);
    CHECK(h->contribution == doctest::Approx(0.01).epsilon(1e-12));

    const auto added = ensure_coverage(spec, restriction, algorithm_components(spec, kHir),
                                       evaluator, 0);
    CHECK(added == 1);
    const auto full = contribution_algorithms(ledger, spec, kHir);
    CHECK(full.find("haralick")->coverage == 1.0);
    CHECK(full.find("haralick")->contribution == doctest::Approx(0.015).epsilon(1e-12));
  }

  TEST_CASE("adding trials never raises cell minima") {
    const auto spec = default_image_pipeline();
    const auto restriction = Restriction::on_path(kHir);
    Rng noise(21);
    const auto table = make_table(spec, restriction, [&](const Configuration&) {
      return noise.uniform();
    });
    LookupObjective objective(spec, table);
    TrialLedger ledger(objective.fingerprints());
    Evaluator evaluator(objective, ledger);
    auto grid = enumerate_grid(spec, restriction);
    Rng order(4);
    order.shuffle(grid);
    AttributionOptions partial;
    partial.allow_partial = true;
    std::map<std::string, double> previous;
    double previous_ref = INFINITY;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      evaluator.evaluate(grid[i]);
      if ((i + 1) % 150 != 0) continue;
      const auto report = contribution_algorithms(ledger, spec, kHir, partial);
      CHECK(report.reference_min <= previous_ref);
      previous_ref = report.reference_min;
      for (const auto& e : report.entries) {
        for (const auto& [cell, v] : e.cell_minima) {
          const auto key = e.component + "/" + cell;
          if (previous.count(key)) CHECK(v <= previous[key]);
          previous[key] = v;
        }
      }
    }
  }

  TEST_CASE("agnostic entry arithmetic") {
    const auto spec = default_image_pipeline();
    const auto grid = enumerate_grid(spec, Restriction::on_path(kHir));
    std::vector<TrialRecord> records;
    for (std::size_t i = 0; i < 4; ++i) {
      TrialRecord r;
      r.config = grid[i * 225];
      r.key = canonical_key(r.config);
      r.mean_loss = 0.1 * static_cast<double>(i + 1);
      records.push_back(r);
    }
    const auto partition = cells_for(spec, {Scope::kHyperparameters, 0, "haralick", "distance"});
    CHECK(partition.cells == std::vector<std::string>{"1", "2", "3", "4"});
    const auto e = agnostic_entry(records, 0.1, "haralick.distance", partition, false);
    CHECK(e.contribution == doctest::Approx(0.15));
    CHECK(restricted_minimum(records, spec, Restriction::on_path(kHir)).value() ==
          doctest::Approx(0.1));
    CHECK_FALSE(restricted_minimum(records, spec, Restriction::on_path({"cnn_frozen", "pca", "rf"}))
                    .has_value());
  }
}
