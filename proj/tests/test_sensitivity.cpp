#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include <json.hpp>

#include "prunekit/format.hpp"
#include "prunekit/inference.hpp"
#include "prunekit/pruner.hpp"
#include "prunekit/sensitivity.hpp"
#include "support/checks.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "support/rng.hpp"

using namespace prunekit;
using namespace testsupport;
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// input(2,3,3) -> conv (5 3x3 filters, bias) -> relu -> gap -> fc(4).
// The valid conv leaves a 1x1 map, so pooled features stay sample-dependent
// and pruning actually moves the accuracy.
ModelGraph sweep_model(Rng& rng) {
  ModelGraph g;
  g.input_shape = {2, 3, 3};
  g.num_classes = 4;
  g.nodes.push_back({.name = "input", .kind = LayerKind::Input});
  g.nodes.push_back({.name = "conv",
                     .kind = LayerKind::Conv2d,
                     .inputs = {"input"},
                     .has_bias = true,
                     .weights = {{"weight", "conv.w"}, {"bias", "conv.b"}}});
  g.nodes.push_back({.name = "relu", .kind = LayerKind::Relu, .inputs = {"conv"}});
  g.nodes.push_back({.name = "gap", .kind = LayerKind::GlobalAvgPool, .inputs = {"relu"}});
  g.nodes.push_back({.name = "fc",
                     .kind = LayerKind::Dense,
                     .inputs = {"gap"},
                     .has_bias = true,
                     .weights = {{"weight", "fc.w"}, {"bias", "fc.b"}}});
  g.tensors.emplace("conv.w", random_tensor(rng, {5, 2, 3, 3}, 0.4));
  g.tensors.emplace("conv.b", random_tensor(rng, {5}, 0.1));
  g.tensors.emplace("fc.w", random_tensor(rng, {4, 5}, 0.5));
  g.tensors.emplace("fc.b", random_tensor(rng, {4}, 0.1));
  return g;
}

bool entries_equal(const std::vector<SensitivityEntry>& a,
                   const std::vector<SensitivityEntry>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].layer != b[i].layer || a[i].ratio != b[i].ratio ||
        a[i].skipped != b[i].skipped) {
      return false;
    }
    const bool both_nan = std::isnan(a[i].accuracy) && std::isnan(b[i].accuracy);
    if (!both_nan && a[i].accuracy != b[i].accuracy) return false;
  }
  return true;
}

SensitivityMap handmade_map() {
  SensitivityMap m;
  m.method = Method::DScore;
  m.baseline_accuracy = 0.875;
  m.ratios = {0.1, 0.5, 1.0};
  m.entries = {
      {"conv1", 0.1, 0.875, false},
      {"conv1", 0.5, 0.8, false},
      {"conv1", 1.0, kNaN, true},
  };
  return m;
}

}  // namespace

TEST_CASE("the default grid runs 0.1 through 0.9") {
  const std::vector<double> grid = default_ratio_grid();
  REQUIRE(grid.size() == 9);
  for (int i = 1; i <= 9; ++i) {
    CHECK(grid[static_cast<std::size_t>(i - 1)] == static_cast<double>(i) / 10.0);
  }
}

TEST_CASE("sweep_layer matches a hand-scripted rank/plan/apply/evaluate loop") {
  Rng rng(1234);
  const ModelGraph g = sweep_model(rng);
  REQUIRE(validate_graph(g).empty());
  Dataset d = random_dataset(rng, g, 30);
  // Label each sample with the model's own prediction: the baseline is then
  // exactly 1.0 and every pruning-induced flip registers as a drop.
  const std::size_t len = g.input_shape[0] * g.input_shape[1] * g.input_shape[2];
  for (std::size_t n = 0; n < d.size(); ++n) {
    const auto x = d.inputs.data().subspan(n * len, len);
    const std::vector<float> logits = forward(g, {x.begin(), x.end()});
    d.labels[n] = static_cast<std::size_t>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
  }

  const std::vector<double> grid{0.2, 0.5, 0.8};  // removes 1, 2, 4 of 5 filters
  const std::vector<SensitivityEntry> entries =
      sweep_layer(g, d, Method::DScore, "conv", grid);
  REQUIRE(entries.size() == 3);

  const double baseline = evaluate(g, d).accuracy();
  const FilterRanking ranking = rank_filters(g.tensors.at("conv.w"), Method::DScore, "conv");
  bool moved = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(entries[i].layer == "conv");
    CHECK(entries[i].ratio == grid[i]);
    CHECK_FALSE(entries[i].skipped);
    const PruningPlan plan = build_plan(g, std::vector<FilterRanking>{ranking},
                                        {{"conv", grid[i]}});
    const double expected = evaluate(apply_plan(g, plan), d).accuracy();
    CHECK(entries[i].accuracy == expected);
    moved = moved || entries[i].accuracy != baseline;
  }
  CHECK(moved);  // the curve is a real measurement, not the baseline echoed
}

TEST_CASE("ratios that remove zero filters reuse the baseline untouched") {
  Rng rng(77);
  const ModelGraph g = sweep_model(rng);
  const Dataset d = random_dataset(rng, g, 25);

  // floor(0.1*5) = 0: the entry must echo the baseline argument verbatim.
  const std::vector<double> grid{0.1, 0.19};
  const std::vector<SensitivityEntry> handed =
      sweep_layer(g, d, Method::L1, "conv", grid, 0.123456);
  REQUIRE(handed.size() == 2);
  CHECK(handed[0].accuracy == 0.123456);
  CHECK(handed[1].accuracy == 0.123456);
  CHECK_FALSE(handed[0].skipped);

  const std::vector<SensitivityEntry> computed = sweep_layer(g, d, Method::L1, "conv", grid);
  CHECK(computed[0].accuracy == evaluate(g, d).accuracy());
}

TEST_CASE("a full-removal ratio yields a skipped marker, not an error") {
  Rng rng(78);
  const ModelGraph g = sweep_model(rng);
  const Dataset d = random_dataset(rng, g, 10);

  const std::vector<double> grid{0.2, 1.0};  // floor(1.0*5) = 5 empties the layer
  const std::vector<SensitivityEntry> entries =
      sweep_layer(g, d, Method::DStep, "conv", grid);
  REQUIRE(entries.size() == 2);
  CHECK_FALSE(entries[0].skipped);
  CHECK(entries[1].skipped);
  CHECK(std::isnan(entries[1].accuracy));
}

TEST_CASE("sweep_layer rejects unsweepable layers and bad grids") {
  Rng rng(79);
  const ModelGraph g = sweep_model(rng);
  const Dataset d = random_dataset(rng, g, 10);
  const std::vector<double> good{0.5};

  CHECK_PK_ERROR(sweep_layer(g, d, Method::L1, "relu", good), NotPrunable);
  CHECK_PK_ERROR(sweep_layer(g, d, Method::L1, "ghost", good), NotPrunable);

  ModelGraph residual = g;
  residual.nodes[1].residual_last = true;
  CHECK_PK_ERROR(sweep_layer(residual, d, Method::L1, "conv", good), NotPrunable);

  CHECK_PK_ERROR(sweep_layer(g, d, Method::L1, "conv", std::vector<double>{0.0, 0.5}),
                 RatioOutOfRange);
  CHECK_PK_ERROR(sweep_layer(g, d, Method::L1, "conv", std::vector<double>{1.5}),
                 RatioOutOfRange);
  CHECK_PK_ERROR(sweep_layer(g, d, Method::L1, "conv", std::vector<double>{-0.1}),
                 RatioOutOfRange);
  CHECK_PK_ERROR(sweep_layer(g, d, Method::L1, "conv", std::vector<double>{kNaN}),
                 RatioOutOfRange);
  CHECK_PK_ERROR(sweep_layer(g, d, Method::L1, "conv", std::vector<double>{0.5, 0.5}),
                 RatioOutOfRange);
  CHECK_PK_ERROR(sweep_layer(g, d, Method::L1, "conv", std::vector<double>{0.5, 0.4}),
                 RatioOutOfRange);
}

TEST_CASE("removing filters that are already zero cannot change accuracy") {
  Rng rng(4321);
  ModelGraph g = sweep_model(rng);
  // Filters 2..4 zeroed (weights and bias): the magnitude ranking removes
  // them first, so every sweep point below full removal is a no-op.
  std::vector<float> w(g.tensors.at("conv.w").data().begin(),
                       g.tensors.at("conv.w").data().end());
  std::fill(w.begin() + 2 * 18, w.end(), 0.0f);
  std::vector<float> b(g.tensors.at("conv.b").data().begin(),
                       g.tensors.at("conv.b").data().end());
  std::fill(b.begin() + 2, b.end(), 0.0f);
  g.tensors.at("conv.w") = WeightTensor({5, 2, 3, 3}, std::move(w));
  g.tensors.at("conv.b") = WeightTensor({5}, std::move(b));

  const Dataset d = random_dataset(rng, g, 40);
  const double baseline = evaluate(g, d).accuracy();
  const std::vector<double> grid{0.2, 0.4, 0.6};
  const std::vector<SensitivityEntry> entries = sweep_layer(g, d, Method::L1, "conv", grid);
  for (const SensitivityEntry& e : entries) {
    CHECK(e.accuracy == baseline);
  }
}

TEST_CASE("full_sensitivity sweeps every prunable layer over the shared grid") {
  Rng rng(55);
  const ModelGraph g = random_chain_model(rng, 5);
  const Dataset d = random_dataset(rng, g, 20);
  const std::vector<std::string> layers = prunable_layers(g);
  REQUIRE(!layers.empty());

  const std::vector<double> grid{0.25, 0.5};
  const SensitivityMap m = full_sensitivity(g, d, Method::DScore, grid);
  CHECK(m.method == Method::DScore);
  CHECK(m.ratios == grid);
  CHECK(m.baseline_accuracy == evaluate(g, d).accuracy());
  REQUIRE(m.entries.size() == layers.size() * grid.size());

  for (std::size_t li = 0; li < layers.size(); ++li) {
    const std::vector<SensitivityEntry> expected =
        sweep_layer(g, d, Method::DScore, layers[li], grid, m.baseline_accuracy);
    for (std::size_t ri = 0; ri < grid.size(); ++ri) {
      const SensitivityEntry& e = m.entries[li * grid.size() + ri];
      CHECK(e.layer == layers[li]);
      CHECK(e.ratio == grid[ri]);
      const bool both_nan = std::isnan(e.accuracy) && std::isnan(expected[ri].accuracy);
      CHECK((both_nan || e.accuracy == expected[ri].accuracy));
    }
  }
}

TEST_CASE("models without prunable layers produce an empty sweep") {
  ModelGraph g;
  g.input_shape = {2, 2, 2};
  g.num_classes = 3;
  g.nodes.push_back({.name = "input", .kind = LayerKind::Input});
  g.nodes.push_back({.name = "flat", .kind = LayerKind::Flatten, .inputs = {"input"}});
  g.nodes.push_back({.name = "fc",
                     .kind = LayerKind::Dense,
                     .inputs = {"flat"},
                     .weights = {{"weight", "fc.w"}}});
  Rng rng(3);
  g.tensors.emplace("fc.w", random_tensor(rng, {3, 8}));
  REQUIRE(validate_graph(g).empty());
  const Dataset d = random_dataset(rng, g, 10);

  const SensitivityMap m = full_sensitivity(g, d, Method::L2, default_ratio_grid());
  CHECK(m.entries.empty());
  CHECK(m.baseline_accuracy == evaluate(g, d).accuracy());
}

TEST_CASE("sweeps are deterministic") {
  Rng rng(56);
  const ModelGraph g = sweep_model(rng);
  const Dataset d = random_dataset(rng, g, 20);
  const std::vector<double> grid{0.4, 0.8};
  const SensitivityMap a = full_sensitivity(g, d, Method::DStepGM, grid);
  const SensitivityMap b = full_sensitivity(g, d, Method::DStepGM, grid);
  CHECK(a.baseline_accuracy == b.baseline_accuracy);
  CHECK(entries_equal(a.entries, b.entries));
  CHECK(sensitivity_csv(a) == sensitivity_csv(b));
  CHECK(sensitivity_json(a) == sensitivity_json(b));
}

TEST_CASE("ratios_for_threshold picks the largest qualifying grid ratio") {
  SensitivityMap m;
  m.baseline_accuracy = 0.92;
  m.ratios = {0.1, 0.2, 0.3};
  m.entries = {
      {"a", 0.1, 0.91, false},
      {"a", 0.2, 0.905, false},
      {"a", 0.3, 0.89, false},
      {"b", 0.1, 0.95, false},
      {"b", 0.2, 0.92, false},
      {"b", 0.3, kNaN, true},  // skipped points never qualify
  };

  CHECK(ratios_for_threshold(m, 0.90) ==
        std::map<std::string, double>{{"a", 0.2}, {"b", 0.2}});
  CHECK(ratios_for_threshold(m, 0.905) ==
        std::map<std::string, double>{{"a", 0.2}, {"b", 0.2}});  // >= keeps the boundary
  CHECK(ratios_for_threshold(m, 0.95) ==
        std::map<std::string, double>{{"a", 0.0}, {"b", 0.1}});
  CHECK(ratios_for_threshold(m, 0.99) ==
        std::map<std::string, double>{{"a", 0.0}, {"b", 0.0}});
  CHECK(ratios_for_threshold(m, 0.5) ==
        std::map<std::string, double>{{"a", 0.3}, {"b", 0.2}});
}

TEST_CASE("threshold selection matches the oracle and is monotone") {
  Rng rng(909);
  for (int trial = 0; trial < 200; ++trial) {
    SensitivityMap m;
    m.ratios = default_ratio_grid();
    std::vector<std::pair<double, double>> curve;
    for (double r : m.ratios) {
      const bool skipped = rng.chance(0.1);
      const double acc = skipped ? kNaN : rng.uniform();
      m.entries.push_back({"layer", r, acc, skipped});
      curve.emplace_back(r, acc);  // NaN never passes >=, matching skip rules
    }
    const double t1 = rng.uniform();
    const double t2 = rng.uniform();
    const auto r1 = ratios_for_threshold(m, t1);
    const auto r2 = ratios_for_threshold(m, t2);
    CHECK(r1.at("layer") == oracle_threshold_ratio(curve, t1));
    CHECK(r2.at("layer") == oracle_threshold_ratio(curve, t2));
    if (t1 <= t2) {
      CHECK(r1.at("layer") >= r2.at("layer"));
    } else {
      CHECK(r2.at("layer") >= r1.at("layer"));
    }
  }
}

TEST_CASE("the CSV artifact is stable and round-trips") {
  const SensitivityMap m = handmade_map();
  const std::string expected =
      "layer,ratio,accuracy\n"
      "__baseline__,0,0.875\n"
      "conv1,0.1,0.875\n"
      "conv1,0.5,0.8\n"
      "conv1,1,nan\n";
  CHECK(sensitivity_csv(m) == expected);

  const SensitivityMap back = sensitivity_from_csv(expected);
  CHECK_FALSE(back.method.has_value());  // the CSV carries no method tag
  CHECK(back.baseline_accuracy == 0.875);
  CHECK(back.ratios == m.ratios);
  CHECK(entries_equal(back.entries, m.entries));
}

TEST_CASE("CSV quoting survives layer names with commas and quotes") {
  SensitivityMap m;
  m.baseline_accuracy = 1.0;
  m.ratios = {0.5};
  m.entries = {
      {"we,ird", 0.5, 0.75, false},
      {"quo\"ted", 0.5, 0.25, false},
  };
  const std::string text = sensitivity_csv(m);
  CHECK(text.find("\"we,ird\",0.5,0.75\n") != std::string::npos);
  CHECK(text.find("\"quo\"\"ted\",0.5,0.25\n") != std::string::npos);
  const SensitivityMap back = sensitivity_from_csv(text);
  CHECK(entries_equal(back.entries, m.entries));
}

TEST_CASE("sensitivity_from_csv rejects malformed tables") {
  CHECK_PK_ERROR(sensitivity_from_csv(""), SchemaViolation);
  CHECK_PK_ERROR(sensitivity_from_csv("layer,ratio\n"), SchemaViolation);
  CHECK_PK_ERROR(sensitivity_from_csv("layer,ratio,accuracy\n"),
                 SchemaViolation);  // no baseline row
  CHECK_PK_ERROR(sensitivity_from_csv("layer,ratio,accuracy\n__baseline__,0.1,0.9\n"),
                 SchemaViolation);  // baseline must sit at ratio 0
  CHECK_PK_ERROR(
      sensitivity_from_csv("layer,ratio,accuracy\n__baseline__,0,0.9\n__baseline__,0,0.9\n"),
      SchemaViolation);  // duplicated baseline
  CHECK_PK_ERROR(sensitivity_from_csv("layer,ratio,accuracy\n__baseline__,0,0.9\nc,0.1\n"),
                 SchemaViolation);  // short row
  CHECK_PK_ERROR(sensitivity_from_csv("layer,ratio,accuracy\n__baseline__,0,0.9\nc,0.1,x\n"),
                 SchemaViolation);  // bad number
  CHECK_PK_ERROR(sensitivity_from_csv("layer,ratio,accuracy\n__baseline__,0,0.9\n\"c,0.1,0.5\n"),
                 SchemaViolation);  // unterminated quote
  CHECK_PK_ERROR(
      sensitivity_from_csv(
          "layer,ratio,accuracy\n__baseline__,0,0.9\na,0.1,0.5\na,0.2,0.5\nb,0.1,0.5\nb,0.3,0.5\n"),
      SchemaViolation);  // layers sweep different grids
}

TEST_CASE("blank CSV lines are tolerated and the grid is recovered sorted") {
  const std::string text =
      "layer,ratio,accuracy\n"
      "__baseline__,0,0.9\n"
      "\n"
      "a,0.2,0.8\n"
      "a,0.1,0.85\n"
      "\n";
  const SensitivityMap m = sensitivity_from_csv(text);
  CHECK(m.ratios == std::vector<double>{0.1, 0.2});
  REQUIRE(m.entries.size() == 2);
  CHECK(m.entries[0].ratio == 0.2);  // row order is preserved
}

TEST_CASE("the JSON artifact carries skipped entries as null accuracy") {
  const SensitivityMap m = handmade_map();
  const std::string text = sensitivity_json(m);
  CHECK(text.back() == '\n');
  CHECK(sensitivity_json(m) == text);

  const nlohmann::json doc = nlohmann::json::parse(text);
  CHECK(doc["method"] == "dscore");
  CHECK(doc["baseline_accuracy"].get<double>() == 0.875);
  REQUIRE(doc["entries"].size() == 3);
  CHECK(doc["entries"][2]["accuracy"].is_null());
  CHECK(doc["entries"][2]["skipped"].get<bool>());
  CHECK_FALSE(doc["entries"][0].contains("skipped"));

  const SensitivityMap back = sensitivity_from_json(text);
  CHECK(back.method == m.method);
  CHECK(back.baseline_accuracy == m.baseline_accuracy);
  CHECK(back.ratios == m.ratios);
  CHECK(entries_equal(back.entries, m.entries));

  SensitivityMap untagged = handmade_map();
  untagged.method.reset();
  const std::string untagged_text = sensitivity_json(untagged);
  CHECK_FALSE(nlohmann::json::parse(untagged_text).contains("method"));
  CHECK_FALSE(sensitivity_from_json(untagged_text).method.has_value());
}

TEST_CASE("sensitivity_from_json rejects malformed documents") {
  CHECK_PK_ERROR(sensitivity_from_json("nklz"), SchemaViolation);
  CHECK_PK_ERROR(sensitivity_from_json("[]"), SchemaViolation);
  CHECK_PK_ERROR(sensitivity_from_json(R"({"ratios": [], "entries": []})"), SchemaViolation);
  CHECK_PK_ERROR(
      sensitivity_from_json(R"({"baseline_accuracy": "hi", "ratios": [], "entries": []})"),
      SchemaViolation);
  CHECK_PK_ERROR(
      sensitivity_from_json(R"({"baseline_accuracy": 0.9, "ratios": {}, "entries": []})"),
      SchemaViolation);
  CHECK_PK_ERROR(
      sensitivity_from_json(R"({"baseline_accuracy": 0.9, "ratios": ["x"], "entries": []})"),
      SchemaViolation);
  CHECK_PK_ERROR(
      sensitivity_from_json(R"({"baseline_accuracy": 0.9, "ratios": [], "entries": {}})"),
      SchemaViolation);
  CHECK_PK_ERROR(sensitivity_from_json(
                     R"({"baseline_accuracy": 0.9, "ratios": [], "entries": [{"ratio": 0.1}]})"),
                 SchemaViolation);
  CHECK_PK_ERROR(
      sensitivity_from_json(
          R"({"baseline_accuracy": 0.9, "ratios": [], "entries": [{"layer": "c", "ratio": "r", "accuracy": 1}]})"),
      SchemaViolation);
  CHECK_PK_ERROR(
      sensitivity_from_json(
          R"({"baseline_accuracy": 0.9, "ratios": [], "entries": [{"layer": "c", "ratio": 0.1, "accuracy": "x"}]})"),
      SchemaViolation);
  CHECK_PK_ERROR(
      sensitivity_from_json(R"({"method": 7, "baseline_accuracy": 0.9, "ratios": [], "entries": []})"),
      SchemaViolation);
  CHECK_PK_ERROR(
      sensitivity_from_json(
          R"({"method": "bogus", "baseline_accuracy": 0.9, "ratios": [], "entries": []})"),
      SchemaViolation);
}

TEST_CASE("the committed fixture sweep reproduces the recorded threshold ratios") {
  const fs::path fixtures = PRUNEKIT_FIXTURE_DIR;
  const ModelGraph model = load_model(fixtures / "model.pkm", fixtures / "model.pkmt");
  const Dataset data = load_dataset(fixtures / "data.pkmt", fixtures / "labels.pkmt");
  std::ifstream in(fixtures / "expected.json");
  REQUIRE(in.good());
  const nlohmann::json expected = nlohmann::json::parse(in);

  const SensitivityMap m = full_sensitivity(model, data, Method::DScore, default_ratio_grid());
  CHECK(m.baseline_accuracy ==
        static_cast<double>(expected["baseline"]["correct"].get<std::size_t>()) /
            static_cast<double>(expected["baseline"]["total"].get<std::size_t>()));

  const auto selected = ratios_for_threshold(m, expected["threshold"].get<double>());
  for (auto it = expected["ratios"].begin(); it != expected["ratios"].end(); ++it) {
    CHECK(selected.at(it.key()) == it.value().get<double>());
  }
  CHECK(selected.size() == expected["ratios"].size());
}
