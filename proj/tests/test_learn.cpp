#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "doctest.h"
#include "hydra/learn.hpp"

using namespace hydra;
using namespace hydra::learn;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected hydra::Error");
  return ErrorCode::Io;
}

FeatureVector row(HydrationLevel level) {
  FeatureVector fv;
  fv.label = level;
  return fv;
}

// Four classes centred on feature 18 (cda_tonic_mean_mean) with noisy
// distractor columns.
Dataset blobs(std::uint64_t seed, std::size_t per_class, double spread, int classes = 4) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Dataset d;
  for (int c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      auto fv = row(level_from_int(c));
      for (auto& v : fv.values) v = g(rng);
      fv.values[18] = 1.0 + 0.5 * c + spread * g(rng);
      fv.window_start = static_cast<double>(d.rows.size());
      d.rows.push_back(fv);
    }
  return d;
}

double training_accuracy(const HydrationModel& m, const Dataset& d) {
  std::size_t ok = 0;
  for (const auto& r : d.rows) ok += predict(m, r).level == *r.label;
  return static_cast<double>(ok) / static_cast<double>(d.rows.size());
}

std::string golden(const std::string& name) {
  std::ifstream in(std::string(HYDRA_GOLDEN_DIR) + "/" + name, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("tree: one perfect split gives a depth-1 tree") {
  Dataset d;
  for (int i = 0; i < 20; ++i) {
    auto fv = row(i < 10 ? HydrationLevel::WellHydrated : HydrationLevel::Dehydrated);
    fv.values[18] = i < 10 ? 1.0 + 0.01 * i : 2.0 + 0.01 * i;
    d.rows.push_back(fv);
  }
  const auto m = train_tree(d);
  REQUIRE(m.trees.size() == 1);
  CHECK(m.trees[0].nodes.size() == 3);
  CHECK(m.trees[0].nodes[0].feature == 18);
  CHECK(m.trees[0].nodes[0].threshold == doctest::Approx(1.09));
  CHECK(training_accuracy(m, d) == 1.0);
  CHECK_FALSE(m.constant);
}

TEST_CASE("tree ties go to the lowest feature, then the lowest threshold") {
  Dataset d;
  for (int i = 0; i < 20; ++i) {
    auto fv = row(i < 10 ? HydrationLevel::WellHydrated : HydrationLevel::Hydrated);
    fv.values[30] = i;
    fv.values[7] = i;
    fv.values[12] = -i;
    d.rows.push_back(fv);
  }
  const auto m = train_tree(d);
  CHECK(m.trees[0].nodes[0].feature == 7);
  CHECK(m.trees[0].nodes[0].threshold == 9.0);

  // Two equally good thresholds on one feature: the class pattern A B A with
  // min_leaf 1 can be cut at either boundary with the same impurity.
  Dataset e;
  const int pattern[] = {0, 0, 1, 1, 0, 0};
  for (int i = 0; i < 6; ++i) {
    auto fv = row(level_from_int(pattern[i]));
    fv.values[0] = i;
    e.rows.push_back(fv);
  }
  const auto m2 = train_tree(e, {1, 1});
  CHECK(m2.trees[0].nodes[0].threshold == 1.0);
}

TEST_CASE("tree: single class gives a flagged constant predictor") {
  Dataset d;
  for (int i = 0; i < 5; ++i) d.rows.push_back(row(HydrationLevel::Dehydrated));
  for (auto m : {train_tree(d), train_forest(d, {5}), train_nbayes(d)}) {
    REQUIRE(m.constant);
    CHECK(*m.constant == HydrationLevel::Dehydrated);
    FeatureVector x;
    x.values.fill(123.0);
    const auto p = predict(m, x);
    CHECK(p.level == HydrationLevel::Dehydrated);
    CHECK(p.confidence == 1.0);
  }
  CHECK(code_of([] { train_tree(Dataset{}); }) == ErrorCode::EmptyDataset);
  CHECK(code_of([] { train_forest(Dataset{}); }) == ErrorCode::EmptyDataset);
  CHECK(code_of([] { train_nbayes(Dataset{}); }) == ErrorCode::EmptyDataset);
}

TEST_CASE("training is deterministic") {
  const auto d = blobs(1, 30, 0.3);
  CHECK(serialize_model(train_tree(d)) == serialize_model(train_tree(d)));
  CHECK(serialize_model(train_forest(d, {10, 99})) == serialize_model(train_forest(d, {10, 99})));
  CHECK(serialize_model(train_forest(d, {10, 99})) != serialize_model(train_forest(d, {10, 100})));
  CHECK(serialize_model(train_nbayes(d)) == serialize_model(train_nbayes(d)));
}

TEST_CASE("tree predictions survive a strictly increasing rescale of one feature") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    auto d = blobs(100 + trial, 25, 0.6);
    Dataset probe = blobs(200 + trial, 10, 0.6);
    const std::size_t f = trial % 2 ? 18 : static_cast<std::size_t>(rng() % kNumFeatures);
    auto warp = [](double v) { return std::exp(v) + v * v * v; };
    auto dw = d, pw = probe;
    for (auto& r : dw.rows) r.values[f] = warp(r.values[f]);
    for (auto& r : pw.rows) r.values[f] = warp(r.values[f]);
    const auto m = train_tree(d);
    const auto mw = train_tree(dw);
    for (std::size_t i = 0; i < probe.rows.size(); ++i) {
      const auto a = predict(m, probe.rows[i]);
      const auto b = predict(mw, pw.rows[i]);
      CHECK(a.level == b.level);
      CHECK(a.distribution == b.distribution);
    }
  }
}

TEST_CASE("forest: degenerate configuration equals the single tree") {
  const auto d = blobs(3, 40, 0.5);
  const auto tree = train_tree(d, {8, 3});
  ForestParams p;
  p.n_trees = 1;
  p.bootstrap = false;
  p.mtry = static_cast<int>(kNumFeatures);
  p.tree = {8, 3};
  const auto forest = train_forest(d, p);
  REQUIRE(forest.trees.size() == 1);
  CHECK(forest.trees[0] == tree.trees[0]);
  for (const auto& r : d.rows) CHECK(predict(forest, r).distribution == predict(tree, r).distribution);
}

TEST_CASE("forest learns separable blobs") {
  const auto d = blobs(4, 40, 0.05);
  const auto m = train_forest(d);
  CHECK(m.trees.size() == 50);
  CHECK(training_accuracy(m, d) == 1.0);
}

TEST_CASE("naive Bayes") {
  SUBCASE("separable classes") {
    const auto d = blobs(5, 30, 0.01, 2);
    CHECK(training_accuracy(train_nbayes(d), d) == 1.0);
  }
  SUBCASE("constant feature within a class hits the variance floor") {
    auto d = blobs(6, 20, 0.2, 2);
    for (auto& r : d.rows) r.values[5] = 3.0;
    const auto m = train_nbayes(d);
    CHECK(m.nbayes.variance[0][5] == kVarianceFloor);
    CHECK(m.nbayes.variance[1][5] == kVarianceFloor);
    auto x = d.rows[0];
    x.values[5] = 3.5;
    const auto p = predict(m, x);
    for (double v : p.distribution) CHECK(std::isfinite(v));
  }
  SUBCASE("priors are class frequencies") {
    Dataset d;
    for (int i = 0; i < 6; ++i) d.rows.push_back(row(HydrationLevel::WellHydrated));
    for (int i = 0; i < 2; ++i) d.rows.push_back(row(HydrationLevel::Hydrated));
    const auto m = train_nbayes(d);
    CHECK(m.nbayes.prior[0] == 0.75);
    CHECK(m.nbayes.prior[1] == 0.25);
    CHECK(m.nbayes.prior[2] == 0.0);
  }
  SUBCASE("an equidistant point ties to the lower level") {
    Dataset d;
    for (double v : {-1.5, -0.5}) {
      auto fv = row(HydrationLevel::Dehydrated);
      fv.values.fill(v);
      d.rows.push_back(fv);
    }
    for (double v : {0.5, 1.5}) {
      auto fv = row(HydrationLevel::VeryDehydrated);
      fv.values.fill(v);
      d.rows.push_back(fv);
    }
    const auto m = train_nbayes(d);
    FeatureVector x;
    const auto p = predict(m, x);
    CHECK(p.level == HydrationLevel::Dehydrated);
    CHECK(p.distribution[2] == p.distribution[3]);
    CHECK(p.confidence == 0.5);
  }
}

TEST_CASE("predict contract") {
  const auto d = blobs(7, 20, 0.3);
  for (const auto& m : {train_tree(d), train_forest(d, {7, 1}), train_nbayes(d)}) {
    for (const auto& r : d.rows) {
      const auto p = predict(m, r);
      double s = 0.0;
      for (double v : p.distribution) s += v;
      CHECK(std::abs(s - 1.0) <= 1e-9);
      CHECK(p.confidence >= 0.0);
      CHECK(p.confidence <= 1.0);
      CHECK(p.confidence == p.distribution[static_cast<std::size_t>(p.level)]);
      const auto again = predict(m, r);
      CHECK(again.distribution == p.distribution);
    }
    auto bad = d.rows[0];
    bad.values[4] = NAN;
    CHECK(code_of([&] { predict(m, bad); }) == ErrorCode::NonFiniteFeature);
    bad.values[4] = INFINITY;
    CHECK(code_of([&] { predict(m, bad); }) == ErrorCode::NonFiniteFeature);
    CHECK(code_of([&] { predict(m, d.rows[0], "0000000000000000"); }) == ErrorCode::FeatureOrderMismatch);
  }
}

namespace {

// Recount from the raw per-fold predictions without touching a confusion
// matrix type.
struct Recount {
  double accuracy{0}, sensitivity{0}, specificity{0};
};

Recount recount(const std::vector<int>& truth, const std::vector<int>& pred) {
  Recount r;
  const double n = static_cast<double>(truth.size());
  double correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i];
  r.accuracy = correct / n;
  double sens = 0, spec = 0;
  int ns = 0, np = 0;
  for (int c = 0; c < kNumLevels; ++c) {
    double tp = 0, fn = 0, fp = 0, tn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == c && pred[i] == c) ++tp;
      else if (truth[i] == c) ++fn;
      else if (pred[i] == c) ++fp;
      else ++tn;
    }
    if (tp + fn == 0) continue;
    sens += tp / (tp + fn);
    ++ns;
    if (tn + fp > 0) {
      spec += tn / (tn + fp);
      ++np;
    }
  }
  r.sensitivity = sens / ns;
  r.specificity = np ? spec / np : 1.0;
  return r;
}

}  // namespace

TEST_CASE("cross_validate: perfect classifier on separable data") {
  // Every column is constant within a class, so held-out rows repeat
  // training values exactly.
  Dataset d;
  for (int c = 0; c < kNumLevels; ++c)
    for (int i = 0; i < 30; ++i) {
      auto fv = row(level_from_int(c));
      for (std::size_t f = 0; f < kNumFeatures; ++f) fv.values[f] = 0.5 * c * static_cast<double>(f + 1);
      d.rows.push_back(fv);
    }
  for (ModelKind kind : {ModelKind::Tree, ModelKind::Forest, ModelKind::NBayes}) {
    ModelSpec spec;
    spec.kind = kind;
    spec.forest.n_trees = 10;
    const auto r = cross_validate(d, spec, 10, 7);
    CHECK(r.accuracy.mean == 1.0);
    CHECK(r.accuracy.std == 0.0);
    CHECK(r.sensitivity.mean == 1.0);
    CHECK(r.specificity.mean == 1.0);
    CHECK(r.specificity.std == 0.0);
  }
}

TEST_CASE("cross_validate metrics equal a brute-force recount") {
  const auto d = blobs(10, 37, 0.35);
  for (ModelKind kind : {ModelKind::Tree, ModelKind::Forest, ModelKind::NBayes}) {
    ModelSpec spec;
    spec.kind = kind;
    spec.forest.n_trees = 15;
    const auto r = cross_validate(d, spec, 10, 3);
    REQUIRE(r.folds.size() == 10);

    std::vector<int> all_t, all_p;
    std::vector<double> accs, senss, specs;
    std::vector<bool> seen(d.rows.size(), false);
    for (const auto& f : r.folds) {
      std::vector<int> t, p;
      for (std::size_t i = 0; i < f.test_rows.size(); ++i) {
        CHECK_FALSE(seen[f.test_rows[i]]);
        seen[f.test_rows[i]] = true;
        t.push_back(static_cast<int>(*d.rows[f.test_rows[i]].label));
        p.push_back(static_cast<int>(f.predicted[i]));
      }
      const auto rc = recount(t, p);
      CHECK(rc.accuracy == f.accuracy);
      CHECK(rc.sensitivity == f.sensitivity);
      CHECK(rc.specificity == f.specificity);
      accs.push_back(rc.accuracy);
      senss.push_back(rc.sensitivity);
      specs.push_back(rc.specificity);
      all_t.insert(all_t.end(), t.begin(), t.end());
      all_p.insert(all_p.end(), p.begin(), p.end());
    }
    for (bool s : seen) CHECK(s);

    auto mean = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    CHECK(r.accuracy.mean == mean(accs));
    CHECK(r.sensitivity.mean == mean(senss));
    CHECK(r.specificity.mean == mean(specs));

    // Summed confusion matrix against the pooled recount.
    const auto pooled = metrics_from_confusion(r.confusion);
    const auto rc = recount(all_t, all_p);
    CHECK(pooled.accuracy == rc.accuracy);
    CHECK(pooled.sensitivity == rc.sensitivity);
    CHECK(pooled.specificity == rc.specificity);
    const auto counts = d.class_counts();
    for (int c = 0; c < kNumLevels; ++c) {
      std::size_t row_sum = 0;
      for (int p = 0; p < kNumLevels; ++p) row_sum += r.confusion[c][p];
      CHECK(row_sum == counts[c]);
    }
  }
}

TEST_CASE("cross_validate folds are stratified") {
  const auto d = blobs(11, 23, 0.3);
  const auto r = cross_validate(d, {}, 5, 1);
  for (const auto& f : r.folds) {
    std::array<int, kNumLevels> per{};
    for (auto i : f.test_rows) ++per[static_cast<std::size_t>(*d.rows[i].label)];
    for (int c = 0; c < kNumLevels; ++c) CHECK(std::abs(per[c] - 23.0 / 5.0) < 1.0);
  }
  CHECK(code_of([&] { cross_validate(d, {}, 1, 1); }) == ErrorCode::TooFewRows);
  Dataset tiny;
  for (int i = 0; i < 3; ++i) tiny.rows.push_back(row(HydrationLevel::Hydrated));
  CHECK(code_of([&] { cross_validate(tiny, {}, 10, 1); }) == ErrorCode::TooFewRows);
}

TEST_CASE("table rendering matches the golden layout") {
  auto make = [](double a, double as, double s, double ss, double p, double ps) {
    MetricsReport r;
    r.k = 10;
    r.accuracy = {a, as};
    r.sensitivity = {s, ss};
    r.specificity = {p, ps};
    return r;
  };
  const std::vector<std::pair<std::string, MetricsReport>> cols{
      {"Decision Tree", make(0.845, 0.001, 0.875, 0.001, 0.903, 0.003)},
      {"Random Forest", make(0.832, 0.083, 0.803, 0.013, 0.854, 0.040)},
      {"Naive Bayes", make(0.703, 0.012, 0.755, 0.018, 0.753, 0.023)},
  };
  CHECK(render_table(cols) == golden("report_table.txt"));
}

TEST_CASE("report JSON") {
  const auto d = blobs(12, 20, 0.3);
  const auto r = cross_validate(d, {}, 4, 2);
  const auto j = nlohmann::json::parse(report_json(r));
  CHECK(j["kind"] == "tree");
  CHECK(j["k"] == 4);
  CHECK(j["accuracy"]["mean"].get<double>() == r.accuracy.mean);
  CHECK(j["folds"].size() == 4);
  CHECK(j["confusion"].size() == 4);
}

TEST_CASE("model files round trip and reject bad input") {
  const auto d = blobs(13, 25, 0.4);
  std::vector<HydrationModel> models{train_tree(d), train_forest(d, {5, 3}), train_nbayes(d)};
  Dataset one;
  one.rows.push_back(row(HydrationLevel::Hydrated));
  models.push_back(train_tree(one));
  models[0].manifest = R"({"seed":7})";
  const auto probe = blobs(14, 10, 1.0);
  for (const auto& m : models) {
    const auto text = serialize_model(m);
    const auto back = parse_model(text);
    CHECK(back == m);
    for (const auto& r : probe.rows) CHECK(predict(back, r).distribution == predict(m, r).distribution);

    auto doc = nlohmann::json::parse(text);
    doc["v"] = 2;
    CHECK(code_of([&] { parse_model(doc.dump()); }) == ErrorCode::VersionMismatch);
    CHECK(code_of([&] { parse_model(text.substr(0, text.size() / 2)); }) == ErrorCode::CorruptModel);
    auto no_params = nlohmann::json::parse(text);
    no_params.erase("params");
    CHECK(code_of([&] { parse_model(no_params.dump()); }) == ErrorCode::CorruptModel);
  }
  auto doc = nlohmann::json::parse(serialize_model(models[0]));
  doc["params"]["nodes"][0]["l"] = 0;
  CHECK(code_of([&] { parse_model(doc.dump()); }) == ErrorCode::CorruptModel);

  const std::string path = "test_learn_model.json";
  save_model(models[1], path);
  CHECK(load_model(path) == models[1]);
  std::remove(path.c_str());
  CHECK(code_of([&] { load_model(path); }) == ErrorCode::Io);
}

TEST_CASE("model kind names") {
  CHECK(model_kind_from_string("forest") == ModelKind::Forest);
  CHECK(to_string(ModelKind::NBayes) == "nbayes");
  CHECK(code_of([] { model_kind_from_string("mlp"); }) == ErrorCode::InvalidArgument);
}
