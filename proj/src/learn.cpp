#include "hydra/learn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>

#include <json.hpp>

#include "hydra/file_io.hpp"

namespace hydra::learn {

using nlohmann::json;
using Row = std::array<double, kNumFeatures>;

namespace {

[[noreturn]] void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

struct Training {
  std::vector<const Row*> x;
  std::vector<int> y;
  Histogram counts{};
};

Training prepare(const Dataset& data) {
  if (data.rows.empty()) fail(ErrorCode::EmptyDataset, "no training rows");
  Training t;
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    const auto& r = data.rows[i];
    if (!r.label) fail(ErrorCode::InvalidArgument, "training row " + std::to_string(i) + " has no label");
    for (double v : r.values)
      if (!std::isfinite(v)) fail(ErrorCode::NonFiniteFeature, "training row " + std::to_string(i) + " is not finite");
    t.x.push_back(&r.values);
    t.y.push_back(static_cast<int>(*r.label));
    t.counts[static_cast<std::size_t>(*r.label)] += 1.0;
  }
  return t;
}

std::optional<HydrationLevel> single_class(const Histogram& counts) {
  int present = 0, last = 0;
  for (int c = 0; c < kNumLevels; ++c)
    if (counts[c] > 0) {
      ++present;
      last = c;
    }
  if (present == 1) return static_cast<HydrationLevel>(last);
  return std::nullopt;
}

double weighted_gini(const Histogram& h, double n) {
  if (n <= 0) return 0.0;
  double sq = 0.0;
  for (double c : h) sq += c * c;
  return n - sq / n;
}

// Unbiased draw in [0, n) from a 64-bit engine.
std::size_t draw_below(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t bound = n;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t v;
  do v = rng(); while (v >= limit);
  return static_cast<std::size_t>(v % bound);
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class TreeBuilder {
public:
  TreeBuilder(const Training& t, const TreeParams& p, std::mt19937_64* rng, int mtry)
      : t_(t), p_(p), rng_(rng), mtry_(mtry) {}

  Tree build(std::vector<std::size_t> idx) {
    grow(idx, 0);
    return std::move(tree_);
  }

private:
  struct Split {
    int feature{-1};
    double threshold{0.0};
    double score{0.0};
  };

  std::vector<int> candidate_features() {
    std::vector<int> all(kNumFeatures);
    std::iota(all.begin(), all.end(), 0);
    if (!rng_ || mtry_ >= static_cast<int>(kNumFeatures)) return all;
    const auto m = static_cast<std::size_t>(std::max(1, mtry_));
    for (std::size_t i = 0; i < m; ++i) std::swap(all[i], all[i + draw_below(*rng_, all.size() - i)]);
    all.resize(m);
    std::sort(all.begin(), all.end());
    return all;
  }

  Split best_split(std::vector<std::size_t>& idx, const Histogram& parent) {
    const auto n = idx.size();
    Split best;
    best.score = weighted_gini(parent, static_cast<double>(n));
    const auto min_leaf = static_cast<std::size_t>(std::max(1, p_.min_leaf));
    for (int f : candidate_features()) {
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const double va = (*t_.x[a])[f], vb = (*t_.x[b])[f];
        return va < vb || (va == vb && a < b);
      });
      Histogram left{};
      for (std::size_t p = 0; p + 1 < n; ++p) {
        left[t_.y[idx[p]]] += 1.0;
        const double v = (*t_.x[idx[p]])[f];
        if (v == (*t_.x[idx[p + 1]])[f]) continue;
        const std::size_t nl = p + 1, nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        Histogram right{};
        for (int c = 0; c < kNumLevels; ++c) right[c] = parent[c] - left[c];
        const double score = weighted_gini(left, static_cast<double>(nl)) + weighted_gini(right, static_cast<double>(nr));
        if (score < best.score) best = {f, v, score};
      }
    }
    return best;
  }

  int grow(std::vector<std::size_t>& idx, int depth) {
    Histogram h{};
    for (auto i : idx) h[t_.y[i]] += 1.0;
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back({});
    const bool pure = std::count_if(h.begin(), h.end(), [](double c) { return c > 0; }) <= 1;
    const auto min_leaf = static_cast<std::size_t>(std::max(1, p_.min_leaf));
    Split s;
    if (!pure && depth < p_.max_depth && idx.size() >= 2 * min_leaf) s = best_split(idx, h);
    if (s.feature < 0) {
      tree_.nodes[id].histogram = h;
      return id;
    }
    std::vector<std::size_t> left, right;
    for (auto i : idx) ((*t_.x[i])[s.feature] <= s.threshold ? left : right).push_back(i);
    std::sort(left.begin(), left.end());
    std::sort(right.begin(), right.end());
    idx.clear();
    idx.shrink_to_fit();
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    auto& node = tree_.nodes[id];
    node.feature = s.feature;
    node.threshold = s.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  const Training& t_;
  TreeParams p_;
  std::mt19937_64* rng_;
  int mtry_;
  Tree tree_;
};

const TreeNode& leaf_for(const Tree& tree, const Row& x) {
  int i = 0;
  while (tree.nodes[i].feature >= 0) {
    const auto& n = tree.nodes[i];
    i = x[n.feature] <= n.threshold ? n.left : n.right;
  }
  return tree.nodes[i];
}

Histogram normalized(const Histogram& h) {
  double s = 0.0;
  for (double c : h) s += c;
  Histogram out{};
  if (s > 0)
    for (int c = 0; c < kNumLevels; ++c) out[c] = h[c] / s;
  return out;
}

Prediction from_distribution(const Histogram& d) {
  Prediction p;
  p.distribution = d;
  int arg = 0;
  for (int c = 1; c < kNumLevels; ++c)
    if (d[c] > d[arg]) arg = c;
  p.level = static_cast<HydrationLevel>(arg);
  p.confidence = d[arg];
  return p;
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Tree: return "tree";
    case ModelKind::Forest: return "forest";
    case ModelKind::NBayes: return "nbayes";
  }
  return "?";
}

ModelKind model_kind_from_string(std::string_view text) {
  if (text == "tree") return ModelKind::Tree;
  if (text == "forest") return ModelKind::Forest;
  if (text == "nbayes") return ModelKind::NBayes;
  fail(ErrorCode::InvalidArgument, "model kind must be tree|forest|nbayes, got '" + std::string(text) + "'");
}

std::string display_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Tree: return "Decision Tree";
    case ModelKind::Forest: return "Random Forest";
    case ModelKind::NBayes: return "Naive Bayes";
  }
  return "?";
}

HydrationModel train_tree(const Dataset& data, const TreeParams& params) {
  const auto t = prepare(data);
  HydrationModel m;
  m.kind = ModelKind::Tree;
  m.feature_order_hash = features::feature_order_hash();
  m.spec.kind = ModelKind::Tree;
  m.spec.tree = params;
  m.constant = single_class(t.counts);
  std::vector<std::size_t> idx(t.y.size());
  std::iota(idx.begin(), idx.end(), 0);
  m.trees.push_back(TreeBuilder(t, params, nullptr, static_cast<int>(kNumFeatures)).build(std::move(idx)));
  return m;
}

HydrationModel train_forest(const Dataset& data, const ForestParams& params) {
  const auto t = prepare(data);
  if (params.n_trees < 1) fail(ErrorCode::InvalidArgument, "n_trees must be >= 1");
  HydrationModel m;
  m.kind = ModelKind::Forest;
  m.feature_order_hash = features::feature_order_hash();
  m.spec.kind = ModelKind::Forest;
  m.spec.forest = params;
  m.spec.tree = params.tree;
  m.constant = single_class(t.counts);
  std::uint64_t state = params.seed;
  const std::size_t n = t.y.size();
  for (int k = 0; k < params.n_trees; ++k) {
    std::mt19937_64 rng(splitmix64(state));
    std::vector<std::size_t> idx(n);
    if (params.bootstrap) {
      for (auto& i : idx) i = draw_below(rng, n);
      std::sort(idx.begin(), idx.end());
    } else {
      std::iota(idx.begin(), idx.end(), 0);
    }
    m.trees.push_back(TreeBuilder(t, params.tree, &rng, params.mtry).build(std::move(idx)));
  }
  return m;
}

HydrationModel train_nbayes(const Dataset& data) {
  const auto t = prepare(data);
  HydrationModel m;
  m.kind = ModelKind::NBayes;
  m.feature_order_hash = features::feature_order_hash();
  m.spec.kind = ModelKind::NBayes;
  m.constant = single_class(t.counts);
  auto& nb = m.nbayes;
  const double total = static_cast<double>(t.y.size());
  for (int c = 0; c < kNumLevels; ++c) nb.prior[c] = t.counts[c] / total;
  for (std::size_t i = 0; i < t.y.size(); ++i)
    for (std::size_t f = 0; f < kNumFeatures; ++f) nb.mean[t.y[i]][f] += (*t.x[i])[f];
  for (int c = 0; c < kNumLevels; ++c)
    if (t.counts[c] > 0)
      for (auto& v : nb.mean[c]) v /= t.counts[c];
  for (std::size_t i = 0; i < t.y.size(); ++i)
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      const double d = (*t.x[i])[f] - nb.mean[t.y[i]][f];
      nb.variance[t.y[i]][f] += d * d;
    }
  for (int c = 0; c < kNumLevels; ++c)
    for (auto& v : nb.variance[c]) v = std::max(t.counts[c] > 0 ? v / t.counts[c] : 0.0, kVarianceFloor);
  return m;
}

HydrationModel train(const Dataset& data, const ModelSpec& spec) {
  switch (spec.kind) {
    case ModelKind::Tree: return train_tree(data, spec.tree);
    case ModelKind::Forest: return train_forest(data, spec.forest);
    case ModelKind::NBayes: return train_nbayes(data);
  }
  fail(ErrorCode::InvalidArgument, "unknown model kind");
}

Prediction predict(const HydrationModel& model, const FeatureVector& x, std::string_view expected_hash) {
  if (model.feature_order_hash != expected_hash)
    fail(ErrorCode::FeatureOrderMismatch,
         "model feature order " + model.feature_order_hash + " does not match " + std::string(expected_hash));
  for (std::size_t f = 0; f < kNumFeatures; ++f)
    if (!std::isfinite(x.values[f]))
      fail(ErrorCode::NonFiniteFeature, "feature " + features::feature_names()[f] + " is not finite");
  if (model.constant) {
    Histogram d{};
    d[static_cast<std::size_t>(*model.constant)] = 1.0;
    return from_distribution(d);
  }
  Histogram d{};
  switch (model.kind) {
    case ModelKind::Tree:
    case ModelKind::Forest: {
      for (const auto& tree : model.trees) {
        const auto leaf = normalized(leaf_for(tree, x.values).histogram);
        for (int c = 0; c < kNumLevels; ++c) d[c] += leaf[c];
      }
      for (auto& v : d) v /= static_cast<double>(model.trees.size());
      break;
    }
    case ModelKind::NBayes: {
      const auto& nb = model.nbayes;
      std::array<double, kNumLevels> logp{};
      double top = -INFINITY;
      for (int c = 0; c < kNumLevels; ++c) {
        if (!(nb.prior[c] > 0)) {
          logp[c] = -INFINITY;
          continue;
        }
        double lp = std::log(nb.prior[c]);
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
          const double var = nb.variance[c][f];
          const double dx = x.values[f] - nb.mean[c][f];
          lp -= 0.5 * (std::log(2.0 * std::numbers::pi * var) + dx * dx / var);
        }
        logp[c] = lp;
        top = std::max(top, lp);
      }
      double z = 0.0;
      for (int c = 0; c < kNumLevels; ++c) {
        d[c] = std::isfinite(logp[c]) ? std::exp(logp[c] - top) : 0.0;
        z += d[c];
      }
      for (auto& v : d) v /= z;
      break;
    }
  }
  return from_distribution(d);
}

// --- evaluation ---------------------------------------------------------------

ConfusionMetrics metrics_from_confusion(const Confusion& m) {
  double total = 0.0, correct = 0.0;
  std::array<double, kNumLevels> row{}, col{};
  for (int a = 0; a < kNumLevels; ++a)
    for (int b = 0; b < kNumLevels; ++b) {
      const auto v = static_cast<double>(m[a][b]);
      total += v;
      row[a] += v;
      col[b] += v;
      if (a == b) correct += v;
    }
  ConfusionMetrics out;
  if (total == 0) return out;
  out.accuracy = correct / total;
  double sens = 0.0, spec = 0.0;
  int n_sens = 0, n_spec = 0;
  for (int c = 0; c < kNumLevels; ++c) {
    if (row[c] == 0) continue;
    const double tp = static_cast<double>(m[c][c]);
    sens += tp / row[c];
    ++n_sens;
    const double negatives = total - row[c];
    if (negatives > 0) {
      const double fp = col[c] - tp;
      spec += (negatives - fp) / negatives;
      ++n_spec;
    }
  }
  out.sensitivity = sens / n_sens;
  // A fold holding one class has no negatives to mislabel.
  out.specificity = n_spec ? spec / n_spec : 1.0;
  return out;
}

namespace {

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(v.size()));
  return out;
}

}  // namespace

MetricsReport cross_validate(const Dataset& data, const ModelSpec& spec, int k, std::uint64_t seed) {
  if (k < 2) fail(ErrorCode::TooFewRows, "k must be at least 2");
  if (data.rows.size() < static_cast<std::size_t>(k))
    fail(ErrorCode::TooFewRows, std::to_string(data.rows.size()) + " rows cannot fill " + std::to_string(k) + " folds");
  prepare(data);

  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  std::mt19937_64 rng(seed);
  std::size_t next = 0;
  for (int c = 0; c < kNumLevels; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.rows.size(); ++i)
      if (static_cast<int>(*data.rows[i].label) == c) members.push_back(i);
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[draw_below(rng, i)]);
    // Continue dealing where the previous class stopped so fold sizes stay even.
    for (auto i : members) folds[next++ % folds.size()].push_back(i);
  }

  MetricsReport rep;
  rep.kind = spec.kind;
  rep.k = k;
  rep.seed = seed;
  std::vector<double> acc, sens, specf;
  for (auto& test : folds) {
    std::sort(test.begin(), test.end());
    std::vector<bool> held(data.rows.size(), false);
    for (auto i : test) held[i] = true;
    Dataset train_part;
    for (std::size_t i = 0; i < data.rows.size(); ++i)
      if (!held[i]) train_part.rows.push_back(data.rows[i]);
    const auto model = train(train_part, spec);
    FoldResult fr;
    fr.test_rows = test;
    Confusion cm{};
    for (auto i : test) {
      const auto p = predict(model, data.rows[i], model.feature_order_hash);
      fr.predicted.push_back(p.level);
      ++cm[static_cast<std::size_t>(*data.rows[i].label)][static_cast<std::size_t>(p.level)];
      ++rep.confusion[static_cast<std::size_t>(*data.rows[i].label)][static_cast<std::size_t>(p.level)];
    }
    const auto m = metrics_from_confusion(cm);
    fr.accuracy = m.accuracy;
    fr.sensitivity = m.sensitivity;
    fr.specificity = m.specificity;
    acc.push_back(m.accuracy);
    sens.push_back(m.sensitivity);
    specf.push_back(m.specificity);
    rep.folds.push_back(std::move(fr));
  }
  rep.accuracy = mean_std(acc);
  rep.sensitivity = mean_std(sens);
  rep.specificity = mean_std(specf);
  return rep;
}

std::string report_json(const MetricsReport& r) {
  auto ms = [](const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}}; };
  json j;
  j["kind"] = to_string(r.kind);
  j["k"] = r.k;
  j["seed"] = r.seed;
  j["accuracy"] = ms(r.accuracy);
  j["sensitivity"] = ms(r.sensitivity);
  j["specificity"] = ms(r.specificity);
  j["confusion"] = r.confusion;
  j["labels"] = json::array();
  for (int c = 0; c < kNumLevels; ++c) j["labels"].push_back(to_string(static_cast<HydrationLevel>(c)));
  const auto pooled = metrics_from_confusion(r.confusion);
  j["pooled"] = {{"accuracy", pooled.accuracy}, {"sensitivity", pooled.sensitivity}, {"specificity", pooled.specificity}};
  j["folds"] = json::array();
  for (const auto& f : r.folds)
    j["folds"].push_back({{"accuracy", f.accuracy},
                          {"sensitivity", f.sensitivity},
                          {"specificity", f.specificity},
                          {"n", f.test_rows.size()}});
  j["std_definition"] = "population standard deviation across folds";
  return j.dump(2);
}

namespace {

std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++w;
  return w;
}

std::string centered(const std::string& s, std::size_t width) {
  const std::size_t pad = width - display_width(s);
  return std::string(pad / 2, ' ') + s + std::string(pad - pad / 2, ' ');
}

std::string cell(const MeanStd& m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f\xC2\xB1%.1f", 100.0 * m.mean, 100.0 * m.std);
  return buf;
}

}  // namespace

std::string render_table(std::span<const std::pair<std::string, MetricsReport>> columns) {
  const std::array<std::string, 3> metrics{"Accuracy", "Sensitivity", "Specificity"};
  std::vector<std::vector<std::string>> grid;
  grid.push_back({""});
  for (const auto& [name, _] : columns) grid[0].push_back(name);
  for (std::size_t r = 0; r < metrics.size(); ++r) {
    std::vector<std::string> line{metrics[r]};
    for (const auto& [_, rep] : columns) {
      const MeanStd& m = r == 0 ? rep.accuracy : r == 1 ? rep.sensitivity : rep.specificity;
      line.push_back(cell(m));
    }
    grid.push_back(std::move(line));
  }
  std::vector<std::size_t> widths(grid[0].size(), 0);
  for (const auto& line : grid)
    for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], display_width(line[c]));

  std::string rule = "+";
  for (auto w : widths) rule += std::string(w + 2, '-') + "+";
  rule += "\n";

  std::string out = rule;
  for (const auto& line : grid) {
    out += "|";
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c == 0) out += " " + line[c] + std::string(widths[c] - display_width(line[c]), ' ') + " |";
      else out += " " + centered(line[c], widths[c]) + " |";
    }
    out += "\n" + rule;
  }

  bool same_k = !columns.empty();
  for (const auto& [_, rep] : columns) same_k = same_k && rep.k == columns.front().second.k;
  out += "Cells are mean\xC2\xB1std in percent; \xC2\xB1 is the population standard deviation across ";
  out += same_k ? "the " + std::to_string(columns.front().second.k) + " stratified cross-validation folds.\n"
                : "the stratified cross-validation folds.\n";
  out += "Sensitivity and specificity are one-vs-rest, macro-averaged over the hydration levels in each fold.\n";
  return out;
}

// --- model files ---------------------------------------------------------------

namespace {

json tree_json(const Tree& t) {
  json nodes = json::array();
  for (const auto& n : t.nodes) {
    if (n.feature >= 0) nodes.push_back({{"f", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}});
    else nodes.push_back({{"h", n.histogram}});
  }
  return nodes;
}

[[noreturn]] void corrupt(const std::string& what) { fail(ErrorCode::CorruptModel, "model file: " + what); }

Tree tree_from_json(const json& nodes) {
  if (!nodes.is_array() || nodes.empty()) corrupt("tree without nodes");
  Tree t;
  const int n = static_cast<int>(nodes.size());
  for (int i = 0; i < n; ++i) {
    const auto& j = nodes[i];
    TreeNode node;
    if (j.contains("f")) {
      node.feature = j.at("f").get<int>();
      node.threshold = j.at("t").get<double>();
      node.left = j.at("l").get<int>();
      node.right = j.at("r").get<int>();
      if (node.feature < 0 || node.feature >= static_cast<int>(kNumFeatures)) corrupt("split feature out of range");
      if (!std::isfinite(node.threshold)) corrupt("non-finite threshold");
      if (node.left <= i || node.right <= i || node.left >= n || node.right >= n) corrupt("bad child index");
    } else {
      node.histogram = j.at("h").get<Histogram>();
      double s = 0.0;
      for (double c : node.histogram) {
        if (!(c >= 0) || !std::isfinite(c)) corrupt("bad leaf histogram");
        s += c;
      }
      if (!(s > 0)) corrupt("empty leaf histogram");
    }
    t.nodes.push_back(node);
  }
  return t;
}

}  // namespace

std::string serialize_model(const HydrationModel& m) {
  json params;
  params["constant"] = m.constant ? json(static_cast<int>(*m.constant)) : json(nullptr);
  switch (m.kind) {
    case ModelKind::Tree:
      params["max_depth"] = m.spec.tree.max_depth;
      params["min_leaf"] = m.spec.tree.min_leaf;
      params["nodes"] = m.trees.empty() ? json::array() : tree_json(m.trees.front());
      break;
    case ModelKind::Forest: {
      const auto& f = m.spec.forest;
      params["n_trees"] = f.n_trees;
      params["seed"] = f.seed;
      params["bootstrap"] = f.bootstrap;
      params["mtry"] = f.mtry;
      params["max_depth"] = f.tree.max_depth;
      params["min_leaf"] = f.tree.min_leaf;
      params["trees"] = json::array();
      for (const auto& t : m.trees) params["trees"].push_back(tree_json(t));
      break;
    }
    case ModelKind::NBayes:
      params["prior"] = m.nbayes.prior;
      params["mean"] = m.nbayes.mean;
      params["variance"] = m.nbayes.variance;
      break;
  }
  json doc{{"v", 1},
           {"kind", to_string(m.kind)},
           {"feature_order_hash", m.feature_order_hash},
           {"params", params}};
  if (!m.manifest.empty()) doc["manifest"] = json::parse(m.manifest);
  return doc.dump();
}

HydrationModel parse_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    corrupt(std::string("not valid JSON (") + e.what() + ")");
  }
  try {
    if (!doc.is_object() || !doc.contains("v")) corrupt("missing version");
    if (!doc["v"].is_number_integer() || doc["v"].get<int>() != 1)
      fail(ErrorCode::VersionMismatch, "model file version " + doc["v"].dump() + ", expected 1");
    HydrationModel m;
    try {
      m.kind = model_kind_from_string(doc.at("kind").get<std::string>());
    } catch (const Error&) {
      corrupt("unknown kind");
    }
    m.spec.kind = m.kind;
    m.feature_order_hash = doc.at("feature_order_hash").get<std::string>();
    const auto& p = doc.at("params");
    if (!p.at("constant").is_null()) {
      const int c = p.at("constant").get<int>();
      if (c < 0 || c >= kNumLevels) corrupt("constant level out of range");
      m.constant = static_cast<HydrationLevel>(c);
    }
    switch (m.kind) {
      case ModelKind::Tree:
        m.spec.tree = {p.at("max_depth").get<int>(), p.at("min_leaf").get<int>()};
        m.trees.push_back(tree_from_json(p.at("nodes")));
        break;
      case ModelKind::Forest: {
        auto& f = m.spec.forest;
        f.n_trees = p.at("n_trees").get<int>();
        f.seed = p.at("seed").get<std::uint64_t>();
        f.bootstrap = p.at("bootstrap").get<bool>();
        f.mtry = p.at("mtry").get<int>();
        f.tree = {p.at("max_depth").get<int>(), p.at("min_leaf").get<int>()};
        m.spec.tree = f.tree;
        for (const auto& t : p.at("trees")) m.trees.push_back(tree_from_json(t));
        if (m.trees.empty() || static_cast<int>(m.trees.size()) != f.n_trees) corrupt("tree count mismatch");
        break;
      }
      case ModelKind::NBayes: {
        auto& nb = m.nbayes;
        nb.prior = p.at("prior").get<Histogram>();
        nb.mean = p.at("mean").get<decltype(nb.mean)>();
        nb.variance = p.at("variance").get<decltype(nb.variance)>();
        double s = 0.0;
        for (int c = 0; c < kNumLevels; ++c) {
          if (!(nb.prior[c] >= 0)) corrupt("negative prior");
          s += nb.prior[c];
          for (std::size_t f = 0; f < kNumFeatures; ++f) {
            if (!std::isfinite(nb.mean[c][f])) corrupt("non-finite mean");
            if (!(nb.variance[c][f] >= kVarianceFloor) || !std::isfinite(nb.variance[c][f]))
              corrupt("variance below floor");
          }
        }
        if (std::abs(s - 1.0) > 1e-9) corrupt("priors do not sum to one");
        break;
      }
    }
    if (doc.contains("manifest")) m.manifest = doc["manifest"].dump();
    return m;
  } catch (const json::exception& e) {
    corrupt(std::string("missing or mistyped field (") + e.what() + ")");
  }
}

void save_model(const HydrationModel& model, const std::string& path) {
  write_file_atomic(path, serialize_model(model));
}

HydrationModel load_model(const std::string& path) { return parse_model(read_file(path)); }

}  // namespace hydra::learn
