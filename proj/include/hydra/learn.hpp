#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hydra/features.hpp"

namespace hydra::learn {

using features::Dataset;
using features::FeatureVector;
using features::kNumFeatures;

enum class ModelKind { Tree, Forest, NBayes };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view text);  // throws InvalidArgument

struct TreeParams {
  int max_depth{12};
  int min_leaf{5};
  bool operator==(const TreeParams&) const = default;
};

struct ForestParams {
  int n_trees{50};
  std::uint64_t seed{7};
  bool bootstrap{true};
  int mtry{6};  // features tried per split; >= 36 means all
  TreeParams tree{};
  bool operator==(const ForestParams&) const = default;
};

struct ModelSpec {
  ModelKind kind{ModelKind::Tree};
  TreeParams tree;
  ForestParams forest;
  bool operator==(const ModelSpec&) const = default;
};

using Histogram = std::array<double, kNumLevels>;

// Internal node when feature >= 0: x[feature] <= threshold goes left.
struct TreeNode {
  int feature{-1};
  double threshold{0.0};
  int left{-1};
  int right{-1};
  Histogram histogram{};  // class counts, leaves only

  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  bool operator==(const Tree&) const = default;
};

struct NaiveBayes {
  Histogram prior{};
  std::array<std::array<double, kNumFeatures>, kNumLevels> mean{};
  std::array<std::array<double, kNumFeatures>, kNumLevels> variance{};

  bool operator==(const NaiveBayes&) const = default;
};

inline constexpr double kVarianceFloor = 1e-9;

struct HydrationModel {
  ModelKind kind{ModelKind::Tree};
  std::string feature_order_hash;
  // Set when the training data held a single class; predict returns it
  // with confidence 1.
  std::optional<HydrationLevel> constant;
  std::vector<Tree> trees;  // one for a tree model
  NaiveBayes nbayes;
  ModelSpec spec;
  std::string manifest;  // JSON text of the run that produced the model, may be empty

  bool operator==(const HydrationModel&) const = default;
};

// Gini splits; candidate thresholds are the observed values, so a split
// sends x <= (largest value on the left) left. Ties go to the lowest
// feature index, then the lowest threshold. Throws EmptyDataset.
HydrationModel train_tree(const Dataset& data, const TreeParams& params = {});
HydrationModel train_forest(const Dataset& data, const ForestParams& params = {});
HydrationModel train_nbayes(const Dataset& data);
HydrationModel train(const Dataset& data, const ModelSpec& spec);

struct Prediction {
  HydrationLevel level{HydrationLevel::WellHydrated};
  double confidence{0.0};
  Histogram distribution{};  // sums to one
};

// Throws FeatureOrderMismatch when the model was trained on a different
// column layout than `expected_hash`, NonFiniteFeature on NaN/inf input.
// Argmax ties go to the lower (less dehydrated) level.
Prediction predict(const HydrationModel& model, const FeatureVector& x,
                   std::string_view expected_hash = features::feature_order_hash());

struct MeanStd {
  double mean{0.0};
  double std{0.0};
};

using Confusion = std::array<std::array<std::size_t, kNumLevels>, kNumLevels>;  // [true][predicted]

struct FoldResult {
  std::vector<std::size_t> test_rows;
  std::vector<HydrationLevel> predicted;
  double accuracy{0.0};
  double sensitivity{0.0};
  double specificity{0.0};
};

// Fold metrics: accuracy, and one-vs-rest recall and specificity averaged
// over the classes that have positives (recall) or negatives (specificity)
// in the fold. Mean and std (population) are taken across folds.
struct MetricsReport {
  ModelKind kind{ModelKind::Tree};
  int k{10};
  std::uint64_t seed{7};
  MeanStd accuracy;
  MeanStd sensitivity;
  MeanStd specificity;
  Confusion confusion{};  // summed over folds
  std::vector<FoldResult> folds;
};

struct ConfusionMetrics {
  double accuracy{0.0};
  double sensitivity{0.0};
  double specificity{0.0};
};

// Macro metrics of one confusion matrix, same averaging rule as the folds.
ConfusionMetrics metrics_from_confusion(const Confusion& m);

// Stratified k-fold: each class is shuffled with `seed` and dealt to folds
// in turn. Throws TooFewRows when k < 2 or the data has fewer than k rows.
MetricsReport cross_validate(const Dataset& data, const ModelSpec& spec, int k = 10, std::uint64_t seed = 7);

std::string report_json(const MetricsReport& report);

// Text table with one column per classifier and Accuracy / Sensitivity /
// Specificity rows; cells are mean±std in percent with one decimal.
std::string render_table(std::span<const std::pair<std::string, MetricsReport>> columns);
std::string display_name(ModelKind kind);

// Model file: {"v":1,"kind":..,"feature_order_hash":..,"params":{..}}.
std::string serialize_model(const HydrationModel& model);
HydrationModel parse_model(std::string_view text);  // VersionMismatch, CorruptModel
void save_model(const HydrationModel& model, const std::string& path);
HydrationModel load_model(const std::string& path);

}  // namespace hydra::learn
