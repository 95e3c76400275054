#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hydra/decompose.hpp"
#include "hydra/preprocess.hpp"
#include "hydra/signal.hpp"

namespace hydra::features {

struct WindowSpec {
  double activity_window{5.0};  // s
  int sub_window{8};            // samples
  int sub_step{1};              // samples
};

// Throws InvalidArgument unless 1 <= sub_step and sub_window fits in an
// activity window at `rate`, with room for at least two sub-windows.
void validate(const WindowSpec& spec, double rate);

struct Window {
  double start{0.0};
  double end{0.0};
  double length() const { return end - start; }
  double midpoint() const { return 0.5 * (start + end); }
};

// Consecutive non-overlapping activity windows from the first sample; the
// trailing partial window is dropped. Throws SeriesTooShort.
std::vector<Window> window_segments(const SampleSeries& series, const WindowSpec& spec);

inline constexpr std::size_t kNumBase = 12;
inline constexpr std::size_t kNumFeatures = 3 * kNumBase;

struct BaseFeatures {
  double cda_nscr{0.0};
  double cda_latency{0.0};
  double cda_ampsum{0.0};
  double cda_iscr{0.0};
  double cda_phasic_mean{0.0};
  double cda_phasic_max{0.0};
  double cda_tonic_mean{0.0};
  double dda_nscr{0.0};
  double dda_latency{0.0};
  double dda_ampsum{0.0};
  double dda_areasum{0.0};
  double dda_tonic_mean{0.0};

  std::array<double, kNumBase> as_array() const;
};

const std::array<std::string_view, kNumBase>& base_feature_names();

// Column layout of a FeatureVector: for each base feature in the order
// above, <name>_mean, <name>_var, <name>_std.
const std::array<std::string, kNumFeatures>& feature_names();

// FNV-1a 64 of the newline-joined names, as 16 hex digits.
std::string feature_order_hash(std::span<const std::string> names);
std::string feature_order_hash();

// Latency is the first onset minus window start, or the window length when
// the window holds no onset. Onsets count when start <= onset < end.
// Throws WindowOutOfRange unless the window lies within both decompositions.
BaseFeatures base_features(const decompose::Decomposition& cda, const decompose::DiscreteDecomposition& dda,
                           const Window& window);

struct FeatureVector {
  std::array<double, kNumFeatures> values{};
  std::optional<HydrationLevel> label;
  double window_start{0.0};
  std::string session;
};

// Population mean / variance / std of each base feature. Each column is
// summed in sorted order, so the result does not depend on row order.
// Throws TooFewSubWindows for fewer than two rows.
FeatureVector aggregate(std::span<const BaseFeatures> rows);

// Base features of every sub-window inside `window`, aggregated.
FeatureVector featurize_window(const decompose::Decomposition& cda, const decompose::DiscreteDecomposition& dda,
                               const Window& window, const WindowSpec& spec);

struct FeatureConfig {
  preprocess::PreprocessConfig preprocess;
  WindowSpec window;
  decompose::DecomposeConfig decompose;
  decompose::BatemanParams taus;
  bool optimize_taus{false};
};

struct Dataset {
  std::vector<FeatureVector> rows;
  std::array<std::size_t, kNumLevels> class_counts() const;
};

struct SessionDecompositions {
  SampleSeries preprocessed;
  decompose::Decomposition cda;
  decompose::DiscreteDecomposition dda;
};

// Preprocess, then CDA and DDA with the configured (or fitted) taus.
SessionDecompositions decompose_session(const SessionRecording& recording, const FeatureConfig& config);

// One labeled row per activity window that does not overlap an artifact
// span; the label is the annotated level at the window midpoint. Rows are
// sorted by window_start. Throws NoLabeledWindows when the recording has no
// annotations or every window was excluded.
Dataset featurize_session(const SessionRecording& recording, const FeatureConfig& config);

// Dataset CSV: header of the 36 feature names then label,session,window_start.
// Numbers use the shortest text that reads back to the same double.
std::string write_dataset_csv(const Dataset& data);
Dataset read_dataset_csv(std::string_view text);  // throws MalformedDataset

// JSON manifest written next to a dataset CSV.
std::string dataset_manifest_json(const Dataset& data, const FeatureConfig& config);

}  // namespace hydra::features
