#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "hydra/features.hpp"
#include "hydra/learn.hpp"

namespace hydra {

inline constexpr int kManifestVersion = 1;
inline constexpr int kModelFormatVersion = 1;
inline constexpr int kAnnotationFormatVersion = 1;

// Everything needed to reproduce a dataset and a model from raw sessions.
// Also accepted by the CLI's --config; keys that are absent keep defaults.
struct RunManifest {
  features::FeatureConfig features;
  learn::ModelSpec model;
  std::uint64_t seed{7};
  std::string feature_order_hash{features::feature_order_hash()};
};

std::string manifest_json(const RunManifest& m);
RunManifest parse_manifest(std::string_view text);  // throws InvalidArgument

// Trains with the manifest's model spec (seed folded into the forest) and
// embeds the manifest in the model.
learn::HydrationModel train_with_manifest(const features::Dataset& data, const RunManifest& manifest);

// The manifest a model was trained under, or defaults when it carries none.
RunManifest manifest_of(const learn::HydrationModel& model);

}  // namespace hydra
