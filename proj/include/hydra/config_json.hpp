#pragma once

// JSON mapping of the pipeline configs. Missing keys keep their defaults,
// so a partial document overrides only what it names.

#include <json.hpp>

#include "hydra/decompose.hpp"
#include "hydra/features.hpp"
#include "hydra/preprocess.hpp"

namespace hydra::preprocess {
void to_json(nlohmann::json& j, const PreprocessConfig& c);
void from_json(const nlohmann::json& j, PreprocessConfig& c);
}  // namespace hydra::preprocess

namespace hydra::decompose {
void to_json(nlohmann::json& j, const BatemanParams& p);
void from_json(const nlohmann::json& j, BatemanParams& p);
void to_json(nlohmann::json& j, const DecomposeConfig& c);
void from_json(const nlohmann::json& j, DecomposeConfig& c);
}  // namespace hydra::decompose

namespace hydra::features {
void to_json(nlohmann::json& j, const WindowSpec& w);
void from_json(const nlohmann::json& j, WindowSpec& w);
void to_json(nlohmann::json& j, const FeatureConfig& c);
void from_json(const nlohmann::json& j, FeatureConfig& c);
}  // namespace hydra::features
