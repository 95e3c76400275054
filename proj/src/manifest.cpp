#include "hydra/manifest.hpp"

#include <json.hpp>

#include "hydra/config_json.hpp"

namespace hydra {

using nlohmann::json;

namespace {

json model_spec_json(const learn::ModelSpec& s) {
  return json{{"kind", learn::to_string(s.kind)},
              {"max_depth", s.tree.max_depth},
              {"min_leaf", s.tree.min_leaf},
              {"n_trees", s.forest.n_trees},
              {"bootstrap", s.forest.bootstrap},
              {"mtry", s.forest.mtry}};
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::InvalidArgument, std::string("manifest: field '") + key + "' has the wrong type");
  }
}

}  // namespace

std::string manifest_json(const RunManifest& m) {
  json j{{"v", kManifestVersion},
         {"features", m.features},
         {"model", model_spec_json(m.model)},
         {"seed", m.seed},
         {"feature_order_hash", m.feature_order_hash},
         {"versions", {{"model", kModelFormatVersion}, {"annotations", kAnnotationFormatVersion}}}};
  return j.dump();
}

RunManifest parse_manifest(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "manifest must be a JSON object");
  if (j.contains("v") && j["v"] != kManifestVersion)
    throw Error(ErrorCode::VersionMismatch, "manifest version " + j["v"].dump());
  RunManifest m;
  read(j, "features", m.features);
  read(j, "seed", m.seed);
  read(j, "feature_order_hash", m.feature_order_hash);
  if (j.contains("model")) {
    const auto& s = j["model"];
    if (!s.is_object()) throw Error(ErrorCode::InvalidArgument, "manifest: model must be an object");
    std::string kind = std::string(learn::to_string(m.model.kind));
    read(s, "kind", kind);
    m.model.kind = learn::model_kind_from_string(kind);
    read(s, "max_depth", m.model.tree.max_depth);
    read(s, "min_leaf", m.model.tree.min_leaf);
    read(s, "n_trees", m.model.forest.n_trees);
    read(s, "bootstrap", m.model.forest.bootstrap);
    read(s, "mtry", m.model.forest.mtry);
  }
  m.model.forest.tree = m.model.tree;
  m.model.forest.seed = m.seed;
  return m;
}

learn::HydrationModel train_with_manifest(const features::Dataset& data, const RunManifest& manifest) {
  auto spec = manifest.model;
  spec.forest.seed = manifest.seed;
  spec.forest.tree = spec.tree;
  auto model = learn::train(data, spec);
  model.manifest = manifest_json(manifest);
  return model;
}

RunManifest manifest_of(const learn::HydrationModel& model) {
  if (model.manifest.empty()) return {};
  return parse_manifest(model.manifest);
}

}  // namespace hydra
