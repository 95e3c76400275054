#include "hydra/config_json.hpp"

#include <string>

namespace hydra {
namespace {

using nlohmann::json;

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "config: expected an object");
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::InvalidArgument, std::string("config: field '") + key + "' has the wrong type");
  }
}

}  // namespace

namespace preprocess {

void to_json(json& j, const PreprocessConfig& c) {
  j = json{{"cutoff_hz", c.cutoff_hz},
           {"filter_order", c.filter_order},
           {"hanning_width", c.hanning_width},
           {"artifact_method", c.artifact_method == ArtifactMethod::Linear ? "linear" : "spline"}};
}

void from_json(const json& j, PreprocessConfig& c) {
  read(j, "cutoff_hz", c.cutoff_hz);
  read(j, "filter_order", c.filter_order);
  read(j, "hanning_width", c.hanning_width);
  std::string method;
  read(j, "artifact_method", method);
  if (method == "linear") c.artifact_method = ArtifactMethod::Linear;
  else if (method == "spline") c.artifact_method = ArtifactMethod::SplineLike;
  else if (!method.empty()) throw Error(ErrorCode::InvalidArgument, "config: artifact_method must be linear|spline");
}

}  // namespace preprocess

namespace decompose {

void to_json(json& j, const BatemanParams& p) { j = json::array({p.tau_rise, p.tau_decay}); }

void from_json(const json& j, BatemanParams& p) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw Error(ErrorCode::InvalidArgument, "config: tau must be [rise, decay]");
  p.tau_rise = j[0].get<double>();
  p.tau_decay = j[1].get<double>();
}

void to_json(json& j, const DecomposeConfig& c) {
  j = json{{"amp_threshold", c.amp_threshold},
           {"onset_fraction", c.onset_fraction},
           {"tonic_window", c.tonic_window},
           {"slew", c.slew},
           {"driver_smooth", c.driver_smooth},
           {"mask_decay_multiple", c.mask_decay_multiple},
           {"min_duration", c.min_duration},
           {"beta", c.beta},
           {"sparsity", c.sparsity},
           {"max_evaluations", c.max_evaluations},
           {"noise_floor_k", c.noise_floor_k}};
}

void from_json(const json& j, DecomposeConfig& c) {
  read(j, "amp_threshold", c.amp_threshold);
  read(j, "onset_fraction", c.onset_fraction);
  read(j, "tonic_window", c.tonic_window);
  read(j, "slew", c.slew);
  read(j, "driver_smooth", c.driver_smooth);
  read(j, "mask_decay_multiple", c.mask_decay_multiple);
  read(j, "min_duration", c.min_duration);
  read(j, "beta", c.beta);
  read(j, "sparsity", c.sparsity);
  read(j, "max_evaluations", c.max_evaluations);
  read(j, "noise_floor_k", c.noise_floor_k);
}

}  // namespace decompose

namespace features {

void to_json(json& j, const WindowSpec& w) {
  j = json{{"activity_window", w.activity_window}, {"sub_window", w.sub_window}, {"sub_step", w.sub_step}};
}

void from_json(const json& j, WindowSpec& w) {
  read(j, "activity_window", w.activity_window);
  read(j, "sub_window", w.sub_window);
  read(j, "sub_step", w.sub_step);
}

void to_json(json& j, const FeatureConfig& c) {
  j = json{{"preprocess", c.preprocess},
           {"window", c.window},
           {"decompose", c.decompose},
           {"tau", c.taus},
           {"optimize_tau", c.optimize_taus}};
}

void from_json(const json& j, FeatureConfig& c) {
  read(j, "preprocess", c.preprocess);
  read(j, "window", c.window);
  read(j, "decompose", c.decompose);
  read(j, "tau", c.taus);
  read(j, "optimize_tau", c.optimize_taus);
}

}  // namespace features
}  // namespace hydra
