#include <string>

#include <json.hpp>

#include "hydra/signal.hpp"

namespace hydra {

using nlohmann::json;

namespace {

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorCode::InvalidAnnotation, where + key + ": missing");
  return *it;
}

double require_number(const json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number()) throw Error(ErrorCode::InvalidAnnotation, where + key + ": expected number");
  return v.get<double>();
}

HydrationLevel require_level(const json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number_integer()) throw Error(ErrorCode::InvalidAnnotation, where + key + ": expected integer 0..3");
  try {
    return level_from_int(v.get<int>());
  } catch (const Error&) {
    throw Error(ErrorCode::InvalidAnnotation, where + key + ": expected integer 0..3");
  }
}

}  // namespace

AnnotationDocument parse_annotation_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidAnnotation, std::string("annotation JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::InvalidAnnotation, "annotation document must be an object");
  const auto& version = require(doc, "v", "");
  if (!version.is_number_integer() || version.get<int>() != 1) {
    throw Error(ErrorCode::VersionMismatch, "annotation schema version must be 1");
  }

  AnnotationDocument out;
  out.track.initial_level = require_level(doc, "initial_level", "");
  if (auto it = doc.find("transitions"); it != doc.end()) {
    if (!it->is_array()) throw Error(ErrorCode::InvalidAnnotation, "transitions: expected array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string where = "transitions[" + std::to_string(i) + "].";
      const auto& item = (*it)[i];
      if (!item.is_object()) throw Error(ErrorCode::InvalidAnnotation, where + ": expected object");
      out.track.transitions.push_back({require_number(item, "t", where), require_level(item, "level", where)});
    }
  }
  if (auto it = doc.find("artifacts"); it != doc.end()) {
    if (!it->is_array()) throw Error(ErrorCode::InvalidAnnotation, "artifacts: expected array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string where = "artifacts[" + std::to_string(i) + "].";
      const auto& item = (*it)[i];
      if (!item.is_object()) throw Error(ErrorCode::InvalidAnnotation, where + ": expected object");
      ArtifactSpan span;
      span.t_start = require_number(item, "t_start", where);
      span.t_end = require_number(item, "t_end", where);
      const auto& reason = require(item, "reason", where);
      if (!reason.is_string()) throw Error(ErrorCode::InvalidAnnotation, where + "reason: expected string");
      span.reason = artifact_reason_from_string(reason.get<std::string>());
      if (!(span.t_end > span.t_start)) {
        throw Error(ErrorCode::InvalidAnnotation, where + "t_end: must exceed t_start");
      }
      out.artifacts.push_back(span);
    }
  }
  validate(out.track);
  return out;
}

std::string serialize_annotation_json(const AnnotationDocument& doc) {
  json out;
  out["v"] = 1;
  out["initial_level"] = static_cast<int>(doc.track.initial_level);
  out["transitions"] = json::array();
  for (const auto& tr : doc.track.transitions) {
    out["transitions"].push_back({{"t", tr.time}, {"level", static_cast<int>(tr.level)}});
  }
  out["artifacts"] = json::array();
  for (const auto& span : doc.artifacts) {
    out["artifacts"].push_back(
        {{"t_start", span.t_start}, {"t_end", span.t_end}, {"reason", std::string(to_string(span.reason))}});
  }
  return out.dump(2);
}

}  // namespace hydra
