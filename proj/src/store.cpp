#include "hydra/store.hpp"

#include <algorithm>
#include <cstdio>

#include <json.hpp>

#include "hydra/file_io.hpp"
#include "hydra/manifest.hpp"
#include "hydra/numeric_text.hpp"

namespace hydra::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json info_to_json(const SessionInfo& s) {
  return json{{"id", s.id},
              {"subject", s.subject},
              {"start_time", s.start_time},
              {"rate", s.rate},
              {"samples", s.samples},
              {"duration", s.duration()},
              {"annotation_revision", s.annotation_revision}};
}

SessionInfo info_from_series(const std::string& id, const std::string& subject, const SampleSeries& s) {
  return {id, subject, s.start_time, s.rate, s.size(), 0};
}

[[noreturn]] void not_found(const std::string& what, const std::string& id) {
  throw Error(ErrorCode::NotFound, what + " '" + id + "' not found");
}

}  // namespace

bool valid_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

std::string session_info_json(const SessionInfo& info) { return info_to_json(info).dump(); }

std::string annotations_json(const StoredAnnotations& a) {
  auto j = json::parse(serialize_annotation_json(a.document));
  j["revision"] = a.revision;
  return j.dump();
}

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) {
  try {
    fs::create_directories(root_ / "sessions");
    fs::create_directories(root_ / "models");
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorCode::Io, std::string("cannot create data directory: ") + e.what());
  }
  reconcile();
}

fs::path SessionStore::session_dir(const std::string& id) const { return root_ / "sessions" / id; }

void SessionStore::reconcile() {
  std::lock_guard lock(index_mu_);
  std::map<std::string, SessionInfo> indexed;
  const auto index_path = root_ / "index.json";
  if (fs::exists(index_path)) {
    try {
      const auto j = json::parse(read_file(index_path.string()));
      for (const auto& s : j.at("sessions")) {
        SessionInfo info;
        info.id = s.at("id").get<std::string>();
        info.subject = s.value("subject", "");
        info.start_time = s.at("start_time").get<double>();
        info.rate = s.at("rate").get<double>();
        info.samples = s.at("samples").get<std::size_t>();
        indexed[info.id] = info;
      }
      next_id_ = j.value("next_id", std::uint64_t{1});
    } catch (const json::exception&) {
      indexed.clear();  // unreadable index: rebuilt from the directories below
    }
  }

  index_.clear();
  for (const auto& entry : fs::directory_iterator(root_ / "sessions")) {
    const auto name = entry.path().filename().string();
    if (!entry.is_directory()) continue;
    if (name.starts_with(".")) {  // unfinished create
      fs::remove_all(entry.path());
      continue;
    }
    if (!valid_id(name) || !fs::exists(entry.path() / "raw.csv")) continue;
    if (auto it = indexed.find(name); it != indexed.end()) {
      index_[name] = it->second;
    } else {
      try {
        const auto series = parse_e4_csv(read_file((entry.path() / "raw.csv").string()));
        index_[name] = info_from_series(name, "", series);
      } catch (const Error&) {
        continue;
      }
    }
  }
  for (const auto& [id, _] : index_) {
    unsigned long long n = 0;
    if (std::sscanf(id.c_str(), "s%llu", &n) == 1) next_id_ = std::max<std::uint64_t>(next_id_, n + 1);
  }
  write_index();
}

void SessionStore::write_index() const {
  json sessions = json::array();
  for (const auto& [_, info] : index_) {
    auto j = info_to_json(info);
    j.erase("annotation_revision");
    j.erase("duration");
    sessions.push_back(std::move(j));
  }
  write_file_atomic((root_ / "index.json").string(),
                    json{{"v", 1}, {"next_id", next_id_}, {"sessions", std::move(sessions)}}.dump(1));
}

std::shared_ptr<std::shared_mutex> SessionStore::lock_for(const std::string& id) const {
  std::lock_guard lock(locks_mu_);
  auto& m = locks_[id];
  if (!m) m = std::make_shared<std::shared_mutex>();
  return m;
}

std::vector<SessionInfo> SessionStore::list() const {
  std::vector<SessionInfo> out;
  {
    std::lock_guard lock(index_mu_);
    for (const auto& [_, info] : index_) out.push_back(info);
  }
  for (auto& info : out) info.annotation_revision = annotations(info.id).revision;
  return out;
}

SessionInfo SessionStore::info(const std::string& id) const {
  SessionInfo out;
  {
    std::lock_guard lock(index_mu_);
    const auto it = index_.find(id);
    if (it == index_.end()) not_found("session", id);
    out = it->second;
  }
  out.annotation_revision = annotations(id).revision;
  return out;
}

SessionInfo SessionStore::create(std::string_view csv, const std::string& subject) {
  const auto series = parse_e4_csv(csv);
  std::lock_guard lock(index_mu_);
  std::string id;
  do {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%04llu", static_cast<unsigned long long>(next_id_++));
    id = buf;
  } while (fs::exists(session_dir(id)));
  const auto tmp = root_ / "sessions" / ("." + id);
  try {
    fs::remove_all(tmp);
    fs::create_directories(tmp / "cache");
    write_file_atomic((tmp / "raw.csv").string(), std::string(csv));
    fs::rename(tmp, session_dir(id));
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorCode::Io, std::string("cannot store session: ") + e.what());
  }
  auto info = info_from_series(id, subject, series);
  index_[id] = info;
  write_index();
  return info;
}

std::string SessionStore::raw_csv(const std::string& id) const {
  info(id);
  std::shared_lock lock(*lock_for(id));
  return read_file((session_dir(id) / "raw.csv").string());
}

SessionRecording SessionStore::load(const std::string& id) const {
  const auto meta = info(id);
  SessionRecording rec;
  rec.id = id;
  rec.subject = meta.subject;
  rec.series = parse_e4_csv(raw_csv(id));
  const auto a = annotations(id);
  if (a.revision > 0) {
    rec.annotations = a.document.track;
    rec.artifact_spans = a.document.artifacts;
  }
  return rec;
}

StoredAnnotations SessionStore::read_annotations(const std::string& id) const {
  const auto path = session_dir(id) / "annotations.json";
  if (!fs::exists(path)) return {};
  try {
    const auto j = json::parse(read_file(path.string()));
    StoredAnnotations out;
    out.revision = j.at("revision").get<std::uint64_t>();
    out.document = parse_annotation_json(j.at("document").dump());
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, "annotations of '" + id + "' are unreadable: " + e.what());
  }
}

StoredAnnotations SessionStore::annotations(const std::string& id) const {
  {
    std::lock_guard lock(index_mu_);
    if (!index_.count(id)) not_found("session", id);
  }
  std::shared_lock lock(*lock_for(id));
  return read_annotations(id);
}

StoredAnnotations SessionStore::put_annotations(const std::string& id, const AnnotationDocument& doc,
                                                std::uint64_t expected_revision) {
  const auto meta = info(id);
  const TimeSpan span{meta.start_time, meta.start_time + meta.duration()};
  validate(doc.track, span);
  std::unique_lock lock(*lock_for(id));
  const auto current = read_annotations(id);
  if (current.revision != expected_revision)
    throw Error(ErrorCode::Conflict, "annotations of '" + id + "' are at revision " +
                                         std::to_string(current.revision) + ", not " +
                                         std::to_string(expected_revision));
  StoredAnnotations next{doc, current.revision + 1};
  json j{{"revision", next.revision}, {"document", json::parse(serialize_annotation_json(doc))}};
  write_file_atomic((session_dir(id) / "annotations.json").string(), j.dump());
  return next;
}

std::optional<std::string> SessionStore::read_cache(const std::string& id, const std::string& key) const {
  info(id);
  std::shared_lock lock(*lock_for(id));
  const auto path = session_dir(id) / "cache" / (key + ".json");
  if (!fs::exists(path)) return std::nullopt;
  return read_file(path.string());
}

void SessionStore::write_cache(const std::string& id, const std::string& key, const std::string& text) {
  info(id);
  std::unique_lock lock(*lock_for(id));
  fs::create_directories(session_dir(id) / "cache");
  write_file_atomic((session_dir(id) / "cache" / (key + ".json")).string(), text);
}

std::string SessionStore::save_model(const learn::HydrationModel& model) {
  const auto text = learn::serialize_model(model);
  const auto id = "m" + fnv1a64_hex(text).substr(0, 12);
  write_file_atomic((root_ / "models" / (id + ".json")).string(), text);
  return id;
}

learn::HydrationModel SessionStore::load_model(const std::string& model_id) const {
  if (!valid_id(model_id)) not_found("model", model_id);
  const auto path = root_ / "models" / (model_id + ".json");
  if (!fs::exists(path)) not_found("model", model_id);
  auto model = learn::parse_model(read_file(path.string()));
  if (!model.manifest.empty() && manifest_of(model).feature_order_hash != model.feature_order_hash)
    throw Error(ErrorCode::CorruptModel, "model '" + model_id + "' disagrees with its manifest on the feature layout");
  return model;
}

std::vector<std::string> SessionStore::list_models() const {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(root_ / "models"))
    if (entry.path().extension() == ".json") out.push_back(entry.path().stem().string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace hydra::service
