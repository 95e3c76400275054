#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "hydra/learn.hpp"
#include "hydra/signal.hpp"

namespace hydra::service {

struct SessionInfo {
  std::string id;
  std::string subject;
  double start_time{0.0};
  double rate{4.0};
  std::size_t samples{0};
  std::uint64_t annotation_revision{0};  // 0: never annotated

  double duration() const { return static_cast<double>(samples) / rate; }
};

std::string session_info_json(const SessionInfo& info);

struct StoredAnnotations {
  AnnotationDocument document;
  std::uint64_t revision{0};
};

// JSON of the annotation document with its revision added.
std::string annotations_json(const StoredAnnotations& a);

// Plain-file session storage:
//   <root>/index.json
//   <root>/sessions/<id>/raw.csv           written once, never modified
//   <root>/sessions/<id>/annotations.json  {"revision":n,"document":{...}}
//   <root>/sessions/<id>/cache/<key>.json  decomposition results
//   <root>/models/<id>.json
// Every file is written to a temporary name and renamed into place. On
// open the index is reconciled with the session directories, so a crash
// between the two leaves nothing inconsistent.
//
// Each session has its own reader/writer lock; annotation writes are
// compare-and-swap on the revision.
class SessionStore {
public:
  explicit SessionStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  std::vector<SessionInfo> list() const;
  SessionInfo info(const std::string& id) const;  // throws NotFound
  // Parses and stores an E4-style CSV; parse errors propagate.
  SessionInfo create(std::string_view csv, const std::string& subject = {});
  // Samples plus saved annotations and artifact spans.
  SessionRecording load(const std::string& id) const;
  std::string raw_csv(const std::string& id) const;

  StoredAnnotations annotations(const std::string& id) const;
  // Validates against the session span. Throws Conflict when
  // expected_revision is not the stored one.
  StoredAnnotations put_annotations(const std::string& id, const AnnotationDocument& doc,
                                    std::uint64_t expected_revision);

  std::optional<std::string> read_cache(const std::string& id, const std::string& key) const;
  void write_cache(const std::string& id, const std::string& key, const std::string& text);

  // Model ids are derived from the file contents.
  std::string save_model(const learn::HydrationModel& model);
  learn::HydrationModel load_model(const std::string& model_id) const;  // NotFound, CorruptModel
  std::vector<std::string> list_models() const;

private:
  std::filesystem::path session_dir(const std::string& id) const;
  std::shared_ptr<std::shared_mutex> lock_for(const std::string& id) const;
  void reconcile();
  void write_index() const;  // index_mu_ held
  StoredAnnotations read_annotations(const std::string& id) const;

  std::filesystem::path root_;
  mutable std::mutex index_mu_;
  std::map<std::string, SessionInfo> index_;
  std::uint64_t next_id_{1};
  mutable std::mutex locks_mu_;
  mutable std::map<std::string, std::shared_ptr<std::shared_mutex>> locks_;
};

// Session and model ids are restricted to [A-Za-z0-9_-], 1 to 64 chars.
bool valid_id(std::string_view id);

}  // namespace hydra::service
