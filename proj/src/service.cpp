#include "hydra/service.hpp"

#include <cmath>
#include <cstdlib>

#include "hydra/config_json.hpp"
#include "hydra/manifest.hpp"
#include "hydra/numeric_text.hpp"
#include "hydra/preprocess.hpp"
#include "hydra/preview.hpp"

namespace hydra::service {

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::InvalidArgument, msg); }

const json& require_object(const json& body) {
  if (!body.is_object()) bad("request body must be a JSON object");
  return body;
}

std::string get_string(const json& body, const char* key, std::optional<std::string> fallback = std::nullopt) {
  const auto it = body.find(key);
  if (it == body.end()) {
    if (fallback) return *fallback;
    bad(std::string(key) + ": required");
  }
  if (!it->is_string()) bad(std::string(key) + ": expected a string");
  return it->get<std::string>();
}

template <typename T>
T get_number(const json& body, const char* key, T fallback) {
  const auto it = body.find(key);
  if (it == body.end()) return fallback;
  if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer()) bad(std::string(key) + ": expected an integer");
  } else {
    if (!it->is_number()) bad(std::string(key) + ": expected a number");
  }
  return it->get<T>();
}

// Speeds are numbers or the string "inf".
double get_speed(const json& body) {
  const auto it = body.find("speed");
  if (it == body.end()) return 1.0;
  if (it->is_string() && (*it == "inf" || *it == "infinity")) return INFINITY;
  if (!it->is_number() || it->get<double>() <= 0) bad("speed: expected a positive number or \"inf\"");
  return it->get<double>();
}

features::FeatureConfig feature_config_from(const json& body) {
  features::FeatureConfig cfg;
  try {
    if (body.contains("preprocess")) cfg.preprocess = body["preprocess"].get<preprocess::PreprocessConfig>();
    if (body.contains("decompose")) cfg.decompose = body["decompose"].get<decompose::DecomposeConfig>();
    if (body.contains("tau")) cfg.taus = body["tau"].get<decompose::BatemanParams>();
  } catch (const json::exception& e) {
    bad(std::string("decomposition settings: ") + e.what());
  }
  if (body.contains("optimize_tau")) {
    if (!body["optimize_tau"].is_boolean()) bad("optimize_tau: expected a boolean");
    cfg.optimize_taus = body["optimize_tau"].get<bool>();
  }
  return cfg;
}

RunManifest manifest_from(const json& body) {
  RunManifest m;
  if (body.contains("config")) {
    if (!body["config"].is_object()) bad("config: expected a run manifest object");
    m = parse_manifest(body["config"].dump());
  }
  if (body.contains("model")) m.model.kind = learn::model_kind_from_string(get_string(body, "model"));
  m.seed = get_number<std::uint64_t>(body, "seed", m.seed);
  m.model.forest.seed = m.seed;
  return m;
}

// Publishes engine events to the feed with the monitor's source attached.
class SourceFeedSink : public stream::AlertSink {
public:
  SourceFeedSink(std::shared_ptr<stream::EventFeed> feed, std::string source)
      : feed_(std::move(feed)), source_(std::move(source)) {}
  void on_prediction(const stream::WindowPrediction& p) override { publish("prediction", stream::to_json(p)); }
  void on_alert(const stream::AlertEvent& e) override { publish("alert", stream::to_json(e)); }

private:
  void publish(const char* type, const std::string& text) {
    auto j = json::parse(text);
    j["source"] = source_;
    feed_->publish(type, j.dump());
  }
  std::shared_ptr<stream::EventFeed> feed_;
  std::string source_;
};

void publish_status(stream::EventFeed& feed, const std::string& source, const std::string& state,
                    const std::string& message = {}) {
  json j{{"type", "status"}, {"source", source}, {"state", state}};
  if (!message.empty()) j["message"] = message;
  feed.publish("status", j.dump());
}

}  // namespace

Service::Service(std::filesystem::path data_dir)
    : store_(std::move(data_dir)), feed_(std::make_shared<stream::EventFeed>(4096)) {}

Service::~Service() { shutdown(); }

json Service::list_sessions() const {
  json out = json::array();
  for (const auto& s : store_.list()) out.push_back(json::parse(session_info_json(s)));
  return json{{"sessions", std::move(out)}};
}

json Service::create_session(std::string_view csv, const std::string& subject) {
  return json::parse(session_info_json(store_.create(csv, subject)));
}

json Service::session(const std::string& id) const {
  auto j = json::parse(session_info_json(store_.info(id)));
  const auto a = store_.annotations(id);
  j["transitions"] = a.document.track.transitions.size();
  j["artifacts"] = a.document.artifacts.size();
  return j;
}

json Service::annotations(const std::string& id) const {
  return json::parse(annotations_json(store_.annotations(id)));
}

json Service::put_annotations(const std::string& id, const json& body) {
  require_object(body);
  const auto it = body.find("revision");
  if (it == body.end() || !it->is_number_unsigned()) bad("revision: required, the revision being replaced");
  const auto expected = it->get<std::uint64_t>();
  auto doc_json = body;
  doc_json.erase("revision");
  const auto doc = parse_annotation_json(doc_json.dump());
  return json::parse(annotations_json(store_.put_annotations(id, doc, expected)));
}

json Service::signal(const std::string& id, const std::string& channel_name, const std::string& method_name,
                     std::optional<double> from, std::optional<double> to, std::size_t decimate) {
  const auto channel = preview::channel_from_string(channel_name);
  const auto method = preview::method_from_string(method_name);
  const auto rec = store_.load(id);
  const double t_from = from.value_or(rec.series.start_time);
  const double t_to = to.value_or(rec.series.end_time());

  const std::vector<double>* values = &rec.series.values;
  bool cached = false;
  SampleSeries filtered;
  preview::DecompositionPreview p;
  if (channel == preview::Channel::Filtered) {
    filtered = preprocess::preprocess_pipeline(rec, features::FeatureConfig{}.preprocess);
    values = &filtered.values;
  } else if (channel != preview::Channel::Raw) {
    const features::FeatureConfig cfg;
    const auto key = preview::cache_key(method, cfg, rec.artifact_spans);
    if (const auto hit = store_.read_cache(id, key)) {
      p = preview::parse_preview_json(*hit);
      cached = true;
    } else {
      p = preview::decompose_recording(rec, method, cfg);
      store_.write_cache(id, key, preview::preview_json(p));
    }
    values = channel == preview::Channel::Tonic ? &p.tonic : channel == preview::Channel::Phasic ? &p.phasic : &p.driver;
  }
  const auto slice = preview::select(rec.series.start_time, rec.series.rate, *values, t_from, t_to, decimate);
  json j{{"session", id},
         {"channel", preview::to_string(channel)},
         {"t0", slice.t0},
         {"step", slice.step},
         {"first_index", slice.first_index},
         {"decimate", decimate},
         {"values", slice.values},
         {"cached", cached}};
  if (channel == preview::Channel::Tonic || channel == preview::Channel::Phasic || channel == preview::Channel::Driver)
    j["method"] = preview::to_string(method);
  return j;
}

json Service::decompose(const std::string& id, const json& body) {
  require_object(body);
  const auto method = preview::method_from_string(get_string(body, "method", "cda"));
  const auto cfg = feature_config_from(body);
  const auto rec = store_.load(id);
  const auto key = preview::cache_key(method, cfg, rec.artifact_spans);
  json out;
  if (const auto hit = store_.read_cache(id, key)) {
    out = json::parse(*hit);
    out["cached"] = true;
  } else {
    const auto text = preview::preview_json(preview::decompose_recording(rec, method, cfg));
    store_.write_cache(id, key, text);
    out = json::parse(text);
    out["cached"] = false;
  }
  return out;
}

features::Dataset Service::dataset_for(const json& body, features::FeatureConfig& config) const {
  const auto it = body.find("sessions");
  if (it == body.end() || !it->is_array() || it->empty()) bad("sessions: expected a non-empty array of session ids");
  features::Dataset data;
  for (const auto& id : *it) {
    if (!id.is_string()) bad("sessions: expected session id strings");
    auto part = features::featurize_session(store_.load(id.get<std::string>()), config);
    for (auto& r : part.rows) data.rows.push_back(std::move(r));
  }
  return data;
}

json Service::train(const json& body) {
  require_object(body);
  const auto manifest = manifest_from(body);
  auto features_cfg = manifest.features;
  const auto data = dataset_for(body, features_cfg);
  const auto model = train_with_manifest(data, manifest);
  const auto model_id = store_.save_model(model);
  const auto counts = data.class_counts();
  return json{{"model_id", model_id},
              {"kind", learn::to_string(model.kind)},
              {"rows", data.rows.size()},
              {"class_counts", counts},
              {"feature_order_hash", model.feature_order_hash},
              {"manifest", json::parse(model.manifest)}};
}

json Service::evaluate(const json& body) {
  require_object(body);
  const auto manifest = manifest_from(body);
  auto features_cfg = manifest.features;
  const int k = get_number<int>(body, "k", 10);
  const auto data = dataset_for(body, features_cfg);
  auto spec = manifest.model;
  spec.forest.tree = spec.tree;
  const auto report = learn::cross_validate(data, spec, k, manifest.seed);
  auto out = json::parse(learn::report_json(report));
  const std::pair<std::string, learn::MetricsReport> column{learn::display_name(report.kind), report};
  out["table"] = learn::render_table(std::span(&column, 1));
  return out;
}

void Service::reap_finished() {
  for (auto it = monitors_.begin(); it != monitors_.end();) {
    if (it->second->done) {
      it->second->thread.join();
      it = monitors_.erase(it);
    } else {
      ++it;
    }
  }
}

json Service::monitor_start(const json& body) {
  require_object(body);
  const bool has_session = body.contains("session");
  const bool has_socket = body.contains("socket");
  if (has_session == has_socket) bad("session or socket: exactly one is required");
  const auto model = store_.load_model(get_string(body, "model_id"));
  auto cfg = stream::engine_config_for(model);
  cfg.debounce_n = get_number<int>(body, "debounce_n", cfg.debounce_n);
  if (cfg.debounce_n < 1) bad("debounce_n: must be >= 1");
  if (body.contains("sliding")) {
    if (!body["sliding"].is_boolean()) bad("sliding: expected a boolean");
    cfg.sliding = body["sliding"].get<bool>();
  }
  const double speed = get_speed(body);

  std::string source;
  std::optional<SessionRecording> rec;
  std::pair<std::string, int> addr;
  if (has_session) {
    const auto id = get_string(body, "session");
    rec = store_.load(id);
    source = "session:" + id;
  } else {
    addr = parse_bind_addr(get_string(body, "socket"));
    source = "socket:" + addr.first + ":" + std::to_string(addr.second);
  }

  std::lock_guard lock(monitors_mu_);
  reap_finished();
  if (monitors_.count(source)) throw Error(ErrorCode::Conflict, "a monitor for " + source + " is already running");
  auto mon = std::make_unique<Monitor>();
  auto* m = mon.get();
  m->thread = std::thread([this, m, source, model, cfg, speed, rec = std::move(rec), addr] {
    SourceFeedSink sink(feed_, source);
    publish_status(*feed_, source, "started");
    try {
      if (rec) {
        std::vector<stream::AlertSink*> sinks{&sink};
        stream::replay(*rec, model, cfg, speed, sinks, &m->stop);
      } else {
        stream::StreamEngine engine(model, cfg);
        engine.add_sink(&sink);
        stream::consume_socket(addr.first, addr.second, engine, &m->stop);
      }
      publish_status(*feed_, source, m->stop ? "stopped" : "finished");
    } catch (const std::exception& e) {
      publish_status(*feed_, source, "error", e.what());
    }
    m->done = true;
  });
  monitors_[source] = std::move(mon);
  return json{{"source", source}, {"debounce_n", cfg.debounce_n}, {"sliding", cfg.sliding},
              {"speed", std::isfinite(speed) ? json(speed) : json("inf")}};
}

json Service::monitor_stop(const json& body) {
  require_object(body);
  std::string only;
  if (body.contains("session")) only = "session:" + get_string(body, "session");
  else if (body.contains("socket")) {
    const auto addr = parse_bind_addr(get_string(body, "socket"));
    only = "socket:" + addr.first + ":" + std::to_string(addr.second);
  }
  std::vector<std::unique_ptr<Monitor>> stopping;
  json stopped = json::array();
  {
    std::lock_guard lock(monitors_mu_);
    if (!only.empty() && !monitors_.count(only)) throw Error(ErrorCode::NotFound, "no monitor for " + only);
    for (auto it = monitors_.begin(); it != monitors_.end();) {
      if (only.empty() || it->first == only) {
        it->second->stop = true;
        stopped.push_back(it->first);
        stopping.push_back(std::move(it->second));
        it = monitors_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& m : stopping) m->thread.join();
  return json{{"stopped", std::move(stopped)}};
}

json Service::monitor_status() const {
  std::lock_guard lock(monitors_mu_);
  json running = json::array();
  for (const auto& [source, m] : monitors_)
    if (!m->done) running.push_back(source);
  return json{{"running", std::move(running)}, {"last_event", feed_->last_seq()}};
}

void Service::shutdown() {
  monitor_stop(json::object());
  feed_->close();
}

std::pair<std::string, int> parse_bind_addr(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) bad("address must be host:port, got '" + std::string(text) + "'");
  const auto port = parse_double(text.substr(colon + 1));
  if (!port || *port != std::floor(*port) || *port < 0 || *port > 65535)
    bad("invalid port in '" + std::string(text) + "'");
  return {std::string(text.substr(0, colon)), static_cast<int>(*port)};
}

ServerConfig server_config_from_env(ServerConfig base) {
  if (const char* dir = std::getenv("HYDRA_DATA_DIR"); dir && *dir) base.data_dir = dir;
  if (const char* addr = std::getenv("HYDRA_BIND_ADDR"); addr && *addr) {
    const auto [host, port] = parse_bind_addr(addr);
    base.host = host;
    base.port = port;
  }
  return base;
}

}  // namespace hydra::service
