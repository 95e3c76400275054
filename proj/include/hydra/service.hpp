#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "hydra/store.hpp"
#include "hydra/stream.hpp"

namespace hydra::service {

using nlohmann::json;

// Library operations behind the HTTP API. Each takes and returns JSON so
// the HTTP layer only routes and maps errors. Request validation failures
// throw InvalidArgument.
class Service {
public:
  explicit Service(std::filesystem::path data_dir);
  ~Service();

  SessionStore& store() { return store_; }

  json list_sessions() const;
  json create_session(std::string_view csv, const std::string& subject);
  json session(const std::string& id) const;
  json annotations(const std::string& id) const;
  // body: annotation document plus "revision" (the revision being replaced)
  json put_annotations(const std::string& id, const json& body);

  // channel raw|filtered|tonic|phasic|driver; from/to default to the
  // session span; decomposed channels come from the cache when present.
  json signal(const std::string& id, const std::string& channel, const std::string& method,
              std::optional<double> from, std::optional<double> to, std::size_t decimate);
  // body: {"method":"cda"|"dda","tau":[r,d],"optimize_tau":bool,"preprocess":{..},"decompose":{..}}
  json decompose(const std::string& id, const json& body);

  // body: {"sessions":[ids],"model":"tree"|"forest"|"nbayes","seed":n,"config":{manifest}}
  json train(const json& body);
  // body: same fields plus "k"; returns the metrics report and its table
  json evaluate(const json& body);

  // body: {"session":id | "socket":"host:port","model_id":..,"debounce_n":n,"speed":x}
  json monitor_start(const json& body);
  // body: {"session"|"socket"} stops that monitor; {} stops all
  json monitor_stop(const json& body);
  json monitor_status() const;

  std::shared_ptr<stream::EventFeed> feed() const { return feed_; }
  // Stops monitors and closes the feed so event streams end.
  void shutdown();

private:
  struct Monitor {
    std::atomic<bool> stop{false};
    std::atomic<bool> done{false};
    std::thread thread;
  };

  features::Dataset dataset_for(const json& body, features::FeatureConfig& config) const;
  void reap_finished();  // monitors_mu_ held

  SessionStore store_;
  std::shared_ptr<stream::EventFeed> feed_;
  mutable std::mutex monitors_mu_;
  std::map<std::string, std::unique_ptr<Monitor>> monitors_;
};

struct ServerConfig {
  std::filesystem::path data_dir{"hydra-data"};
  std::string host{"127.0.0.1"};
  int port{8080};
  std::optional<std::filesystem::path> ui_dir;  // static files served at /
};

// HYDRA_DATA_DIR and HYDRA_BIND_ADDR ("host:port") override `base`.
ServerConfig server_config_from_env(ServerConfig base);
// Splits "host:port"; throws InvalidArgument.
std::pair<std::string, int> parse_bind_addr(std::string_view text);

// HTTP front end. Errors become JSON bodies
// {"error": code, "message": text[, "field": path][, "id": opaque]} with
// status 400 (invalid input), 404 (unknown id), 409 (stale revision or
// monitor already running) or 500 (internal; details only in the log).
class HttpServer {
public:
  HttpServer(Service& service, std::optional<std::filesystem::path> ui_dir = std::nullopt);
  ~HttpServer();

  // Binds (port 0 picks a free port) and returns the port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hydra::service
