#include <atomic>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <regex>

#include <httplib.h>

#include "hydra/numeric_text.hpp"
#include "hydra/service.hpp"

namespace hydra::service {

namespace {

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::Conflict: return 409;
    case ErrorCode::Io:
    case ErrorCode::CorruptModel: return 500;
    default: return 400;
  }
}

// "transitions[2].t: not increasing" -> "transitions[2].t"
std::optional<std::string> field_of(const std::string& message) {
  static const std::regex re(R"(^([A-Za-z_][A-Za-z0-9_]*(\[\d+\])?(\.[A-Za-z_][A-Za-z0-9_]*(\[\d+\])?)*): )");
  std::smatch m;
  if (std::regex_search(message, m, re)) return m[1].str();
  return std::nullopt;
}

std::string opaque_id() {
  static std::atomic<std::uint64_t> counter{0};
  const auto now = std::chrono::system_clock::now().time_since_epoch().count();
  return fnv1a64_hex(std::to_string(now) + "/" + std::to_string(++counter)).substr(0, 10);
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_internal(httplib::Response& res, const std::string& detail) {
  const auto id = opaque_id();
  std::cerr << "hydra: internal error " << id << ": " << detail << std::endl;
  send_json(res, json{{"error", "Internal"}, {"message", "internal error"}, {"id", id}}, 500);
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    const int status = status_for(e.code());
    if (status == 500) {
      send_internal(res, std::string(to_string(e.code())) + ": " + e.what());
      return;
    }
    json body{{"error", to_string(e.code())}, {"message", e.what()}};
    if (const auto field = field_of(e.what())) body["field"] = *field;
    send_json(res, body, status);
  } catch (const json::exception& e) {
    send_json(res, json{{"error", "InvalidArgument"}, {"message", e.what()}}, 400);
  } catch (const std::exception& e) {
    send_internal(res, e.what());
  }
}

json body_json(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error&) {
    throw Error(ErrorCode::InvalidArgument, "request body is not valid JSON");
  }
}

std::optional<double> query_number(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  const auto v = parse_double(req.get_param_value(key));
  if (!v) throw Error(ErrorCode::InvalidArgument, std::string(key) + ": expected a number");
  return v;
}

}  // namespace

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  std::atomic<bool> stopping{false};

  explicit Impl(Service& s) : service(s) {}

  void routes() {
    using httplib::Request;
    using httplib::Response;
    const std::string id = "([A-Za-z0-9_-]+)";

    server.Get("/api/sessions", [this](const Request&, Response& res) {
      guarded(res, [&] { send_json(res, service.list_sessions()); });
    });
    server.Post("/api/sessions", [this](const Request& req, Response& res) {
      guarded(res, [&] {
        send_json(res, service.create_session(req.body, req.get_param_value("subject")), 201);
      });
    });
    server.Get("/api/sessions/" + id, [this](const Request& req, Response& res) {
      guarded(res, [&] { send_json(res, service.session(req.matches[1])); });
    });
    server.Get("/api/sessions/" + id + "/signal", [this](const Request& req, Response& res) {
      guarded(res, [&] {
        std::size_t decimate = 1;
        if (const auto d = query_number(req, "decimate")) {
          if (*d < 1 || *d != std::floor(*d)) throw Error(ErrorCode::InvalidArgument, "decimate: expected an integer >= 1");
          decimate = static_cast<std::size_t>(*d);
        }
        const auto channel = req.has_param("channel") ? req.get_param_value("channel") : "raw";
        const auto method = req.has_param("method") ? req.get_param_value("method") : "cda";
        send_json(res, service.signal(req.matches[1], channel, method, query_number(req, "from"),
                                      query_number(req, "to"), decimate));
      });
    });
    server.Get("/api/sessions/" + id + "/annotations", [this](const Request& req, Response& res) {
      guarded(res, [&] { send_json(res, service.annotations(req.matches[1])); });
    });
    server.Put("/api/sessions/" + id + "/annotations", [this](const Request& req, Response& res) {
      guarded(res, [&] { send_json(res, service.put_annotations(req.matches[1], body_json(req))); });
    });
    server.Post("/api/sessions/" + id + "/decompose", [this](const Request& req, Response& res) {
      guarded(res, [&] { send_json(res, service.decompose(req.matches[1], body_json(req))); });
    });
    server.Post("/api/train", [this](const Request& req, Response& res) {
      guarded(res, [&] { send_json(res, service.train(body_json(req)), 201); });
    });
    server.Post("/api/evaluate", [this](const Request& req, Response& res) {
      guarded(res, [&] { send_json(res, service.evaluate(body_json(req))); });
    });
    server.Get("/api/models", [this](const Request&, Response& res) {
      guarded(res, [&] { send_json(res, json{{"models", service.store().list_models()}}); });
    });
    server.Post("/api/monitor/start", [this](const Request& req, Response& res) {
      guarded(res, [&] { send_json(res, service.monitor_start(body_json(req)), 202); });
    });
    server.Post("/api/monitor/stop", [this](const Request& req, Response& res) {
      guarded(res, [&] { send_json(res, service.monitor_stop(body_json(req))); });
    });
    server.Get("/api/monitor", [this](const Request&, Response& res) {
      guarded(res, [&] { send_json(res, service.monitor_status()); });
    });
    server.Get("/api/monitor/events", [this](const Request& req, Response& res) { events(req, res); });
  }

  // Server-sent events from the feed, starting after the current last event
  // (or after ?since=seq). Events dropped from the bounded feed while a
  // client is away are not replayed.
  void events(const httplib::Request& req, httplib::Response& res) {
    auto feed = service.feed();
    std::uint64_t start = feed->last_seq();
    if (req.has_param("since")) {
      const auto v = parse_double(req.get_param_value("since"));
      if (!v || *v < 0) {
        send_json(res, json{{"error", "InvalidArgument"}, {"message", "since: expected a sequence number"}}, 400);
        return;
      }
      start = static_cast<std::uint64_t>(*v);
    }
    struct State {
      std::uint64_t last;
      bool greeted{false};
      int idle{0};
    };
    auto state = std::make_shared<State>(State{start});
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [this, feed, state](std::size_t, httplib::DataSink& sink) {
      if (!state->greeted) {
        state->greeted = true;
        const std::string hello = "retry: 2000\n\n";
        return sink.write(hello.data(), hello.size());
      }
      if (stopping || feed->closed()) {
        sink.done();
        return true;
      }
      const auto events = feed->since(state->last, 250);
      if (events.empty()) {
        if (++state->idle >= 60) {  // keep-alive comment every ~15 s
          state->idle = 0;
          const std::string ping = ": keep-alive\n\n";
          return sink.write(ping.data(), ping.size());
        }
        return sink.is_writable();
      }
      state->idle = 0;
      std::string out;
      for (const auto& e : events) {
        out += "id: " + std::to_string(e.seq) + "\nevent: " + e.type + "\ndata: " + e.json + "\n\n";
        state->last = e.seq;
      }
      return sink.write(out.data(), out.size());
    });
  }
};

HttpServer::HttpServer(Service& service, std::optional<std::filesystem::path> ui_dir)
    : impl_(std::make_unique<Impl>(service)) {
  impl_->routes();
  if (ui_dir && !impl_->server.set_mount_point("/", ui_dir->string()))
    throw Error(ErrorCode::Io, "UI directory '" + ui_dir->string() + "' does not exist");
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host)
                              : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  impl_->stopping = true;
  impl_->server.stop();
}

}  // namespace hydra::service
