#include "hydra/stream.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <httplib.h>
#include <json.hpp>

#include "hydra/manifest.hpp"
#include "hydra/numeric_text.hpp"

namespace hydra::stream {

using nlohmann::json;

std::string to_json(const WindowPrediction& p) {
  json j{{"type", "prediction"},
         {"window_start", p.window_start},
         {"window_end", p.window_end},
         {"level", to_string(p.level)},
         {"level_index", static_cast<int>(p.level)},
         {"confidence", p.confidence},
         {"distribution", p.distribution}};
  return j.dump();
}

std::string to_json(const AlertEvent& e) {
  json j{{"type", "alert"},
         {"time", e.time},
         {"from", to_string(e.from_level)},
         {"to", to_string(e.to_level)},
         {"confidence", e.confidence},
         {"message", e.message}};
  return j.dump();
}

// --- state machine --------------------------------------------------------------

StateMachine::StateMachine(int debounce_n) : debounce_n_(debounce_n) {
  if (debounce_n < 1) throw Error(ErrorCode::InvalidArgument, "debounce_n must be >= 1");
}

std::optional<AlertEvent> StateMachine::advance(const WindowPrediction& p) {
  if (current_ && p.level == *current_) {
    candidate_.reset();
    count_ = 0;
    return std::nullopt;
  }
  if (candidate_ && *candidate_ == p.level) {
    ++count_;
  } else {
    candidate_ = p.level;
    count_ = 1;
  }
  if (count_ < debounce_n_) return std::nullopt;

  const auto previous = current_;
  current_ = p.level;
  candidate_.reset();
  count_ = 0;
  if (!previous) return std::nullopt;  // first settled level: no change to report
  AlertEvent e;
  e.time = p.window_end;
  e.from_level = *previous;
  e.to_level = p.level;
  e.confidence = p.confidence;
  e.message = "hydration level changed from " + std::string(to_string(*previous)) + " to " +
              std::string(to_string(p.level));
  return e;
}

// --- sinks ------------------------------------------------------------------------

void JsonLinesSink::on_prediction(const WindowPrediction& p) {
  if (predictions_) out_ << to_json(p) << '\n' << std::flush;
}

void JsonLinesSink::on_alert(const AlertEvent& e) { out_ << to_json(e) << '\n' << std::flush; }

WebhookSink::WebhookSink(std::string url, std::size_t max_queue) : max_queue_(max_queue) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error(ErrorCode::InvalidArgument, "webhook url needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  scheme_host_ = url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url.substr(slash);
  worker_ = std::thread([this] { run(); });
}

WebhookSink::~WebhookSink() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

void WebhookSink::on_alert(const AlertEvent& e) {
  {
    std::lock_guard lock(mu_);
    if (queue_.size() >= max_queue_) {
      ++failed_;
      return;
    }
    queue_.push_back(to_json(e));
  }
  cv_.notify_all();
}

void WebhookSink::flush() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return queue_.empty() && !busy_; });
}

void WebhookSink::run() {
  httplib::Client client(scheme_host_);
  client.set_connection_timeout(2);
  client.set_read_timeout(5);
  std::unique_lock lock(mu_);
  while (true) {
    cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
    if (queue_.empty()) return;
    auto body = std::move(queue_.front());
    queue_.pop_front();
    busy_ = true;
    lock.unlock();
    auto res = client.Post(path_, body, "application/json");
    if (res && res->status >= 200 && res->status < 300) ++delivered_;
    else ++failed_;
    lock.lock();
    busy_ = false;
    cv_.notify_all();
  }
}

void EventFeed::publish(std::string type, std::string json_text) {
  {
    std::lock_guard lock(mu_);
    events_.push_back({++seq_, std::move(type), std::move(json_text)});
    while (events_.size() > capacity_) events_.pop_front();
  }
  cv_.notify_all();
}

std::vector<EventFeed::Event> EventFeed::since(std::uint64_t after, int timeout_ms) {
  std::unique_lock lock(mu_);
  if (timeout_ms > 0)
    cv_.wait_for(lock, std::chrono::milliseconds(timeout_ms), [&] { return closed_ || seq_ > after; });
  std::vector<Event> out;
  for (const auto& e : events_)
    if (e.seq > after) out.push_back(e);
  return out;
}

std::uint64_t EventFeed::last_seq() const {
  std::lock_guard lock(mu_);
  return seq_;
}

void EventFeed::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool EventFeed::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

void FeedSink::on_prediction(const WindowPrediction& p) { feed_->publish("prediction", to_json(p)); }
void FeedSink::on_alert(const AlertEvent& e) { feed_->publish("alert", to_json(e)); }

// --- inference ----------------------------------------------------------------------

EngineConfig engine_config_for(const learn::HydrationModel& model) {
  EngineConfig cfg;
  cfg.features = manifest_of(model).features;
  return cfg;
}

features::FeatureVector context_features(const SampleSeries& filtered, const EngineConfig& config) {
  const auto& fc = config.features;
  const auto smoothed = preprocess::hanning_smooth(filtered, fc.preprocess.hanning_width);
  const auto c = decompose::cda(smoothed, fc.taus, fc.decompose);
  const auto d = decompose::dda(smoothed, fc.taus, fc.decompose);
  const double end = filtered.end_time();
  return features::featurize_window(c, d, {end - fc.window.activity_window, end}, fc.window);
}

WindowPrediction infer_context(const SampleSeries& filtered, const learn::HydrationModel& model,
                               const EngineConfig& config) {
  const auto fv = context_features(filtered, config);
  const auto p = learn::predict(model, fv);
  const double end = filtered.end_time();
  return {end - config.features.window.activity_window, end, p.level, p.confidence, p.distribution};
}

namespace {

std::size_t samples_for(double seconds, double rate) {
  return static_cast<std::size_t>(std::llround(seconds * rate));
}

}  // namespace

StreamEngine::StreamEngine(learn::HydrationModel model, EngineConfig config)
    : model_(std::move(model)),
      config_(std::move(config)),
      filter_(config_.features.preprocess.cutoff_hz, config_.rate, config_.features.preprocess.filter_order),
      machine_(config_.debounce_n) {
  if (model_.feature_order_hash != features::feature_order_hash())
    throw Error(ErrorCode::FeatureOrderMismatch, "model was trained on a different feature layout");
  preprocess::validate(config_.features.preprocess, config_.rate);
  features::validate(config_.features.window, config_.rate);
  capacity_ = samples_for(config_.context_seconds, config_.rate);
  window_samples_ = samples_for(config_.features.window.activity_window, config_.rate);
  step_samples_ = config_.sliding ? std::max<std::size_t>(1, samples_for(config_.sliding_step, config_.rate))
                                  : window_samples_;
  if (capacity_ < window_samples_)
    throw Error(ErrorCode::InvalidArgument, "context must hold at least one activity window");
  if (config_.context_seconds < config_.features.decompose.min_duration)
    throw Error(ErrorCode::InvalidArgument, "context shorter than the decomposition minimum");
}

void StreamEngine::accept(double value) {
  buffer_.push_back(filter_.step(value));
  if (buffer_.size() > capacity_) buffer_.pop_front();
  ++next_index_;
}

std::optional<WindowPrediction> StreamEngine::maybe_infer() {
  if (next_index_ < capacity_ || next_index_ % step_samples_ != 0) return std::nullopt;
  SampleSeries ctx;
  ctx.rate = config_.rate;
  ctx.start_time = *t0_ + static_cast<double>(next_index_ - capacity_) / config_.rate;
  ctx.values.assign(buffer_.begin(), buffer_.end());

  const double end = ctx.end_time();
  const double start = end - config_.features.window.activity_window;
  std::erase_if(gaps_, [&](const ArtifactSpan& g) { return g.t_end < ctx.start_time; });
  for (const auto& g : gaps_)
    if (g.overlaps(start, end)) return std::nullopt;

  const auto p = infer_context(ctx, model_, config_);
  for (auto* s : sinks_) s->on_prediction(p);
  if (const auto alert = machine_.advance(p))
    for (auto* s : sinks_) s->on_alert(*alert);
  return p;
}

std::optional<WindowPrediction> StreamEngine::push_sample(double t, double eda) {
  if (!std::isfinite(t) || !std::isfinite(eda)) throw Error(ErrorCode::InvalidArgument, "non-finite sample");
  if (!t0_) {
    t0_ = t;
    last_t_ = t;
    last_raw_ = eda;
    accept(eda);
    return maybe_infer();
  }
  if (t < last_t_)
    throw Error(ErrorCode::TimestampRegression,
                "sample at " + format_double(t) + " precedes " + format_double(last_t_));
  const auto steps = static_cast<std::uint64_t>(std::llround((t - last_t_) * config_.rate));
  if (steps == 0) return std::nullopt;
  std::optional<WindowPrediction> out;
  if (steps - 1 > config_.max_gap_samples) {
    const double a = *t0_ + static_cast<double>(next_index_ - 1) / config_.rate;
    const double b = *t0_ + static_cast<double>(next_index_ - 1 + steps) / config_.rate;
    gaps_.push_back({a, b, ArtifactReason::DeviceOff});
  }
  for (std::uint64_t k = 1; k < steps; ++k) {
    accept(last_raw_ + (eda - last_raw_) * static_cast<double>(k) / static_cast<double>(steps));
    if (auto p = maybe_infer()) out = p;
  }
  accept(eda);
  if (auto p = maybe_infer()) out = p;
  last_t_ = t;
  last_raw_ = eda;
  return out;
}

namespace {

// Calls fn(context) for every inference boundary of the engine whose
// activity window stays clear of the recording's artifact spans.
template <typename Fn>
void for_each_context(const SessionRecording& rec, const EngineConfig& config, Fn&& fn) {
  const auto& s = rec.series;
  const std::size_t cap = samples_for(config.context_seconds, s.rate);
  const std::size_t win = samples_for(config.features.window.activity_window, s.rate);
  const std::size_t step = config.sliding ? std::max<std::size_t>(1, samples_for(config.sliding_step, s.rate)) : win;
  if (s.size() < cap || cap == 0) return;
  const auto filtered =
      preprocess::butterworth_lowpass(s, config.features.preprocess.cutoff_hz, config.features.preprocess.filter_order);
  const auto spans = normalize_spans(rec.artifact_spans, rec.span());
  for (std::size_t n = (cap + step - 1) / step * step; n <= s.size(); n += step) {
    const auto ctx = filtered.slice(n - cap, cap);
    const double end = ctx.end_time();
    const double start = end - config.features.window.activity_window;
    if (std::any_of(spans.begin(), spans.end(), [&](const ArtifactSpan& a) { return a.overlaps(start, end); }))
      continue;
    fn(ctx);
  }
}

}  // namespace

std::vector<WindowPrediction> batch_predictions(const SessionRecording& rec, const learn::HydrationModel& model,
                                                const EngineConfig& config) {
  std::vector<WindowPrediction> out;
  for_each_context(rec, config, [&](const SampleSeries& ctx) { out.push_back(infer_context(ctx, model, config)); });
  return out;
}

features::Dataset context_dataset(const SessionRecording& rec, const EngineConfig& config) {
  if (!rec.annotations) throw Error(ErrorCode::NoLabeledWindows, "recording " + rec.id + " has no annotations");
  features::Dataset data;
  for_each_context(rec, config, [&](const SampleSeries& ctx) {
    auto fv = context_features(ctx, config);
    fv.label = level_at(*rec.annotations, 0.5 * (fv.window_start + ctx.end_time()));
    fv.session = rec.id;
    data.rows.push_back(std::move(fv));
  });
  if (data.rows.empty()) throw Error(ErrorCode::NoLabeledWindows, "recording " + rec.id + " is shorter than the context");
  return data;
}

ReplaySummary replay(const SessionRecording& rec, const learn::HydrationModel& model, const EngineConfig& config,
                     double speed, std::span<AlertSink* const> sinks, const std::atomic<bool>* stop) {
  ReplaySummary summary;
  if (rec.series.empty()) return summary;
  auto cfg = config;
  cfg.rate = rec.series.rate;
  StreamEngine engine(model, cfg);
  CollectingSink collect;
  engine.add_sink(&collect);
  for (auto* s : sinks) engine.add_sink(s);

  const bool paced = std::isfinite(speed) && speed > 0;
  const auto wall0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < rec.series.size(); ++i) {
    if (stop && stop->load()) break;
    if (paced) {
      const double offset = static_cast<double>(i) / rec.series.rate / speed;
      std::this_thread::sleep_until(wall0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                std::chrono::duration<double>(offset)));
    }
    engine.push_sample(rec.series.time_at(i), rec.series.values[i]);
  }
  summary.predictions = std::move(collect.predictions);
  summary.alerts = std::move(collect.alerts);
  summary.gaps = engine.gaps();
  return summary;
}

// --- sample socket ----------------------------------------------------------------

std::string format_sample_line(double t, double eda) {
  return "{\"t\":" + format_double(t) + ",\"eda\":" + format_double(eda) + "}\n";
}

std::pair<double, double> parse_sample_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error&) {
    throw Error(ErrorCode::InvalidArgument, "sample line is not JSON");
  }
  if (!j.is_object() || !j.contains("t") || !j.contains("eda") || !j["t"].is_number() || !j["eda"].is_number())
    throw Error(ErrorCode::InvalidArgument, "sample line needs numeric t and eda");
  return {j["t"].get<double>(), j["eda"].get<double>()};
}

namespace {

bool send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const auto n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

SampleServer::SampleServer(SessionRecording recording, double speed, int port)
    : recording_(std::move(recording)), speed_(speed) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::Io, "socket() failed");
  int yes = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 4) != 0) {
    ::close(listen_fd_);
    throw Error(ErrorCode::Io, "cannot listen on port " + std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  worker_ = std::thread([this] { run(); });
}

SampleServer::~SampleServer() {
  stop_ = true;
  worker_.join();
  ::close(listen_fd_);
}

void SampleServer::run() {
  while (!stop_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    if (::poll(&pfd, 1, 50) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    const auto& s = recording_.series;
    const bool paced = std::isfinite(speed_) && speed_ > 0;
    const auto wall0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < s.size() && !stop_; ++i) {
      if (paced)
        std::this_thread::sleep_until(wall0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                  std::chrono::duration<double>(i / s.rate / speed_)));
      if (!send_all(fd, format_sample_line(s.time_at(i), s.values[i]))) break;
    }
    ::close(fd);
  }
}

std::size_t consume_socket(const std::string& host, int port, StreamEngine& engine, const std::atomic<bool>* stop) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
    throw Error(ErrorCode::Io, "cannot resolve " + host);
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0 || ::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    ::freeaddrinfo(res);
    if (fd >= 0) ::close(fd);
    throw Error(ErrorCode::Io, "cannot connect to " + host + ":" + std::to_string(port));
  }
  ::freeaddrinfo(res);

  std::size_t count = 0;
  std::string pending;
  char buf[4096];
  try {
    while (!(stop && stop->load())) {
      pollfd pfd{fd, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, 100);
      if (ready < 0) break;
      if (ready == 0) continue;
      const auto n = ::recv(fd, buf, sizeof buf, 0);
      if (n <= 0) break;
      pending.append(buf, static_cast<std::size_t>(n));
      std::size_t pos;
      while ((pos = pending.find('\n')) != std::string::npos) {
        const auto line = trim(std::string_view(pending).substr(0, pos));
        if (!line.empty()) {
          const auto [t, eda] = parse_sample_line(line);
          engine.push_sample(t, eda);
          ++count;
        }
        pending.erase(0, pos + 1);
      }
    }
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  return count;
}

}  // namespace hydra::stream
