#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "hydra/features.hpp"
#include "hydra/learn.hpp"
#include "hydra/preprocess.hpp"

namespace hydra::stream {

struct WindowPrediction {
  double window_start{0.0};
  double window_end{0.0};  // also the time the prediction is made
  HydrationLevel level{HydrationLevel::WellHydrated};
  double confidence{0.0};
  learn::Histogram distribution{};

  bool operator==(const WindowPrediction&) const = default;
};

struct AlertEvent {
  double time{0.0};
  HydrationLevel from_level{HydrationLevel::WellHydrated};
  HydrationLevel to_level{HydrationLevel::WellHydrated};
  double confidence{0.0};
  std::string message;

  bool operator==(const AlertEvent&) const = default;
};

std::string to_json(const WindowPrediction& p);
std::string to_json(const AlertEvent& e);

// Debounced level tracker. A level other than the current one must be
// predicted debounce_n times in a row to become current. The first level
// to get there only initializes the machine; later ones raise an alert.
class StateMachine {
public:
  explicit StateMachine(int debounce_n = 3);

  std::optional<AlertEvent> advance(const WindowPrediction& prediction);

  std::optional<HydrationLevel> current() const { return current_; }
  std::optional<HydrationLevel> candidate() const { return candidate_; }
  int count() const { return count_; }
  int debounce_n() const { return debounce_n_; }

private:
  int debounce_n_;
  std::optional<HydrationLevel> current_;
  std::optional<HydrationLevel> candidate_;
  int count_{0};
};

// Sinks run on the engine's thread, in registration order, and must not
// block; sinks that do I/O queue the work.
class AlertSink {
public:
  virtual ~AlertSink() = default;
  virtual void on_prediction(const WindowPrediction&) {}
  virtual void on_alert(const AlertEvent& event) = 0;
};

// JSON lines on a stream; predictions too when `predictions` is set.
class JsonLinesSink : public AlertSink {
public:
  explicit JsonLinesSink(std::ostream& out, bool predictions = false) : out_(out), predictions_(predictions) {}
  void on_prediction(const WindowPrediction& p) override;
  void on_alert(const AlertEvent& e) override;

private:
  std::ostream& out_;
  bool predictions_;
};

// POSTs each alert as JSON from a background thread. Delivery failures are
// counted, not retried.
class WebhookSink : public AlertSink {
public:
  explicit WebhookSink(std::string url, std::size_t max_queue = 1024);
  ~WebhookSink() override;
  void on_alert(const AlertEvent& e) override;
  // Blocks until the queue is drained.
  void flush();
  std::size_t delivered() const { return delivered_; }
  std::size_t failed() const { return failed_; }

private:
  void run();

  std::string scheme_host_;
  std::string path_;
  std::size_t max_queue_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::string> queue_;
  bool busy_{false};
  bool stop_{false};
  std::atomic<std::size_t> delivered_{0};
  std::atomic<std::size_t> failed_{0};
  std::thread worker_;
};

// In-process broadcast of predictions and alerts. Readers poll by sequence
// number; only the most recent `capacity` events are kept, so a slow reader
// misses events rather than stalling the engine.
class EventFeed {
public:
  struct Event {
    std::uint64_t seq{0};
    std::string type;  // "prediction" | "alert" | "status"
    std::string json;
  };

  explicit EventFeed(std::size_t capacity = 1024) : capacity_(capacity) {}

  void publish(std::string type, std::string json);
  // Events with seq > after; waits up to `timeout_ms` when there are none.
  std::vector<Event> since(std::uint64_t after, int timeout_ms = 0);
  std::uint64_t last_seq() const;
  void close();
  bool closed() const;

private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Event> events_;
  std::uint64_t seq_{0};
  bool closed_{false};
};

class FeedSink : public AlertSink {
public:
  explicit FeedSink(std::shared_ptr<EventFeed> feed) : feed_(std::move(feed)) {}
  void on_prediction(const WindowPrediction& p) override;
  void on_alert(const AlertEvent& e) override;

private:
  std::shared_ptr<EventFeed> feed_;
};

class CollectingSink : public AlertSink {
public:
  void on_prediction(const WindowPrediction& p) override { predictions.push_back(p); }
  void on_alert(const AlertEvent& e) override { alerts.push_back(e); }
  std::vector<WindowPrediction> predictions;
  std::vector<AlertEvent> alerts;
};

struct EngineConfig {
  features::FeatureConfig features;  // preprocessing, window spec, decomposition, taus
  double context_seconds{60.0};
  bool sliding{false};        // predict every sliding_step seconds instead of once per window
  double sliding_step{1.0};   // s
  int debounce_n{3};
  double rate{4.0};
  std::size_t max_gap_samples{2};  // longer holes become DeviceOff spans
};

// Engine settings from the manifest embedded in a model (taus, filter and
// window settings); stream-only fields keep their defaults.
EngineConfig engine_config_for(const learn::HydrationModel& model);

// Features of the trailing activity window of a filtered context, as the
// engine computes them.
features::FeatureVector context_features(const SampleSeries& filtered_context, const EngineConfig& config);

// Shared inference step: smooth the filtered context, decompose it, and
// classify its trailing activity window. `filtered_context` ends at the
// window end.
WindowPrediction infer_context(const SampleSeries& filtered_context, const learn::HydrationModel& model,
                               const EngineConfig& config);

class StreamEngine {
public:
  StreamEngine(learn::HydrationModel model, EngineConfig config);

  // Each sample advances the grid by round(dt * rate) steps, so jitter and
  // rate error under half a period are absorbed; a sample landing on the
  // previous slot is dropped. Skipped slots are filled linearly. Throws
  // TimestampRegression.
  std::optional<WindowPrediction> push_sample(double t, double eda);

  // Sinks are not owned and must outlive the engine.
  void add_sink(AlertSink* sink) { sinks_.push_back(sink); }

  const StateMachine& machine() const { return machine_; }
  std::size_t buffered() const { return buffer_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::vector<ArtifactSpan>& gaps() const { return gaps_; }
  std::uint64_t samples_seen() const { return next_index_; }

private:
  void accept(double value);
  std::optional<WindowPrediction> maybe_infer();

  learn::HydrationModel model_;
  EngineConfig config_;
  preprocess::StreamingLowpass filter_;
  StateMachine machine_;
  std::vector<AlertSink*> sinks_;
  std::size_t capacity_;
  std::size_t window_samples_;
  std::size_t step_samples_;
  std::deque<double> buffer_;  // filtered samples
  std::optional<double> t0_;
  std::uint64_t next_index_{0};
  double last_t_{0.0};
  double last_raw_{0.0};
  std::vector<ArtifactSpan> gaps_;
};

// Offline counterpart of the engine's windowed inference: the same causal
// filter and context slices computed over the whole recording.
std::vector<WindowPrediction> batch_predictions(const SessionRecording& recording,
                                                const learn::HydrationModel& model, const EngineConfig& config);

// Labeled feature rows at the engine's inference boundaries, for training a
// model on exactly what the engine will see. Rows are labeled by the level
// at the window midpoint; windows touching an artifact span are skipped.
// Throws NoLabeledWindows when the recording has no annotations.
features::Dataset context_dataset(const SessionRecording& recording, const EngineConfig& config);

struct ReplaySummary {
  std::vector<WindowPrediction> predictions;
  std::vector<AlertEvent> alerts;
  std::vector<ArtifactSpan> gaps;
};

// Feeds a recording through an engine. speed is a multiple of real time;
// infinity (or <= 0) means no pacing. `stop` may end the replay early.
ReplaySummary replay(const SessionRecording& recording, const learn::HydrationModel& model,
                     const EngineConfig& config, double speed, std::span<AlertSink* const> sinks = {},
                     const std::atomic<bool>* stop = nullptr);

// --- sample socket: newline-delimited {"t": float, "eda": float} over TCP ----

std::string format_sample_line(double t, double eda);
// Throws InvalidArgument on a malformed line.
std::pair<double, double> parse_sample_line(std::string_view line);

// Serves one recording to each client that connects, then closes the
// connection. Runs on a background thread until destroyed.
class SampleServer {
public:
  SampleServer(SessionRecording recording, double speed, int port = 0);
  ~SampleServer();
  int port() const { return port_; }

private:
  void run();

  SessionRecording recording_;
  double speed_;
  int listen_fd_{-1};
  int port_{0};
  std::atomic<bool> stop_{false};
  std::thread worker_;
};

// Connects to a sample server and feeds every line into `engine` until the
// peer closes or `stop` is set. Returns the number of samples read.
std::size_t consume_socket(const std::string& host, int port, StreamEngine& engine,
                           const std::atomic<bool>* stop = nullptr);

}  // namespace hydra::stream
