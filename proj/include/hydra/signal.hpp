#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hydra/error.hpp"

namespace hydra {

// Uniformly sampled skin conductance series (microsiemens).
// Sample i sits at start_time + i / rate; there is no way to express a gap,
// gaps are carried as ArtifactSpan over interpolated samples.
struct SampleSeries {
  double start_time{0.0};  // UTC seconds
  double rate{4.0};        // Hz
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
  double time_at(std::size_t i) const { return start_time + static_cast<double>(i) / rate; }
  // Duration covered by the samples, n / rate.
  double duration() const { return static_cast<double>(values.size()) / rate; }
  double end_time() const { return start_time + duration(); }

  // Copy of [first, first + count) with a shifted start time.
  SampleSeries slice(std::size_t first, std::size_t count) const;
};

enum class HydrationLevel : int {
  WellHydrated = 0,
  Hydrated = 1,
  Dehydrated = 2,
  VeryDehydrated = 3,
};

inline constexpr int kNumLevels = 4;

std::string_view to_string(HydrationLevel level);
// Accepts 0..3; throws InvalidAnnotation otherwise.
HydrationLevel level_from_int(int value);

enum class ArtifactReason { Movement, DeviceOff, Other };

std::string_view to_string(ArtifactReason reason);
ArtifactReason artifact_reason_from_string(std::string_view text);

struct ArtifactSpan {
  double t_start{0.0};
  double t_end{0.0};
  ArtifactReason reason{ArtifactReason::Movement};

  bool overlaps(double a, double b) const { return t_start < b && a < t_end; }
  bool operator==(const ArtifactSpan&) const = default;
};

struct Transition {
  double time{0.0};
  HydrationLevel level{HydrationLevel::WellHydrated};
  bool operator==(const Transition&) const = default;
};

// Thirst-diary labels: a level holds from its transition time (inclusive)
// until the next transition.
struct AnnotationTrack {
  HydrationLevel initial_level{HydrationLevel::WellHydrated};
  std::vector<Transition> transitions;

  bool operator==(const AnnotationTrack&) const = default;
};

struct TimeSpan {
  double start{0.0};
  double end{0.0};
};

struct SessionRecording {
  std::string id;
  std::string subject;
  SampleSeries series;
  std::vector<ArtifactSpan> artifact_spans;
  std::optional<AnnotationTrack> annotations;

  TimeSpan span() const { return {series.start_time, series.end_time()}; }
};

// --- E4-style CSV -----------------------------------------------------------

SampleSeries parse_e4_csv(std::string_view text);
std::string serialize_e4_csv(const SampleSeries& series);

// Linear interpolation onto a new grid covering [t_0, t_{n-1}].
SampleSeries resample(const SampleSeries& series, double target_rate);

// --- annotations ------------------------------------------------------------

// Throws InvalidAnnotation on non-increasing times or self-transitions.
// When a span is given, transition times must also lie inside it.
void validate(const AnnotationTrack& track, const std::optional<TimeSpan>& span = std::nullopt);

HydrationLevel level_at(const AnnotationTrack& track, double t);
// Range-checked variant; throws OutOfRange when t falls outside the session.
HydrationLevel level_at(const AnnotationTrack& track, double t, const TimeSpan& session);

// Clamp to the session span, drop empty spans, sort and merge overlaps.
// Merged spans keep the reason of the earliest span.
std::vector<ArtifactSpan> normalize_spans(std::vector<ArtifactSpan> spans,
                                          const std::optional<TimeSpan>& session = std::nullopt);

// Annotation document, schema v1:
// {"v":1,"initial_level":0,"transitions":[{"t":..,"level":..}],
//  "artifacts":[{"t_start":..,"t_end":..,"reason":"movement"}]}
struct AnnotationDocument {
  AnnotationTrack track;
  std::vector<ArtifactSpan> artifacts;
  bool operator==(const AnnotationDocument&) const = default;
};

AnnotationDocument parse_annotation_json(std::string_view text);
std::string serialize_annotation_json(const AnnotationDocument& doc);

// Device-off gaps: samples given at arbitrary (non-decreasing) times are
// placed on a uniform grid, missing grid points filled linearly, and each
// gap wider than max_gap_samples reported as a DeviceOff span.
struct PaddedSeries {
  SampleSeries series;
  std::vector<ArtifactSpan> gaps;
};

PaddedSeries pad_gaps(const std::vector<double>& times, const std::vector<double>& values,
                      double rate, std::size_t max_gap_samples = 2);

}  // namespace hydra
