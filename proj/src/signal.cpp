#include "hydra/signal.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

#include "hydra/numeric_text.hpp"

namespace hydra {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::NonNumericSample: return "NonNumericSample";
    case ErrorCode::EmptyBody: return "EmptyBody";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::InvalidAnnotation: return "InvalidAnnotation";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::CutoffAboveNyquist: return "CutoffAboveNyquist";
    case ErrorCode::UnsupportedOrder: return "UnsupportedOrder";
    case ErrorCode::WidthTooLarge: return "WidthTooLarge";
    case ErrorCode::SpanCoversWholeSeries: return "SpanCoversWholeSeries";
    case ErrorCode::InvalidTaus: return "InvalidTaus";
    case ErrorCode::RateMismatch: return "RateMismatch";
    case ErrorCode::ZeroLeadingTap: return "ZeroLeadingTap";
    case ErrorCode::SignalTooShort: return "SignalTooShort";
    case ErrorCode::BoundsViolation: return "BoundsViolation";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::WindowOutOfRange: return "WindowOutOfRange";
    case ErrorCode::TooFewSubWindows: return "TooFewSubWindows";
    case ErrorCode::NoLabeledWindows: return "NoLabeledWindows";
    case ErrorCode::MalformedDataset: return "MalformedDataset";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::FeatureOrderMismatch: return "FeatureOrderMismatch";
    case ErrorCode::NonFiniteFeature: return "NonFiniteFeature";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptModel: return "CorruptModel";
    case ErrorCode::TimestampRegression: return "TimestampRegression";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::Conflict: return "Conflict";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

SampleSeries SampleSeries::slice(std::size_t first, std::size_t count) const {
  if (first > values.size() || count > values.size() - first) {
    throw Error(ErrorCode::OutOfRange, "slice exceeds series length");
  }
  SampleSeries out;
  out.rate = rate;
  out.start_time = time_at(first);
  out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(first),
                    values.begin() + static_cast<std::ptrdiff_t>(first + count));
  return out;
}

std::string_view to_string(HydrationLevel level) {
  switch (level) {
    case HydrationLevel::WellHydrated: return "WellHydrated";
    case HydrationLevel::Hydrated: return "Hydrated";
    case HydrationLevel::Dehydrated: return "Dehydrated";
    case HydrationLevel::VeryDehydrated: return "VeryDehydrated";
  }
  return "Unknown";
}

HydrationLevel level_from_int(int value) {
  if (value < 0 || value >= kNumLevels) {
    throw Error(ErrorCode::InvalidAnnotation, "hydration level must be 0..3, got " + std::to_string(value));
  }
  return static_cast<HydrationLevel>(value);
}

std::string_view to_string(ArtifactReason reason) {
  switch (reason) {
    case ArtifactReason::Movement: return "movement";
    case ArtifactReason::DeviceOff: return "device_off";
    case ArtifactReason::Other: return "other";
  }
  return "other";
}

ArtifactReason artifact_reason_from_string(std::string_view text) {
  if (text == "movement") return ArtifactReason::Movement;
  if (text == "device_off") return ArtifactReason::DeviceOff;
  if (text == "other") return ArtifactReason::Other;
  throw Error(ErrorCode::InvalidAnnotation, "unknown artifact reason '" + std::string(text) + "'");
}

namespace {

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace

SampleSeries parse_e4_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(strip_cr(text.substr(pos, nl - pos)));
    pos = nl + 1;
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();

  if (lines.size() < 2) throw Error(ErrorCode::MalformedHeader, "expected timestamp and rate header lines");
  auto start = parse_double(lines[0]);
  auto rate = parse_double(lines[1]);
  if (!start || !rate) throw Error(ErrorCode::MalformedHeader, "header lines must be numeric");
  if (!(*rate > 0.0)) throw Error(ErrorCode::MalformedHeader, "sample rate must be positive");
  if (lines.size() == 2) throw Error(ErrorCode::EmptyBody, "no samples after header");

  SampleSeries series;
  series.start_time = *start;
  series.rate = *rate;
  series.values.reserve(lines.size() - 2);
  for (std::size_t i = 2; i < lines.size(); ++i) {
    auto v = parse_double(lines[i]);
    if (!v) {
      throw Error(ErrorCode::NonNumericSample,
                  "line " + std::to_string(i + 1) + ": '" + std::string(lines[i]) + "' is not a finite number");
    }
    series.values.push_back(*v);
  }
  return series;
}

std::string serialize_e4_csv(const SampleSeries& series) {
  std::string out;
  out.reserve(series.size() * 12 + 32);
  out += format_double(series.start_time);
  out += '\n';
  out += format_double(series.rate);
  out += '\n';
  for (double v : series.values) {
    out += format_double(v);
    out += '\n';
  }
  return out;
}

SampleSeries resample(const SampleSeries& series, double target_rate) {
  if (series.empty()) throw Error(ErrorCode::EmptySeries, "cannot resample an empty series");
  if (!(target_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "target rate must be positive");
  if (target_rate == series.rate) return series;

  const std::size_t n = series.size();
  const double span = static_cast<double>(n - 1) / series.rate;
  // The small slack keeps the last sample when span * target_rate is integral
  // up to rounding.
  const auto m = static_cast<std::size_t>(std::floor(span * target_rate + 1e-9)) + 1;

  SampleSeries out;
  out.start_time = series.start_time;
  out.rate = target_rate;
  out.values.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double pos = static_cast<double>(j) * series.rate / target_rate;
    auto i0 = static_cast<std::size_t>(std::floor(pos));
    if (i0 >= n - 1) {
      out.values[j] = series.values[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(i0);
    out.values[j] = series.values[i0] + frac * (series.values[i0 + 1] - series.values[i0]);
  }
  return out;
}

void validate(const AnnotationTrack& track, const std::optional<TimeSpan>& span) {
  HydrationLevel prev = track.initial_level;
  for (std::size_t i = 0; i < track.transitions.size(); ++i) {
    const auto& tr = track.transitions[i];
    const std::string where = "transitions[" + std::to_string(i) + "]";
    if (!std::isfinite(tr.time)) throw Error(ErrorCode::InvalidAnnotation, where + ".t: not finite");
    if (i > 0 && !(tr.time > track.transitions[i - 1].time)) {
      throw Error(ErrorCode::InvalidAnnotation, where + ".t: transition times must be strictly increasing");
    }
    if (tr.level == prev) {
      throw Error(ErrorCode::InvalidAnnotation, where + ".level: transition does not change the level");
    }
    if (span && (tr.time < span->start || tr.time > span->end)) {
      throw Error(ErrorCode::InvalidAnnotation, where + ".t: outside the session span");
    }
    prev = tr.level;
  }
}

HydrationLevel level_at(const AnnotationTrack& track, double t) {
  if (!std::isfinite(t)) throw Error(ErrorCode::OutOfRange, "time is not finite");
  // First transition strictly after t; the one before it (if any) is active.
  auto it = std::upper_bound(track.transitions.begin(), track.transitions.end(), t,
                             [](double value, const Transition& tr) { return value < tr.time; });
  if (it == track.transitions.begin()) return track.initial_level;
  return std::prev(it)->level;
}

HydrationLevel level_at(const AnnotationTrack& track, double t, const TimeSpan& session) {
  if (!(t >= session.start && t <= session.end)) {
    throw Error(ErrorCode::OutOfRange, "time " + std::to_string(t) + " outside session span");
  }
  return level_at(track, t);
}

std::vector<ArtifactSpan> normalize_spans(std::vector<ArtifactSpan> spans, const std::optional<TimeSpan>& session) {
  std::vector<ArtifactSpan> kept;
  kept.reserve(spans.size());
  for (auto s : spans) {
    if (!std::isfinite(s.t_start) || !std::isfinite(s.t_end)) {
      throw Error(ErrorCode::InvalidAnnotation, "artifact span bounds must be finite");
    }
    if (!(s.t_end > s.t_start)) throw Error(ErrorCode::InvalidAnnotation, "artifact span needs t_end > t_start");
    if (session) {
      s.t_start = std::max(s.t_start, session->start);
      s.t_end = std::min(s.t_end, session->end);
      if (!(s.t_end > s.t_start)) continue;
    }
    kept.push_back(s);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const ArtifactSpan& a, const ArtifactSpan& b) { return a.t_start < b.t_start; });
  std::vector<ArtifactSpan> merged;
  for (const auto& s : kept) {
    if (!merged.empty() && s.t_start <= merged.back().t_end) {
      merged.back().t_end = std::max(merged.back().t_end, s.t_end);
    } else {
      merged.push_back(s);
    }
  }
  return merged;
}

PaddedSeries pad_gaps(const std::vector<double>& times, const std::vector<double>& values, double rate,
                      std::size_t max_gap_samples) {
  if (times.size() != values.size()) throw Error(ErrorCode::InvalidArgument, "times/values length mismatch");
  if (!(rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "rate must be positive");
  PaddedSeries out;
  out.series.rate = rate;
  if (times.empty()) return out;
  out.series.start_time = times.front();

  auto& v = out.series.values;
  v.push_back(values.front());
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (times[i] < times[i - 1]) throw Error(ErrorCode::InvalidArgument, "sample times must be non-decreasing");
    const auto grid = static_cast<long long>(std::llround((times[i] - out.series.start_time) * rate));
    const auto next = static_cast<long long>(v.size());
    if (grid <= next) {
      // Jitter within tolerance: the sample takes the next grid slot.
      v.push_back(values[i]);
      continue;
    }
    const long long missing = grid - next;
    const double last = v.back();
    for (long long k = 1; k <= missing; ++k) {
      const double frac = static_cast<double>(k) / static_cast<double>(missing + 1);
      v.push_back(last + frac * (values[i] - last));
    }
    if (static_cast<std::size_t>(missing) > max_gap_samples) {
      out.gaps.push_back({out.series.time_at(static_cast<std::size_t>(next)),
                          out.series.time_at(static_cast<std::size_t>(grid)), ArtifactReason::DeviceOff});
    }
    v.push_back(values[i]);
  }
  return out;
}

}  // namespace hydra
