#include "hydra/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "hydra/config_json.hpp"
#include "hydra/numeric_text.hpp"

namespace hydra::features {

namespace {

constexpr double kIndexEps = 1e-7;

[[noreturn]] void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

// Samples i with start <= t_i < end.
std::pair<std::size_t, std::size_t> sample_range(const SampleSeries& s, double start, double end) {
  const double a = std::ceil((start - s.start_time) * s.rate - kIndexEps);
  const double b = std::ceil((end - s.start_time) * s.rate - kIndexEps);
  const auto lo = static_cast<std::size_t>(std::max(0.0, a));
  const auto hi = static_cast<std::size_t>(std::clamp(b, 0.0, static_cast<double>(s.size())));
  return {lo, std::max(lo, hi)};
}

bool covers(const SampleSeries& s, const Window& w) {
  const double tol = 1e-6 / s.rate;
  return !s.empty() && w.start >= s.start_time - tol && w.end <= s.end_time() + tol && w.end > w.start;
}

double mean_of(const SampleSeries& s, std::size_t lo, std::size_t hi) {
  if (hi <= lo) return 0.0;
  double acc = 0.0;
  for (std::size_t i = lo; i < hi; ++i) acc += s.values[i];
  return acc / static_cast<double>(hi - lo);
}

struct EventSums {
  double count{0.0};
  double latency{0.0};
  double amp{0.0};
  double area{0.0};
};

EventSums event_sums(const std::vector<decompose::SCREvent>& events, const Window& w) {
  EventSums out;
  out.latency = w.length();
  bool first = true;
  for (const auto& e : events) {
    if (e.onset < w.start || e.onset >= w.end) continue;
    if (first) {
      out.latency = e.onset - w.start;
      first = false;
    }
    out.count += 1.0;
    out.amp += e.amplitude;
    out.area += e.area;
  }
  return out;
}

}  // namespace

void validate(const WindowSpec& spec, double rate) {
  if (!(spec.activity_window > 0.0) || !std::isfinite(spec.activity_window))
    fail(ErrorCode::InvalidArgument, "activity_window must be positive");
  if (spec.sub_step < 1) fail(ErrorCode::InvalidArgument, "sub_step must be >= 1");
  if (spec.sub_window < 1) fail(ErrorCode::InvalidArgument, "sub_window must be >= 1");
  const double per_window = spec.activity_window * rate;
  if (spec.sub_window + spec.sub_step > per_window + kIndexEps)
    fail(ErrorCode::InvalidArgument, "sub_window does not leave room for two sub-windows in an activity window");
}

std::vector<Window> window_segments(const SampleSeries& series, const WindowSpec& spec) {
  if (!(spec.activity_window > 0.0)) fail(ErrorCode::InvalidArgument, "activity_window must be positive");
  const double n = std::floor(series.duration() / spec.activity_window + 1e-9);
  if (n < 1.0) fail(ErrorCode::SeriesTooShort, "series shorter than one activity window");
  std::vector<Window> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) {
    const double a = series.start_time + static_cast<double>(k) * spec.activity_window;
    out.push_back({a, a + spec.activity_window});
  }
  return out;
}

std::array<double, kNumBase> BaseFeatures::as_array() const {
  return {cda_nscr,       cda_latency, cda_ampsum, cda_iscr,   cda_phasic_mean, cda_phasic_max,
          cda_tonic_mean, dda_nscr,    dda_latency, dda_ampsum, dda_areasum,     dda_tonic_mean};
}

const std::array<std::string_view, kNumBase>& base_feature_names() {
  static const std::array<std::string_view, kNumBase> names{
      "cda_nscr",       "cda_latency", "cda_ampsum",  "cda_iscr",   "cda_phasic_mean", "cda_phasic_max",
      "cda_tonic_mean", "dda_nscr",    "dda_latency", "dda_ampsum", "dda_areasum",     "dda_tonic_mean"};
  return names;
}

const std::array<std::string, kNumFeatures>& feature_names() {
  static const std::array<std::string, kNumFeatures> names = [] {
    std::array<std::string, kNumFeatures> out;
    const auto& base = base_feature_names();
    for (std::size_t f = 0; f < kNumBase; ++f) {
      out[3 * f] = std::string(base[f]) + "_mean";
      out[3 * f + 1] = std::string(base[f]) + "_var";
      out[3 * f + 2] = std::string(base[f]) + "_std";
    }
    return out;
  }();
  return names;
}

std::string feature_order_hash(std::span<const std::string> names) {
  std::string joined;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) joined += '\n';
    joined += names[i];
  }
  return fnv1a64_hex(joined);
}

std::string feature_order_hash() {
  static const std::string h = feature_order_hash(feature_names());
  return h;
}

BaseFeatures base_features(const decompose::Decomposition& cda, const decompose::DiscreteDecomposition& dda,
                           const Window& window) {
  if (!covers(cda.phasic_driver, window) || !covers(cda.tonic, window) || !covers(dda.tonic, window))
    fail(ErrorCode::WindowOutOfRange, "window [" + format_double(window.start) + ", " + format_double(window.end) +
                                          ") outside the decomposition");
  BaseFeatures f;
  const double len = window.length();

  const auto c = event_sums(cda.scrs, window);
  f.cda_nscr = c.count;
  f.cda_latency = c.latency;
  f.cda_ampsum = c.amp;

  const auto [lo, hi] = sample_range(cda.phasic_driver, window.start, window.end);
  double integral = 0.0, peak = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    integral += cda.phasic_driver.values[i];
    peak = std::max(peak, cda.phasic_driver.values[i]);
  }
  f.cda_iscr = integral / cda.phasic_driver.rate;
  f.cda_phasic_mean = f.cda_iscr / len;
  f.cda_phasic_max = peak;
  const auto [tlo, thi] = sample_range(cda.tonic, window.start, window.end);
  f.cda_tonic_mean = mean_of(cda.tonic, tlo, thi);

  const auto d = event_sums(dda.impulses, window);
  f.dda_nscr = d.count;
  f.dda_latency = d.latency;
  f.dda_ampsum = d.amp;
  f.dda_areasum = d.area;
  const auto [dlo, dhi] = sample_range(dda.tonic, window.start, window.end);
  f.dda_tonic_mean = mean_of(dda.tonic, dlo, dhi);
  return f;
}

FeatureVector aggregate(std::span<const BaseFeatures> rows) {
  if (rows.size() < 2) fail(ErrorCode::TooFewSubWindows, "aggregate needs at least two sub-windows");
  FeatureVector out;
  const double n = static_cast<double>(rows.size());
  std::vector<double> col(rows.size());
  for (std::size_t f = 0; f < kNumBase; ++f) {
    for (std::size_t r = 0; r < rows.size(); ++r) col[r] = rows[r].as_array()[f];
    std::sort(col.begin(), col.end());
    double sum = 0.0;
    for (double v : col) sum += v;
    const double mean = sum / n;
    double ss = 0.0;
    for (double v : col) ss += (v - mean) * (v - mean);
    const double var = ss / n;
    out.values[3 * f] = mean;
    out.values[3 * f + 1] = var;
    out.values[3 * f + 2] = std::sqrt(var);
  }
  return out;
}

FeatureVector featurize_window(const decompose::Decomposition& cda, const decompose::DiscreteDecomposition& dda,
                               const Window& window, const WindowSpec& spec) {
  const double rate = cda.phasic_driver.rate;
  validate(spec, rate);
  if (!covers(cda.phasic_driver, window))
    fail(ErrorCode::WindowOutOfRange, "activity window outside the decomposition");
  const auto [lo, hi] = sample_range(cda.phasic_driver, window.start, window.end);
  const std::size_t sub = static_cast<std::size_t>(spec.sub_window);
  std::vector<BaseFeatures> rows;
  for (std::size_t i = lo; i + sub <= hi; i += static_cast<std::size_t>(spec.sub_step)) {
    const double a = cda.phasic_driver.time_at(i);
    rows.push_back(base_features(cda, dda, {a, a + static_cast<double>(sub) / rate}));
  }
  auto fv = aggregate(rows);
  fv.window_start = window.start;
  return fv;
}

std::array<std::size_t, kNumLevels> Dataset::class_counts() const {
  std::array<std::size_t, kNumLevels> counts{};
  for (const auto& r : rows)
    if (r.label) ++counts[static_cast<std::size_t>(*r.label)];
  return counts;
}

SessionDecompositions decompose_session(const SessionRecording& recording, const FeatureConfig& config) {
  SessionDecompositions out;
  out.preprocessed = preprocess::preprocess_pipeline(recording, config.preprocess);
  auto taus = config.taus;
  if (config.optimize_taus) taus = decompose::optimize_tau(out.preprocessed, taus, config.decompose).params;
  out.cda = decompose::cda(out.preprocessed, taus, config.decompose);
  out.dda = decompose::dda(out.preprocessed, taus, config.decompose);
  return out;
}

Dataset featurize_session(const SessionRecording& recording, const FeatureConfig& config) {
  if (!recording.annotations) fail(ErrorCode::NoLabeledWindows, "session '" + recording.id + "' has no annotations");
  validate(config.window, recording.series.rate);
  const auto windows = window_segments(recording.series, config.window);
  const auto spans = normalize_spans(recording.artifact_spans, recording.span());
  const auto parts = decompose_session(recording, config);

  Dataset data;
  for (const auto& w : windows) {
    const bool dirty = std::any_of(spans.begin(), spans.end(), [&](const ArtifactSpan& s) {
      return s.overlaps(w.start, w.end);
    });
    if (dirty) continue;
    auto fv = featurize_window(parts.cda, parts.dda, w, config.window);
    fv.label = level_at(*recording.annotations, w.midpoint());
    fv.session = recording.id;
    data.rows.push_back(std::move(fv));
  }
  if (data.rows.empty()) fail(ErrorCode::NoLabeledWindows, "every window of '" + recording.id + "' was excluded");
  std::stable_sort(data.rows.begin(), data.rows.end(),
                   [](const FeatureVector& a, const FeatureVector& b) { return a.window_start < b.window_start; });
  return data;
}

// --- CSV --------------------------------------------------------------------

std::string write_dataset_csv(const Dataset& data) {
  std::string out;
  for (const auto& name : feature_names()) {
    out += name;
    out += ',';
  }
  out += "label,session,window_start\n";
  for (const auto& row : data.rows) {
    if (row.session.find_first_of(",\"\r\n") != std::string::npos)
      fail(ErrorCode::InvalidArgument, "session id '" + row.session + "' cannot be written to CSV");
    for (double v : row.values) {
      out += format_double(v);
      out += ',';
    }
    if (row.label) out += std::to_string(static_cast<int>(*row.label));
    out += ',';
    out += row.session;
    out += ',';
    out += format_double(row.window_start);
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

Dataset read_dataset_csv(std::string_view text) {
  Dataset data;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    auto bad = [&](const std::string& what) {
      fail(ErrorCode::MalformedDataset, "dataset line " + std::to_string(line_no) + ": " + what);
    };
    if (fields.size() != kNumFeatures + 3) bad("expected " + std::to_string(kNumFeatures + 3) + " fields");
    if (!header_seen) {
      for (std::size_t i = 0; i < kNumFeatures; ++i)
        if (fields[i] != feature_names()[i]) bad("column " + std::to_string(i) + " is not " + feature_names()[i]);
      if (fields[kNumFeatures] != "label" || fields[kNumFeatures + 1] != "session" ||
          fields[kNumFeatures + 2] != "window_start")
        bad("trailing columns must be label,session,window_start");
      header_seen = true;
      continue;
    }
    FeatureVector row;
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      const auto v = parse_double(fields[i]);
      if (!v) bad("column " + feature_names()[i] + " is not a finite number");
      row.values[i] = *v;
    }
    const auto label = parse_double(fields[kNumFeatures]);
    if (!label || *label != std::floor(*label) || *label < 0 || *label >= kNumLevels) bad("label must be 0..3");
    row.label = static_cast<HydrationLevel>(static_cast<int>(*label));
    row.session = std::string(fields[kNumFeatures + 1]);
    const auto ws = parse_double(fields[kNumFeatures + 2]);
    if (!ws) bad("window_start is not a finite number");
    row.window_start = *ws;
    data.rows.push_back(std::move(row));
  }
  if (!header_seen) fail(ErrorCode::MalformedDataset, "dataset has no header row");
  return data;
}

std::string dataset_manifest_json(const Dataset& data, const FeatureConfig& config) {
  nlohmann::json m;
  m["v"] = 1;
  m["feature_order_hash"] = feature_order_hash();
  m["features"] = feature_names();
  m["config"] = config;
  m["rows"] = data.rows.size();
  m["class_counts"] = data.class_counts();
  return m.dump(2);
}

}  // namespace hydra::features
