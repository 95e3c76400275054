#include "hydra/preprocess.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace hydra::preprocess {

void validate(const PreprocessConfig& config, double rate) {
  if (!(config.cutoff_hz > 0.0)) throw Error(ErrorCode::InvalidArgument, "cutoff_hz must be positive");
  if (!(config.cutoff_hz < rate / 2.0)) {
    throw Error(ErrorCode::CutoffAboveNyquist, "cutoff " + std::to_string(config.cutoff_hz) +
                                                   " Hz is not below Nyquist " + std::to_string(rate / 2.0) + " Hz");
  }
  if (config.filter_order != 1 && config.filter_order != 2) {
    throw Error(ErrorCode::UnsupportedOrder, "filter order must be 1 or 2");
  }
  if (config.hanning_width < 2) throw Error(ErrorCode::InvalidArgument, "hanning_width must be >= 2");
}

ButterworthCoefficients design_butterworth(double cutoff_hz, double rate, int order) {
  if (!(rate > 0.0) || !(cutoff_hz > 0.0)) throw Error(ErrorCode::InvalidArgument, "rate and cutoff must be positive");
  if (!(cutoff_hz < rate / 2.0)) throw Error(ErrorCode::CutoffAboveNyquist, "cutoff must be below rate / 2");
  if (order != 1 && order != 2) throw Error(ErrorCode::UnsupportedOrder, "filter order must be 1 or 2");

  // Prewarped analog cutoff, so the -3 dB point lands exactly on cutoff_hz.
  const double k = std::tan(std::numbers::pi * cutoff_hz / rate);
  ButterworthCoefficients c;
  c.order = order;
  if (order == 1) {
    const double norm = 1.0 / (1.0 + k);
    c.b = {k * norm, k * norm, 0.0};
    c.a = {1.0, (k - 1.0) * norm, 0.0};
  } else {
    const double k2 = k * k;
    const double norm = 1.0 / (1.0 + std::numbers::sqrt2 * k + k2);
    c.b = {k2 * norm, 2.0 * k2 * norm, k2 * norm};
    c.a = {1.0, 2.0 * (k2 - 1.0) * norm, (1.0 - std::numbers::sqrt2 * k + k2) * norm};
  }
  return c;
}

StreamingLowpass::StreamingLowpass(double cutoff_hz, double rate, int order)
    : c_(design_butterworth(cutoff_hz, rate, order)) {}

double StreamingLowpass::step(double x) {
  if (!primed_) {
    x_ = {x, x};
    y_ = {x, x};
    primed_ = true;
  }
  double y = c_.b[0] * x + c_.b[1] * x_[0] - c_.a[1] * y_[0];
  if (c_.order == 2) y += c_.b[2] * x_[1] - c_.a[2] * y_[1];
  x_[1] = x_[0];
  x_[0] = x;
  y_[1] = y_[0];
  y_[0] = y;
  return y;
}

SampleSeries butterworth_lowpass(const SampleSeries& series, double cutoff_hz, int order) {
  StreamingLowpass filter(cutoff_hz, series.rate, order);
  SampleSeries out;
  out.start_time = series.start_time;
  out.rate = series.rate;
  out.values.reserve(series.size());
  for (double v : series.values) out.values.push_back(filter.step(v));
  return out;
}

std::vector<double> hanning_weights(int width) {
  if (width < 2) throw Error(ErrorCode::InvalidArgument, "hanning width must be >= 2");
  const int taps = width + 1;
  std::vector<double> w(static_cast<std::size_t>(taps));
  double sum = 0.0;
  for (int k = 0; k < taps; ++k) {
    w[static_cast<std::size_t>(k)] =
        0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(k + 1) / static_cast<double>(width + 2)));
    sum += w[static_cast<std::size_t>(k)];
  }
  for (double& x : w) x /= sum;
  return w;
}

std::vector<double> hanning_smooth(std::span<const double> values, int width) {
  if (width < 2) throw Error(ErrorCode::InvalidArgument, "hanning width must be >= 2");
  if (static_cast<std::size_t>(width) > values.size()) {
    throw Error(ErrorCode::WidthTooLarge, "hanning width " + std::to_string(width) + " exceeds series length " +
                                              std::to_string(values.size()));
  }
  const auto w = hanning_weights(width);
  const auto n = static_cast<std::ptrdiff_t>(values.size());
  const std::ptrdiff_t left = width / 2;
  std::vector<double> out(values.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0.0;
    double wsum = 0.0;
    for (std::ptrdiff_t k = 0; k <= width; ++k) {
      const std::ptrdiff_t j = i - left + k;
      if (j < 0 || j >= n) continue;
      acc += w[static_cast<std::size_t>(k)] * values[static_cast<std::size_t>(j)];
      wsum += w[static_cast<std::size_t>(k)];
    }
    out[static_cast<std::size_t>(i)] = acc / wsum;
  }
  return out;
}

SampleSeries hanning_smooth(const SampleSeries& series, int width) {
  SampleSeries out;
  out.start_time = series.start_time;
  out.rate = series.rate;
  out.values = hanning_smooth(std::span<const double>(series.values), width);
  return out;
}

namespace {

// Cubic Hermite fill of (lo, hi) exclusive, slopes from the clean neighbours.
void fill_hermite(std::vector<double>& v, std::ptrdiff_t lo, std::ptrdiff_t hi, const std::vector<bool>& bad) {
  const auto n = static_cast<std::ptrdiff_t>(v.size());
  const double y0 = v[static_cast<std::size_t>(lo)];
  const double y1 = v[static_cast<std::size_t>(hi)];
  const double gap = static_cast<double>(hi - lo);
  const double secant = (y1 - y0) / gap;
  double m0 = secant;
  double m1 = secant;
  if (lo - 1 >= 0 && !bad[static_cast<std::size_t>(lo - 1)]) m0 = y0 - v[static_cast<std::size_t>(lo - 1)];
  if (hi + 1 < n && !bad[static_cast<std::size_t>(hi + 1)]) m1 = v[static_cast<std::size_t>(hi + 1)] - y1;
  for (std::ptrdiff_t i = lo + 1; i < hi; ++i) {
    const double s = static_cast<double>(i - lo) / gap;
    const double s2 = s * s;
    const double s3 = s2 * s;
    v[static_cast<std::size_t>(i)] = (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * gap * m0 +
                                     (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * gap * m1;
  }
}

}  // namespace

SampleSeries correct_artifacts(const SampleSeries& series, const std::vector<ArtifactSpan>& spans,
                               ArtifactMethod method) {
  SampleSeries out = series;
  if (spans.empty() || series.empty()) return out;

  const std::size_t n = series.size();
  std::vector<bool> bad(n, false);
  for (const auto& span : spans) {
    for (std::size_t i = 0; i < n; ++i) {
      const double t = series.time_at(i);
      if (t >= span.t_start && t <= span.t_end) bad[i] = true;
    }
  }

  auto& v = out.values;
  std::size_t i = 0;
  bool any_clean = false;
  for (bool b : bad) any_clean = any_clean || !b;
  if (!any_clean) throw Error(ErrorCode::SpanCoversWholeSeries, "artifact spans leave no clean anchor sample");

  while (i < n) {
    if (!bad[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && bad[j]) ++j;
    // Masked run is [i, j).
    if (i == 0) {
      for (std::size_t k = i; k < j; ++k) v[k] = v[j];
    } else if (j == n) {
      for (std::size_t k = i; k < j; ++k) v[k] = v[i - 1];
    } else if (method == ArtifactMethod::SplineLike) {
      fill_hermite(v, static_cast<std::ptrdiff_t>(i) - 1, static_cast<std::ptrdiff_t>(j), bad);
    } else {
      const double y0 = v[i - 1];
      const double y1 = v[j];
      const double gap = static_cast<double>(j - (i - 1));
      for (std::size_t k = i; k < j; ++k) v[k] = y0 + (y1 - y0) * static_cast<double>(k - (i - 1)) / gap;
    }
    i = j;
  }
  return out;
}

SampleSeries preprocess_pipeline(const SessionRecording& recording, const PreprocessConfig& config) {
  validate(config, recording.series.rate);
  const auto spans = normalize_spans(recording.artifact_spans, recording.span());
  const auto cleaned = correct_artifacts(recording.series, spans, config.artifact_method);
  const auto filtered = butterworth_lowpass(cleaned, config.cutoff_hz, config.filter_order);
  return hanning_smooth(filtered, config.hanning_width);
}

}  // namespace hydra::preprocess
