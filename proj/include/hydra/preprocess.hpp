#pragma once

#include <array>
#include <span>
#include <vector>

#include "hydra/signal.hpp"

namespace hydra::preprocess {

enum class ArtifactMethod { Linear, SplineLike };

struct PreprocessConfig {
  double cutoff_hz{1.0};
  int filter_order{1};
  int hanning_width{4};
  ArtifactMethod artifact_method{ArtifactMethod::Linear};
};

// Throws InvalidArgument / CutoffAboveNyquist / UnsupportedOrder.
void validate(const PreprocessConfig& config, double rate);

// Bilinear-transform Butterworth low-pass, order 1 or 2, direct form I.
// The coefficients are normalized so the DC gain is exactly one.
struct ButterworthCoefficients {
  std::array<double, 3> b{};
  std::array<double, 3> a{};  // a[0] == 1
  int order{1};
};

ButterworthCoefficients design_butterworth(double cutoff_hz, double rate, int order);

// Streaming filter state. The first sample primes the history as if the
// input had been constant at that value forever, so a constant input gives
// a constant output with no start-up transient. Batch filtering runs through
// this same class, which keeps batch and streaming outputs bit-identical.
class StreamingLowpass {
public:
  StreamingLowpass(double cutoff_hz, double rate, int order);
  explicit StreamingLowpass(const ButterworthCoefficients& coeffs) : c_(coeffs) {}

  double step(double x);
  void reset() { primed_ = false; }

private:
  ButterworthCoefficients c_;
  std::array<double, 2> x_{};
  std::array<double, 2> y_{};
  bool primed_{false};
};

SampleSeries butterworth_lowpass(const SampleSeries& series, double cutoff_hz, int order);

// Normalized raised-cosine weights over width + 1 taps (the interior points
// of a Hann window of length width + 3). width 2 gives (0.25, 0.5, 0.25).
std::vector<double> hanning_weights(int width);

// Centered weighted average; windows truncated at the edges are renormalized.
std::vector<double> hanning_smooth(std::span<const double> values, int width);
SampleSeries hanning_smooth(const SampleSeries& series, int width);

SampleSeries correct_artifacts(const SampleSeries& series, const std::vector<ArtifactSpan>& spans,
                               ArtifactMethod method = ArtifactMethod::Linear);

// correct_artifacts -> butterworth_lowpass -> hanning_smooth.
SampleSeries preprocess_pipeline(const SessionRecording& recording, const PreprocessConfig& config);

}  // namespace hydra::preprocess
