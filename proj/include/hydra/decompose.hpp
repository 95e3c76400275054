#pragma once

#include <functional>
#include <span>
#include <vector>

#include "hydra/signal.hpp"

namespace hydra::decompose {

// Time constants of the biexponential SCR shape exp(-t/decay) - exp(-t/rise).
struct BatemanParams {
  double tau_rise{0.75};
  double tau_decay{2.0};
  bool operator==(const BatemanParams&) const = default;
};

// Throws InvalidTaus unless 0 < tau_rise < tau_decay (both finite).
void validate(const BatemanParams& params);

// Discretized response shape. Taps are the shape sampled at sample midpoints
// (i + 0.5) / rate and scaled to sum to one, so convolving a constant driver
// reproduces the constant and the driver shares the signal's microsiemens
// scale. A single-sample driver value v yields a response peaking at
// v * max(taps).
struct Kernel {
  double rate{4.0};
  std::vector<double> taps;
  BatemanParams params;

  double peak_tap() const;
  std::size_t argmax() const;
};

// The kernel is at least `duration` seconds long and is extended until the
// last tap falls below 1e-9 of the peak.
Kernel bateman_kernel(const BatemanParams& params, double rate, double duration);
Kernel bateman_kernel(const BatemanParams& params, double rate);

// Causal convolution truncated to the input length. The history before the
// first sample is zero.
std::vector<double> convolve(std::span<const double> driver, std::span<const double> taps);

// Long-division inverse of convolve: (result (*) kernel)[n] == signal[n].
SampleSeries deconvolve(const SampleSeries& signal, const Kernel& kernel);

// Variants that assume the signal sat at `baseline` (driver == baseline)
// before the first sample, which removes the start-up transient of a signal
// that does not begin at zero.
std::vector<double> deconvolve_steady(std::span<const double> signal, std::span<const double> taps, double baseline);
std::vector<double> convolve_steady(std::span<const double> driver, std::span<const double> taps, double baseline);

struct SCREvent {
  double onset{0.0};      // s
  double peak_time{0.0};  // s
  double amplitude{0.0};  // uS
  double area{0.0};       // uS*s
};

struct DecomposeConfig {
  double amp_threshold{0.01};      // uS
  double onset_fraction{0.1};
  double tonic_window{10.0};       // s, raised-cosine smoothing of the tonic driver
  double slew{0.05};               // uS per sample, tonic rate limit
  double driver_smooth{1.0};       // s, raised-cosine smoothing of the deconvolved driver; 0 disables
  double mask_decay_multiple{3.0}; // mask +/- this many tau_decay around responses
  double min_duration{30.0};       // s
  double beta{0.1};                // weight of the negativity term in the tau objective
  double sparsity{0.0};            // reserved; no sparsity penalty is applied
  int max_evaluations{200};
  // Detection floor: events and tonic masks need amplitude >=
  // max(amp_threshold, noise_floor_k * estimated noise sigma). 0 disables.
  double noise_floor_k{5.0};
};

// Robust white-noise sigma of a signal: MAD of second differences / sqrt(6).
double estimate_noise_sigma(std::span<const double> signal);

struct TonicEstimate {
  std::vector<double> driver;
  bool all_masked{false};
};

// Tonic driver: mask driver bursts whose mass (over the driver smoothing
// width, above a rolling median) would produce a response at or above the
// detection threshold, +/- mask_decay_multiple * tau_decay. Masked runs are
// bridged linearly between 2 s averages of the clean samples on either side,
// then the result is raised-cosine smoothed over tonic_window seconds. When
// every sample is masked the estimate falls back to the 5th percentile of
// the driver held constant and all_masked is set.
TonicEstimate estimate_tonic(std::span<const double> driver, const Kernel& kernel, const DecomposeConfig& config,
                             double noise_sigma = 0.0);
SampleSeries estimate_tonic(const SampleSeries& driver, const Kernel& kernel, const DecomposeConfig& config);

// Segments a nonnegative driver into responses. A segment is a stretch of
// the driver above onset_fraction * amp_threshold, split at interior local
// minima. Each segment is treated as one impulse at the mass centroid of its
// core (samples >= onset_fraction of the segment peak). Impulse sizes are
// then refined by least squares against `target` (the phasic signal; the
// reconvolved driver when empty), each with its own local offset and slope.
// An event is kept when its response peaks at or above the detection
// threshold, max(amp_threshold, noise_floor_k * noise_sigma).
std::vector<SCREvent> detect_scrs(const SampleSeries& phasic_driver, const Kernel& kernel,
                                  const DecomposeConfig& config, double noise_sigma = 0.0,
                                  std::span<const double> target = {});

struct Decomposition {
  SampleSeries tonic;
  SampleSeries phasic_driver;
  SampleSeries phasic;
  SampleSeries driver;  // full (tonic + phasic) driver, after smoothing
  std::vector<SCREvent> scrs;
  BatemanParams params;
  double residual_rms{0.0};
  double noise_sigma{0.0};
  bool tonic_fallback{false};
};

struct DiscreteDecomposition {
  std::vector<SCREvent> impulses;
  SampleSeries driver;     // nonnegative phasic driver
  SampleSeries overshoot;  // magnitude of the mass removed to keep the driver nonnegative
  SampleSeries tonic;
  BatemanParams params;
  double noise_sigma{0.0};
  bool tonic_fallback{false};
};

Decomposition cda(const SampleSeries& signal, const BatemanParams& params, const DecomposeConfig& config = {});
DiscreteDecomposition dda(const SampleSeries& signal, const BatemanParams& params,
                          const DecomposeConfig& config = {});

// Tau search: 0.1 <= rise <= 2, 0.5 <= decay <= 10, rise < decay.
struct TauBounds {
  double rise_min{0.1}, rise_max{2.0};
  double decay_min{0.5}, decay_max{10.0};
};

bool within_bounds(const BatemanParams& params, const TauBounds& bounds = {});

// J(tau) = RMS(signal - sparse response model - slow baseline)
//          + beta * peak_tap * RMS(negative part of the tonic-removed driver).
// The sparse model places each detected response as a single impulse of its
// fitted mass; the baseline is a tonic_window raised-cosine smooth of what
// the model leaves. Infeasible taus score +infinity.
double tau_objective(const SampleSeries& signal, const BatemanParams& params, const DecomposeConfig& config);

struct TauFit {
  BatemanParams params;
  double objective{0.0};
  double initial_objective{0.0};
  int evaluations{0};
};

TauFit optimize_tau(const SampleSeries& signal, const BatemanParams& init, const DecomposeConfig& config = {});

// Derivative-free Nelder-Mead simplex over R^n. The returned point is the
// best one ever evaluated, so f(result) <= f(start).
struct SimplexResult {
  std::vector<double> x;
  double value{0.0};
  int evaluations{0};
};

SimplexResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> start,
                          std::vector<double> step, int max_evaluations, double tolerance = 1e-10);

}  // namespace hydra::decompose
