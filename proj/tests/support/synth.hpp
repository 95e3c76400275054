#pragma once

// Test-only signal generators. SCR shapes are evaluated directly from the
// closed-form biexponential so they do not share a code path with the
// library's kernel/convolution routines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "hydra/signal.hpp"

namespace synth {

struct Event {
  std::size_t index{0};   // onset sample
  double amplitude{0.0};  // peak of the response, uS
};

inline double bateman(double t, double rise, double decay) { return std::exp(-t / decay) - std::exp(-t / rise); }

// Peak of the midpoint-sampled shape, used to scale responses to a given height.
inline double discrete_peak(double rise, double decay, double rate) {
  double best = 0.0;
  for (int i = 0; i < 10000; ++i) best = std::max(best, bateman((i + 0.5) / rate, rise, decay));
  return best;
}

// Response to an onset at sample n0, peaking at `amplitude`.
inline void add_scr(std::vector<double>& x, const Event& ev, double rise, double decay, double rate) {
  const double peak = discrete_peak(rise, decay, rate);
  for (std::size_t n = ev.index; n < x.size(); ++n) {
    x[n] += ev.amplitude * bateman((static_cast<double>(n - ev.index) + 0.5) / rate, rise, decay) / peak;
  }
}

struct Scenario {
  hydra::SampleSeries signal;
  std::vector<double> tonic;
  std::vector<double> phasic;
  std::vector<Event> events;
};

// Slow tonic drift plus N SCRs with gaps > min_gap seconds, plus white
// Gaussian noise. The noise is scaled so the requested SNR holds against the
// session's phasic power and also against the weakest SCR's own waveform
// (mean square over its first 5 * decay seconds), whichever is stricter.
inline Scenario scr_scenario(std::uint64_t seed, double seconds, int n_events, double rise, double decay,
                             double min_gap, double snr_db, double rate = 4.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto n = static_cast<std::size_t>(seconds * rate);
  Scenario s;
  s.signal.rate = rate;
  s.signal.start_time = 1000.0;
  s.tonic.resize(n);
  s.phasic.assign(n, 0.0);

  const double level = 1.0 + unit(rng);
  const double drift = 0.2 * (unit(rng) - 0.5);
  const double wobble = 0.05 * unit(rng);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    s.tonic[i] = level + drift * t / seconds + wobble * std::sin(2.0 * 3.141592653589793 * t / 300.0);
  }

  // Place events at least min_gap apart, away from the first/last 10 s.
  const double lo = 10.0;
  const double hi = seconds - 15.0;
  std::vector<double> times;
  for (int attempt = 0; attempt < 10000 && static_cast<int>(times.size()) < n_events; ++attempt) {
    const double t = lo + unit(rng) * (hi - lo);
    bool ok = true;
    for (double u : times) ok = ok && std::abs(u - t) > min_gap;
    if (ok) times.push_back(t);
  }
  std::sort(times.begin(), times.end());
  for (double t : times) {
    Event ev{static_cast<std::size_t>(std::lround(t * rate)), 0.05 + 0.95 * unit(rng)};
    s.events.push_back(ev);
    add_scr(s.phasic, ev, rise, decay, rate);
  }

  double power = 0.0;
  for (double v : s.phasic) power += v * v;
  power /= static_cast<double>(n);
  if (!s.events.empty()) {
    double weakest = s.events.front().amplitude;
    for (const auto& ev : s.events) weakest = std::min(weakest, ev.amplitude);
    const auto support = static_cast<std::size_t>(std::lround(5.0 * decay * rate));
    const double peak = discrete_peak(rise, decay, rate);
    double own = 0.0;
    for (std::size_t k = 0; k < support; ++k) {
      const double v = weakest * bateman((static_cast<double>(k) + 0.5) / rate, rise, decay) / peak;
      own += v * v;
    }
    power = std::min(power, own / static_cast<double>(support));
  }
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  std::normal_distribution<double> noise(0.0, sigma);

  s.signal.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.signal.values[i] = s.tonic[i] + s.phasic[i] + (snr_db < 200 ? noise(rng) : 0.0);
  return s;
}

}  // namespace synth

namespace synth {

// Annotated session: consecutive segments with a random level each (never
// repeating the previous one); the tonic sits at 1.0 + 0.5 * level plus a
// per-segment offset of std `level_std`, with a 2 s raised-cosine ramp at
// each change. Sparse SCRs and white noise ride on top. Segment boundaries
// are the annotated transitions.
inline hydra::SessionRecording hydration_session(std::uint64_t seed, double seconds, double segment_s,
                                                 double level_std = 0.1, double start = 1.7e9,
                                                 double rate = 4.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> offset(0.0, level_std);
  const auto n = static_cast<std::size_t>(seconds * rate);
  const auto segs = static_cast<std::size_t>(std::ceil(seconds / segment_s));

  std::vector<int> levels;
  std::vector<double> tonic_level;
  for (std::size_t k = 0; k < segs; ++k) {
    int lv;
    do lv = static_cast<int>(unit(rng) * 4) % 4; while (!levels.empty() && lv == levels.back());
    levels.push_back(lv);
    tonic_level.push_back(1.0 + 0.5 * lv + offset(rng));
  }

  hydra::SessionRecording rec;
  rec.id = "hyd" + std::to_string(seed);
  rec.series.start_time = start;
  rec.series.rate = rate;
  rec.series.values.assign(n, 0.0);
  const double ramp = 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const auto k = std::min(segs - 1, static_cast<std::size_t>(t / segment_s));
    double v = tonic_level[k];
    const double into = t - static_cast<double>(k) * segment_s;
    if (k > 0 && into < ramp) {
      const double w = 0.5 - 0.5 * std::cos(3.141592653589793 * into / ramp);
      v = tonic_level[k - 1] + (tonic_level[k] - tonic_level[k - 1]) * w;
    }
    rec.series.values[i] = v;
  }
  for (double t = 3.0 + 20.0 * unit(rng); t < seconds - 1.0; t += 8.0 + 25.0 * unit(rng))
    add_scr(rec.series.values, {static_cast<std::size_t>(t * rate), 0.05 + 0.4 * unit(rng)}, 0.75, 2.0, rate);
  std::normal_distribution<double> noise(0.0, 0.003);
  for (double& v : rec.series.values) v += noise(rng);

  hydra::AnnotationTrack track{hydra::level_from_int(levels[0]), {}};
  for (std::size_t k = 1; k < segs; ++k)
    track.transitions.push_back({start + static_cast<double>(k) * segment_s, hydra::level_from_int(levels[k])});
  rec.annotations = track;
  return rec;
}

}  // namespace synth

namespace synth {

// One session held at a single level: the tonic wanders around
// 1.0 + 0.5 * level as an Ornstein-Uhlenbeck process with stationary std
// `level_std` and time constant `tau_s`, with sparse SCRs and white noise.
inline hydra::SessionRecording level_session(std::uint64_t seed, hydra::HydrationLevel level, double seconds,
                                             double level_std = 0.1, double tau_s = 30.0, double start = 1.7e9,
                                             double rate = 4.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  const auto n = static_cast<std::size_t>(seconds * rate);
  const double mean = 1.0 + 0.5 * static_cast<int>(level);
  const double a = std::exp(-1.0 / (tau_s * rate));
  const double kick = level_std * std::sqrt(1.0 - a * a);

  hydra::SessionRecording rec;
  rec.id = "lvl" + std::to_string(seed);
  rec.series.start_time = start;
  rec.series.rate = rate;
  rec.series.values.resize(n);
  double dev = level_std * g(rng);
  for (std::size_t i = 0; i < n; ++i) {
    rec.series.values[i] = mean + dev;
    dev = a * dev + kick * g(rng);
  }
  for (double t = 3.0 + 20.0 * unit(rng); t < seconds - 1.0; t += 8.0 + 25.0 * unit(rng))
    add_scr(rec.series.values, {static_cast<std::size_t>(t * rate), 0.05 + 0.4 * unit(rng)}, 0.75, 2.0, rate);
  for (double& v : rec.series.values) v += 0.003 * g(rng);
  rec.annotations = hydra::AnnotationTrack{level, {}};
  return rec;
}

}  // namespace synth
