#include "hydra/decompose.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "hydra/preprocess.hpp"

namespace hydra::decompose {

void validate(const BatemanParams& params) {
  const bool ok = std::isfinite(params.tau_rise) && std::isfinite(params.tau_decay) && params.tau_rise > 0.0 &&
                  params.tau_rise < params.tau_decay;
  if (!ok) {
    throw Error(ErrorCode::InvalidTaus, "need 0 < tau_rise < tau_decay, got (" + std::to_string(params.tau_rise) +
                                            ", " + std::to_string(params.tau_decay) + ")");
  }
}

double Kernel::peak_tap() const { return taps.empty() ? 0.0 : taps[argmax()]; }

std::size_t Kernel::argmax() const {
  return static_cast<std::size_t>(std::distance(taps.begin(), std::max_element(taps.begin(), taps.end())));
}

namespace {

double bateman(double t, const BatemanParams& p) { return std::exp(-t / p.tau_decay) - std::exp(-t / p.tau_rise); }

constexpr std::size_t kMaxTaps = 1u << 20;

}  // namespace

Kernel bateman_kernel(const BatemanParams& params, double rate, double duration) {
  validate(params);
  if (!(rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "kernel rate must be positive");
  if (!(duration >= 5.0 * params.tau_decay)) {
    throw Error(ErrorCode::InvalidArgument, "kernel duration must cover at least 5 * tau_decay");
  }
  const double t_peak = params.tau_rise * params.tau_decay / (params.tau_decay - params.tau_rise) *
                        std::log(params.tau_decay / params.tau_rise);
  const double b_peak = bateman(t_peak, params);

  Kernel k;
  k.rate = rate;
  k.params = params;
  const auto min_taps = static_cast<std::size_t>(std::ceil(duration * rate));
  for (std::size_t i = 0; i < kMaxTaps; ++i) {
    const double v = bateman((static_cast<double>(i) + 0.5) / rate, params);
    k.taps.push_back(v);
    if (k.taps.size() >= min_taps && v < 1e-9 * b_peak) break;
  }
  double sum = 0.0;
  for (double v : k.taps) sum += v;
  for (double& v : k.taps) v /= sum;
  return k;
}

Kernel bateman_kernel(const BatemanParams& params, double rate) {
  validate(params);
  return bateman_kernel(params, rate, 5.0 * params.tau_decay);
}

std::vector<double> convolve(std::span<const double> driver, std::span<const double> taps) {
  std::vector<double> out(driver.size(), 0.0);
  for (std::size_t n = 0; n < driver.size(); ++n) {
    const std::size_t kmax = std::min(n + 1, taps.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < kmax; ++k) acc += driver[n - k] * taps[k];
    out[n] = acc;
  }
  return out;
}

namespace {

std::vector<double> long_division(std::span<const double> signal, std::span<const double> taps) {
  std::vector<double> d(signal.size(), 0.0);
  const double lead = taps[0];
  for (std::size_t n = 0; n < signal.size(); ++n) {
    const std::size_t kmax = std::min(n + 1, taps.size());
    double acc = signal[n];
    for (std::size_t k = 1; k < kmax; ++k) acc -= d[n - k] * taps[k];
    d[n] = acc / lead;
  }
  return d;
}

void check_kernel(const Kernel& kernel) {
  if (kernel.taps.empty() || !(kernel.taps[0] > 0.0)) {
    throw Error(ErrorCode::ZeroLeadingTap, "kernel needs a positive leading tap for causal deconvolution");
  }
}

}  // namespace

SampleSeries deconvolve(const SampleSeries& signal, const Kernel& kernel) {
  if (std::abs(signal.rate - kernel.rate) > 1e-9 * signal.rate) {
    throw Error(ErrorCode::RateMismatch, "signal rate " + std::to_string(signal.rate) + " Hz != kernel rate " +
                                             std::to_string(kernel.rate) + " Hz");
  }
  check_kernel(kernel);
  SampleSeries out;
  out.start_time = signal.start_time;
  out.rate = signal.rate;
  out.values = long_division(signal.values, kernel.taps);
  return out;
}

std::vector<double> deconvolve_steady(std::span<const double> signal, std::span<const double> taps, double baseline) {
  std::vector<double> shifted(signal.begin(), signal.end());
  for (double& v : shifted) v -= baseline;
  auto d = long_division(shifted, taps);
  for (double& v : d) v += baseline;
  return d;
}

std::vector<double> convolve_steady(std::span<const double> driver, std::span<const double> taps, double baseline) {
  std::vector<double> shifted(driver.begin(), driver.end());
  for (double& v : shifted) v -= baseline;
  auto y = convolve(shifted, taps);
  for (double& v : y) v += baseline;
  return y;
}

namespace {

std::vector<double> rolling_median(std::span<const double> x, std::size_t half) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  std::vector<double> buf;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    buf.assign(x.begin() + static_cast<std::ptrdiff_t>(lo), x.begin() + static_cast<std::ptrdiff_t>(hi));
    auto mid = buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2);
    std::nth_element(buf.begin(), mid, buf.end());
    out[i] = *mid;
  }
  return out;
}

double percentile(std::span<const double> x, double q) {
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<double> smooth_seconds(std::span<const double> x, double seconds, double rate) {
  if (x.size() < 2) return {x.begin(), x.end()};
  int width = static_cast<int>(std::lround(seconds * rate));
  width = std::clamp(width, 2, static_cast<int>(x.size()));
  return preprocess::hanning_smooth(x, width);
}

// Raised-cosine smoothing with mirrored edges, so the alternating noise that
// deconvolution amplifies still cancels at the first and last samples.
std::vector<double> smooth_driver(std::span<const double> driver, int width) {
  const std::size_t n = driver.size();
  if (width < 2 || static_cast<std::size_t>(width) >= n) return {driver.begin(), driver.end()};
  const auto w = preprocess::hanning_weights(width);
  const auto left = static_cast<std::ptrdiff_t>(width / 2);
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  std::vector<double> out(n);
  for (std::ptrdiff_t i = 0; i <= last; ++i) {
    double acc = 0.0;
    for (std::ptrdiff_t k = 0; k <= width; ++k) {
      std::ptrdiff_t j = i - left + k;
      if (j < 0) j = -j;
      if (j > last) j = 2 * last - j;
      acc += w[static_cast<std::size_t>(k)] * driver[static_cast<std::size_t>(j)];
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

// Forward-only rate limiter.
void limit_slew(std::vector<double>& x, double slew) {
  for (std::size_t i = 1; i < x.size(); ++i) x[i] = std::clamp(x[i], x[i - 1] - slew, x[i - 1] + slew);
}

SampleSeries like(const SampleSeries& shape, std::vector<double> values) {
  SampleSeries s;
  s.start_time = shape.start_time;
  s.rate = shape.rate;
  s.values = std::move(values);
  return s;
}

}  // namespace

double estimate_noise_sigma(std::span<const double> signal) {
  if (signal.size() < 3) return 0.0;
  std::vector<double> d2(signal.size() - 2);
  for (std::size_t i = 1; i + 1 < signal.size(); ++i) d2[i - 1] = signal[i + 1] - 2.0 * signal[i] + signal[i - 1];
  const double med = percentile(d2, 0.5);
  for (double& v : d2) v = std::abs(v - med);
  return 1.4826 * percentile(d2, 0.5) / std::sqrt(6.0);
}

namespace {

double detection_threshold(const DecomposeConfig& config, double noise_sigma) {
  return std::max(config.amp_threshold, config.noise_floor_k * noise_sigma);
}

int smoothing_width(const DecomposeConfig& config, double rate) {
  return static_cast<int>(std::lround(std::max(0.0, config.driver_smooth) * rate));
}

}  // namespace

TonicEstimate estimate_tonic(std::span<const double> driver, const Kernel& kernel, const DecomposeConfig& config,
                             double noise_sigma) {
  if (!(config.tonic_window >= 10.0)) throw Error(ErrorCode::InvalidArgument, "tonic_window must be >= 10 s");
  TonicEstimate est;
  const std::size_t n = driver.size();
  if (n == 0) return est;

  const auto half = static_cast<std::size_t>(std::lround(config.tonic_window * kernel.rate / 2.0));
  const auto baseline = rolling_median(driver, half);
  const double peak_gain = kernel.peak_tap();
  const double threshold = detection_threshold(config, noise_sigma);
  const auto reach = static_cast<std::size_t>(std::lround(config.mask_decay_multiple * kernel.params.tau_decay * kernel.rate));
  const auto burst = static_cast<std::size_t>(std::max(1, smoothing_width(config, kernel.rate) / 2));

  std::vector<bool> masked(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const bool rising = i == 0 || driver[i] > driver[i - 1];
    const bool falling = i + 1 == n || driver[i] >= driver[i + 1];
    if (!(rising && falling) || driver[i] <= baseline[i]) continue;
    double mass = 0.0;
    for (std::size_t j = i >= burst ? i - burst : 0; j <= std::min(n - 1, i + burst); ++j) mass += driver[j] - baseline[j];
    if (mass * peak_gain < threshold) continue;
    const std::size_t lo = i >= reach ? i - reach : 0;
    const std::size_t hi = std::min(n - 1, i + reach);
    for (std::size_t j = lo; j <= hi; ++j) masked[j] = true;
  }

  if (std::all_of(masked.begin(), masked.end(), [](bool m) { return m; })) {
    est.all_masked = true;
    est.driver.assign(n, percentile(driver, 0.05));
    return est;
  }

  const auto anchor = static_cast<std::size_t>(std::max(1L, std::lround(2.0 * kernel.rate)));
  auto mean_of_clean = [&](std::size_t from, bool backwards) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < anchor; ++k) {
      if (backwards ? k > from : from + k >= n) break;
      const std::size_t j = backwards ? from - k : from + k;
      if (masked[j]) break;
      acc += driver[j];
      ++count;
    }
    return acc / static_cast<double>(count);
  };

  std::vector<double> filled(driver.begin(), driver.end());
  std::size_t i = 0;
  while (i < n) {
    if (!masked[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && masked[j]) ++j;
    if (i == 0) {
      std::fill(filled.begin(), filled.begin() + static_cast<std::ptrdiff_t>(j), mean_of_clean(j, false));
    } else if (j == n) {
      std::fill(filled.begin() + static_cast<std::ptrdiff_t>(i), filled.end(), mean_of_clean(i - 1, true));
    } else {
      const double y0 = mean_of_clean(i - 1, true);
      const double y1 = mean_of_clean(j, false);
      const double gap = static_cast<double>(j - i + 1);
      for (std::size_t k = i; k < j; ++k) filled[k] = y0 + (y1 - y0) * static_cast<double>(k - i + 1) / gap;
    }
    i = j;
  }
  est.driver = smooth_seconds(filled, config.tonic_window, kernel.rate);
  return est;
}

SampleSeries estimate_tonic(const SampleSeries& driver, const Kernel& kernel, const DecomposeConfig& config) {
  return like(driver, estimate_tonic(std::span<const double>(driver.values), kernel, config).driver);
}

namespace {

struct Candidate {
  double centre{0.0};  // fractional sample index
  double mass{0.0};
  std::size_t lo{0}, hi{0};  // driver segment [lo, hi)
  double variance{0.0};      // LS variance of mass per unit noise variance
};

// Unit-mass impulse at fractional index c, split between the two
// neighbouring samples, pushed through the kernel.
struct Template {
  std::ptrdiff_t first{0};
  std::vector<double> values;
};

Template impulse_response(double c, std::span<const double> taps) {
  const double base = std::floor(c);
  const double frac = c - base;
  Template t;
  t.first = static_cast<std::ptrdiff_t>(base);
  t.values.assign(taps.size() + 1, 0.0);
  for (std::size_t k = 0; k < taps.size(); ++k) {
    t.values[k] += (1.0 - frac) * taps[k];
    t.values[k + 1] += frac * taps[k];
  }
  return t;
}

// Solve the 3x3 symmetric system by Gaussian elimination with partial
// pivoting; returns false when singular.
bool solve3(std::array<std::array<double, 4>, 3> m, std::array<double, 3>& x) {
  for (int c = 0; c < 3; ++c) {
    int p = c;
    for (int r = c + 1; r < 3; ++r) {
      if (std::abs(m[r][c]) > std::abs(m[p][c])) p = r;
    }
    if (std::abs(m[p][c]) < 1e-12) return false;
    std::swap(m[p], m[c]);
    for (int r = 0; r < 3; ++r) {
      if (r == c) continue;
      const double f = m[r][c] / m[c][c];
      for (int k = c; k < 4; ++k) m[r][k] -= f * m[c][k];
    }
  }
  for (int c = 0; c < 3; ++c) x[c] = m[c][3] / m[c][c];
  return true;
}

// Gauss-Seidel sweeps over the candidates: each impulse size is refitted
// against the target minus every other candidate's response, over a local
// window that also carries an offset and a slope.
void refine_masses(std::vector<Candidate>& cands, std::span<const double> target, const Kernel& kernel, int sweeps) {
  const auto n = static_cast<std::ptrdiff_t>(target.size());
  std::vector<Template> templates;
  templates.reserve(cands.size());
  for (const auto& c : cands) templates.push_back(impulse_response(c.centre, kernel.taps));

  std::vector<double> model(target.size(), 0.0);
  auto add = [&](std::size_t j, double scale) {
    const auto& t = templates[j];
    for (std::size_t k = 0; k < t.values.size(); ++k) {
      const std::ptrdiff_t i = t.first + static_cast<std::ptrdiff_t>(k);
      if (i >= 0 && i < n) model[static_cast<std::size_t>(i)] += scale * t.values[k];
    }
  };
  for (std::size_t j = 0; j < cands.size(); ++j) add(j, cands[j].mass);

  const auto pre = static_cast<std::ptrdiff_t>(std::lround(2.0 * kernel.rate));
  const auto post = static_cast<std::ptrdiff_t>(kernel.argmax()) +
                    static_cast<std::ptrdiff_t>(std::lround(2.0 * kernel.params.tau_decay * kernel.rate));
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    for (std::size_t j = 0; j < cands.size(); ++j) {
      const auto& t = templates[j];
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, t.first - pre);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, t.first + post + 1);
      if (hi <= lo) continue;
      std::array<std::array<double, 4>, 3> m{};
      double tt = 0.0, ty = 0.0;
      for (std::ptrdiff_t i = lo; i < hi; ++i) {
        const auto u = static_cast<std::size_t>(i);
        const std::ptrdiff_t k = i - t.first;
        const double x0 = k >= 0 && k < static_cast<std::ptrdiff_t>(t.values.size()) ? t.values[static_cast<std::size_t>(k)] : 0.0;
        const double y = target[u] - model[u] + cands[j].mass * x0;
        const std::array<double, 3> row{x0, 1.0, static_cast<double>(i - t.first) / static_cast<double>(pre + post)};
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) m[r][c] += row[r] * row[c];
          m[r][3] += row[r] * y;
        }
        tt += x0 * x0;
        ty += x0 * y;
      }
      std::array<double, 3> x{};
      double mass = 0.0;
      double variance = std::numeric_limits<double>::infinity();
      if (hi - lo >= 6 && solve3(m, x)) {
        mass = x[0];
        auto unit = m;
        for (int r = 0; r < 3; ++r) unit[r][3] = r == 0 ? 1.0 : 0.0;
        std::array<double, 3> col{};
        if (solve3(unit, col)) variance = col[0];
      } else if (tt > 0.0) {
        mass = ty / tt;
        variance = 1.0 / tt;
      }
      cands[j].variance = variance;
      add(j, mass - cands[j].mass);
      cands[j].mass = mass;
    }
  }
}

std::vector<Candidate> find_responses(const SampleSeries& phasic_driver, const Kernel& kernel,
                                      const DecomposeConfig& config, double noise_sigma,
                                      std::span<const double> target) {
  const auto& d = phasic_driver.values;
  const std::size_t n = d.size();
  if (!target.empty() && target.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "detect_scrs target length differs from the driver");
  }
  const double floor = config.onset_fraction * config.amp_threshold;
  const double threshold = detection_threshold(config, noise_sigma);
  const double peak_gain = kernel.peak_tap();

  std::vector<Candidate> cands;
  auto emit = [&](std::size_t s, std::size_t e) {
    std::size_t peak = s;
    double mass = 0.0;
    for (std::size_t i = s; i < e; ++i) {
      if (d[i] > d[peak]) peak = i;
      mass += d[i];
    }
    double core = 0.0;
    double moment = 0.0;
    for (std::size_t i = s; i < e; ++i) {
      if (d[i] < config.onset_fraction * d[peak]) continue;
      core += d[i];
      moment += d[i] * static_cast<double>(i);
    }
    cands.push_back({core > 0.0 ? moment / core : static_cast<double>(peak), mass, s, e});
  };

  std::size_t i = 0;
  while (i < n) {
    if (!(d[i] > floor)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && d[j] > floor) ++j;
    // Region [i, j); split at interior local minima.
    std::size_t seg = i;
    for (std::size_t k = i + 1; k + 1 < j; ++k) {
      if (d[k] < d[k - 1] && d[k] <= d[k + 1]) {
        emit(seg, k);
        seg = k;
      }
    }
    emit(seg, j);
    i = j;
  }

  // Pieces of one burst that a noisy dip split apart are merged back when
  // their centroids sit within half the driver smoothing width.
  const double merge = std::max(1.0, smoothing_width(config, phasic_driver.rate) / 2.0);
  std::vector<Candidate> merged;
  for (const auto& c : cands) {
    if (!merged.empty() && c.centre - merged.back().centre < merge) {
      auto& m = merged.back();
      const double total = m.mass + c.mass;
      if (total > 0.0) m.centre = (m.centre * m.mass + c.centre * c.mass) / total;
      m.mass = total;
      m.hi = c.hi;
    } else {
      merged.push_back(c);
    }
  }
  cands.clear();
  for (const auto& c : merged) {
    if (c.mass * peak_gain >= 0.5 * threshold) cands.push_back(c);
  }

  std::vector<double> reconvolved;
  if (target.empty()) {
    reconvolved = convolve(d, kernel.taps);
    target = reconvolved;
  }
  for (int round = 0; round < 3 && !cands.empty(); ++round) {
    refine_masses(cands, target, kernel, 3);
    const auto before = cands.size();
    // Responses must clear the threshold and be significant against the
    // fit's own uncertainty, which grows where the window is cut by an edge.
    std::erase_if(cands, [&](const Candidate& c) {
      const bool weak = noise_sigma > 0.0 && c.mass < config.noise_floor_k * noise_sigma * std::sqrt(c.variance);
      return c.mass * peak_gain < threshold || weak;
    });
    if (cands.size() == before && round > 0) break;
  }
  return cands;
}

std::vector<SCREvent> to_events(const std::vector<Candidate>& cands, const SampleSeries& phasic_driver,
                                const Kernel& kernel) {
  const double dt = 1.0 / phasic_driver.rate;
  const double peak_gain = kernel.peak_tap();
  const double peak_delay = static_cast<double>(kernel.argmax()) / phasic_driver.rate;
  std::vector<SCREvent> events;
  events.reserve(cands.size());
  for (const auto& c : cands) {
    const double onset = phasic_driver.start_time + c.centre / phasic_driver.rate;
    events.push_back({onset, onset + peak_delay, c.mass * peak_gain, c.mass * dt});
  }
  return events;
}

}  // namespace

std::vector<SCREvent> detect_scrs(const SampleSeries& phasic_driver, const Kernel& kernel,
                                  const DecomposeConfig& config, double noise_sigma, std::span<const double> target) {
  return to_events(find_responses(phasic_driver, kernel, config, noise_sigma, target), phasic_driver, kernel);
}


namespace {

void check_length(const SampleSeries& signal, const DecomposeConfig& config) {
  if (signal.empty() || signal.duration() < config.min_duration) {
    throw Error(ErrorCode::SignalTooShort, "decomposition needs at least " + std::to_string(config.min_duration) +
                                               " s of signal, got " + std::to_string(signal.duration()) + " s");
  }
}

struct DriverParts {
  std::vector<double> driver;
  TonicEstimate tonic;
  double noise_sigma{0.0};
};

DriverParts split_driver(const SampleSeries& signal, const Kernel& kernel, const DecomposeConfig& config) {
  DriverParts parts;
  const auto raw = deconvolve_steady(signal.values, kernel.taps, signal.values.front());
  parts.driver = smooth_driver(raw, smoothing_width(config, signal.rate));
  parts.noise_sigma = config.noise_floor_k > 0.0 ? estimate_noise_sigma(signal.values) : 0.0;
  parts.tonic = estimate_tonic(parts.driver, kernel, config, parts.noise_sigma);
  return parts;
}

std::vector<double> tonic_series(const std::vector<double>& tonic_driver, const Kernel& kernel,
                                 const DecomposeConfig& config) {
  auto tonic = convolve_steady(tonic_driver, kernel.taps, tonic_driver.front());
  limit_slew(tonic, config.slew);
  return tonic;
}

struct PhasicParts {
  std::vector<double> tonic;
  std::vector<double> phasic_driver;
  std::vector<Candidate> responses;
};

// Clipped excess over the tonic driver. Only the segments that carry a
// detected response are kept; everything else (clipped noise included)
// stays in the residual.
PhasicParts split_phasic(const SampleSeries& signal, const Kernel& kernel, const DecomposeConfig& config,
                         const DriverParts& parts) {
  const std::size_t n = signal.size();
  PhasicParts out;
  out.tonic = tonic_series(parts.tonic.driver, kernel, config);
  std::vector<double> phasic_target(n);
  for (std::size_t i = 0; i < n; ++i) phasic_target[i] = signal.values[i] - out.tonic[i];

  auto excess = like(signal, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) excess.values[i] = std::max(0.0, parts.driver[i] - parts.tonic.driver[i]);
  out.responses = find_responses(excess, kernel, config, parts.noise_sigma, phasic_target);
  out.phasic_driver.assign(n, 0.0);
  for (const auto& r : out.responses) {
    for (std::size_t i = r.lo; i < r.hi; ++i) out.phasic_driver[i] = excess.values[i];
  }
  return out;
}

}  // namespace

Decomposition cda(const SampleSeries& signal, const BatemanParams& params, const DecomposeConfig& config) {
  check_length(signal, config);
  const auto kernel = bateman_kernel(params, signal.rate);
  auto parts = split_driver(signal, kernel, config);
  auto phasic = split_phasic(signal, kernel, config, parts);
  const std::size_t n = signal.size();

  Decomposition out;
  out.params = params;
  out.tonic_fallback = parts.tonic.all_masked;
  out.tonic = like(signal, std::move(phasic.tonic));
  out.phasic = like(signal, convolve(phasic.phasic_driver, kernel.taps));
  out.phasic_driver = like(signal, std::move(phasic.phasic_driver));
  out.driver = like(signal, std::move(parts.driver));
  out.noise_sigma = parts.noise_sigma;
  out.scrs = to_events(phasic.responses, out.phasic_driver, kernel);

  std::vector<double> residual(n);
  for (std::size_t i = 0; i < n; ++i) residual[i] = signal.values[i] - out.tonic.values[i] - out.phasic.values[i];
  out.residual_rms = rms(residual);
  return out;
}

DiscreteDecomposition dda(const SampleSeries& signal, const BatemanParams& params, const DecomposeConfig& config) {
  check_length(signal, config);
  const auto kernel = bateman_kernel(params, signal.rate);
  const auto parts = split_driver(signal, kernel, config);
  const auto tonic = tonic_series(parts.tonic.driver, kernel, config);

  // Causal nonnegative deconvolution of the tonic-free signal: whenever the
  // next driver value would be negative it is floored at zero, the floored
  // amount goes to the overshoot series, and later samples are fitted
  // against the floored history.
  const std::size_t n = signal.size();
  const auto& taps = kernel.taps;
  std::vector<double> target(n);
  for (std::size_t i = 0; i < n; ++i) target[i] = signal.values[i] - tonic[i];
  const auto smoothed_target = smooth_driver(target, smoothing_width(config, signal.rate));

  std::vector<double> d(n, 0.0);
  std::vector<double> overshoot(n, 0.0);
  for (std::size_t m = 0; m < n; ++m) {
    const std::size_t kmax = std::min(m + 1, taps.size());
    double acc = smoothed_target[m];
    for (std::size_t k = 1; k < kmax; ++k) acc -= d[m - k] * taps[k];
    const double value = acc / taps[0];
    if (value < 0.0) {
      overshoot[m] = -value;
      d[m] = 0.0;
    } else {
      d[m] = value;
    }
  }

  DiscreteDecomposition out;
  out.params = params;
  out.tonic_fallback = parts.tonic.all_masked;
  out.tonic = like(signal, tonic);
  out.driver = like(signal, std::move(d));
  out.overshoot = like(signal, std::move(overshoot));
  out.noise_sigma = parts.noise_sigma;
  out.impulses = detect_scrs(out.driver, kernel, config, parts.noise_sigma, target);
  return out;
}

bool within_bounds(const BatemanParams& p, const TauBounds& b) {
  return p.tau_rise >= b.rise_min && p.tau_rise <= b.rise_max && p.tau_decay >= b.decay_min &&
         p.tau_decay <= b.decay_max && p.tau_rise < p.tau_decay;
}

double tau_objective(const SampleSeries& signal, const BatemanParams& params, const DecomposeConfig& config) {
  if (!within_bounds(params)) return std::numeric_limits<double>::infinity();
  const auto kernel = bateman_kernel(params, signal.rate);
  const auto parts = split_driver(signal, kernel, config);
  const auto phasic = split_phasic(signal, kernel, config, parts);
  const std::size_t n = signal.size();

  // Misfit of a sparse model: each detected response as one impulse of its
  // fitted mass. What the impulses leave behind, minus a slow baseline, is
  // noise when the taus are right and structured error when they are not.
  std::vector<double> impulses(n, 0.0);
  for (const auto& r : phasic.responses) {
    const auto t = impulse_response(r.centre, std::span<const double>(&r.mass, 1));
    for (std::size_t k = 0; k < t.values.size(); ++k) {
      const std::ptrdiff_t i = t.first + static_cast<std::ptrdiff_t>(k);
      if (i >= 0 && i < static_cast<std::ptrdiff_t>(n)) impulses[static_cast<std::size_t>(i)] += t.values[k];
    }
  }
  const auto model = convolve(impulses, kernel.taps);
  std::vector<double> rest(n);
  for (std::size_t i = 0; i < n; ++i) rest[i] = signal.values[i] - model[i];
  const auto slow = smooth_seconds(rest, config.tonic_window, signal.rate);
  for (std::size_t i = 0; i < n; ++i) rest[i] -= slow[i];

  std::vector<double> negative(n);
  for (std::size_t i = 0; i < n; ++i) negative[i] = std::min(0.0, parts.driver[i] - parts.tonic.driver[i]);
  return rms(rest) + config.beta * kernel.peak_tap() * rms(negative);
}

TauFit optimize_tau(const SampleSeries& signal, const BatemanParams& init, const DecomposeConfig& config) {
  if (!within_bounds(init)) {
    throw Error(ErrorCode::BoundsViolation, "initial taus (" + std::to_string(init.tau_rise) + ", " +
                                                std::to_string(init.tau_decay) + ") outside the search bounds");
  }
  check_length(signal, config);
  auto objective = [&](std::span<const double> x) {
    return tau_objective(signal, BatemanParams{x[0], x[1]}, config);
  };
  const auto result = nelder_mead(objective, {init.tau_rise, init.tau_decay},
                                  {0.25 * init.tau_rise, 0.25 * init.tau_decay}, config.max_evaluations);
  TauFit fit;
  fit.params = {result.x[0], result.x[1]};
  fit.objective = result.value;
  fit.initial_objective = tau_objective(signal, init, config);
  fit.evaluations = result.evaluations;
  return fit;
}

}  // namespace hydra::decompose
