#include <chrono>
#include <cmath>
#include <random>

#include "doctest.h"
#include "hydra/decompose.hpp"
#include "hydra/preprocess.hpp"
#include "support/synth.hpp"

using namespace hydra;
using namespace hydra::decompose;

namespace {

// Independent discretization: midpoint samples of the closed form scaled to
// unit sum, computed without the library.
std::vector<double> reference_taps(double rise, double decay, double rate, std::size_t count) {
  std::vector<double> t(count);
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) sum += t[i] = synth::bateman((i + 0.5) / rate, rise, decay);
  for (double& v : t) v /= sum;
  return t;
}

std::vector<double> naive_convolve(const std::vector<double>& d, const std::vector<double>& k) {
  std::vector<double> y(d.size(), 0.0);
  for (std::size_t n = 0; n < d.size(); ++n)
    for (std::size_t j = 0; j <= n && j < k.size(); ++j) y[n] += d[n - j] * k[j];
  return y;
}

double rms_of(const std::vector<double>& x) {
  double a = 0.0;
  for (double v : x) a += v * v;
  return std::sqrt(a / static_cast<double>(x.size()));
}

double peak_to_peak(const std::vector<double>& x) {
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return *hi - *lo;
}

SampleSeries flat(double v, double seconds, double rate = 4.0) {
  return {0.0, rate, std::vector<double>(static_cast<std::size_t>(seconds * rate), v)};
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected hydra::Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("bateman kernel shape") {
  const auto k = bateman_kernel({0.75, 2.0}, 4.0, 10.0);
  CHECK(k.taps.size() >= 40);
  double sum = 0.0;
  for (double v : k.taps) {
    CHECK(v > 0.0);
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  // Closed-form maximizer of the continuous shape.
  const double t_star = 0.75 * 2.0 / (2.0 - 0.75) * std::log(2.0 / 0.75);
  CHECK(t_star == doctest::Approx(1.177).epsilon(1e-3));
  CHECK(std::abs((k.argmax() + 0.5) / 4.0 - t_star) <= 0.25);

  const auto ref = reference_taps(0.75, 2.0, 4.0, k.taps.size());
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(k.taps[i] == doctest::Approx(ref[i]).epsilon(1e-9));

  CHECK(code_of([] { bateman_kernel({2.0, 0.75}, 4.0, 20.0); }) == ErrorCode::InvalidTaus);
  CHECK(code_of([] { bateman_kernel({-0.1, 0.75}, 4.0, 20.0); }) == ErrorCode::InvalidTaus);
  CHECK(code_of([] { bateman_kernel({0.75, 2.0}, 4.0, 9.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("deconvolve with an identity kernel returns the signal") {
  Kernel id;
  id.rate = 4.0;
  id.taps = {1.0, 0.0, 0.0, 0.0};
  SampleSeries s{0.0, 4.0, {0.3, 1.5, -2.0, 7.0}};
  CHECK(deconvolve(s, id).values == s.values);
}

TEST_CASE("deconvolve errors") {
  const auto k = bateman_kernel({0.75, 2.0}, 4.0);
  CHECK(code_of([&] { deconvolve(SampleSeries{0.0, 8.0, {1.0}}, k); }) == ErrorCode::RateMismatch);
  Kernel bad;
  bad.rate = 4.0;
  bad.taps = {0.0, 1.0};
  CHECK(code_of([&] { deconvolve(SampleSeries{0.0, 4.0, {1.0}}, bad); }) == ErrorCode::ZeroLeadingTap);
  const auto zeros = deconvolve(flat(0.0, 10.0), k);
  for (double v : zeros.values) CHECK(v == 0.0);
}

TEST_CASE("deconvolve inverts a forward convolution of an impulse train") {
  const auto k = bateman_kernel({0.75, 2.0}, 4.0);
  std::vector<double> d(200, 0.0);
  d[2] = 1.0;
  d[60] = 0.5;
  d[61] = 0.25;
  const auto y = naive_convolve(d, k.taps);
  const auto back = deconvolve(SampleSeries{0.0, 4.0, y}, k);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::abs(back.values[i] - d[i]) < 1e-6);
}

TEST_CASE("round trip property over random kernels and drivers") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    const double rise = 0.1 + 1.5 * u(rng);
    const double decay = rise + 0.2 + 6.0 * u(rng);
    const auto k = bateman_kernel({rise, decay}, 4.0);
    std::vector<double> d(400, 0.0);
    for (double& v : d) v = u(rng) < 0.05 ? 2.0 * u(rng) : 0.0;
    const auto y = convolve(d, k.taps);
    const auto back = deconvolve(SampleSeries{0.0, 4.0, y}, k);
    double worst = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) worst = std::max(worst, std::abs(back.values[i] - d[i]));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("steady variants undo a nonzero baseline") {
  const auto k = bateman_kernel({0.75, 2.0}, 4.0);
  std::vector<double> d(100, 1.3);
  d[40] += 2.0;
  const auto y = convolve_steady(d, k.taps, 1.3);
  CHECK(y[0] == doctest::Approx(1.3));
  const auto back = deconvolve_steady(y, k.taps, 1.3);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(back[i] == doctest::Approx(d[i]).epsilon(1e-9));
}

TEST_CASE("estimate_tonic") {
  const auto k = bateman_kernel({0.75, 2.0}, 4.0);
  DecomposeConfig cfg;

  SUBCASE("no peaks: masking is a no-op") {
    std::vector<double> d(240);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = 1.0 + 0.001 * std::sin(i * 0.01);
    const auto t = estimate_tonic(d, k, cfg);
    CHECK_FALSE(t.all_masked);
    const auto smoothed = preprocess::hanning_smooth(d, 40);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(t.driver[i] == doctest::Approx(smoothed[i]).epsilon(1e-12));
  }
  SUBCASE("flat driver plus one impulse") {
    std::vector<double> d(240, 0.2);
    d[120] += 5.0;
    const auto t = estimate_tonic(d, k, cfg);
    for (double v : t.driver) CHECK(std::abs(v - 0.2) <= 1e-3);
  }
  SUBCASE("zero driver") {
    const auto t = estimate_tonic(std::vector<double>(240, 0.0), k, cfg);
    for (double v : t.driver) CHECK(v == 0.0);
  }
  SUBCASE("dense responses fall back to the 5th percentile with a flag") {
    std::vector<double> d(240, 0.5);
    for (std::size_t i = 0; i < d.size(); i += 8) d[i] += 3.0;
    const auto t = estimate_tonic(d, k, cfg);
    CHECK(t.all_masked);
    for (double v : t.driver) CHECK(v == doctest::Approx(0.5));
  }
  SUBCASE("window shorter than 10 s is rejected") {
    cfg.tonic_window = 5.0;
    CHECK(code_of([&] { estimate_tonic(std::vector<double>(240, 0.0), k, cfg); }) == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("detect_scrs examples") {
  const auto k = bateman_kernel({0.75, 2.0}, 4.0);
  const auto ref = reference_taps(0.75, 2.0, 4.0, k.taps.size());
  const double peak = *std::max_element(ref.begin(), ref.end());
  DecomposeConfig cfg;
  SampleSeries d{0.0, 4.0, std::vector<double>(240, 0.0)};

  CHECK(detect_scrs(d, k, cfg).empty());

  d.values[80] = 0.3 / peak;
  auto one = detect_scrs(d, k, cfg);
  REQUIRE(one.size() == 1);
  CHECK(one[0].amplitude == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(one[0].onset == doctest::Approx(20.0));
  CHECK(one[0].peak_time >= one[0].onset);
  CHECK(one[0].area == doctest::Approx(0.3 / peak / 4.0));

  // > 3 tau_d apart: two events.
  d.values[80 + 28] = 0.2 / peak;
  auto two = detect_scrs(d, k, cfg);
  REQUIRE(two.size() == 2);
  CHECK(two[1].onset == doctest::Approx(27.0));
  CHECK(two[1].amplitude == doctest::Approx(0.2).epsilon(1e-6));

  // A single impulse falling between samples (split over two neighbours):
  // one event, centred between them.
  SampleSeries split{0.0, 4.0, std::vector<double>(240, 0.0)};
  split.values[100] = 0.15 / peak;
  split.values[101] = 0.15 / peak;
  auto merged = detect_scrs(split, k, cfg);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].onset == doctest::Approx(25.125));
  CHECK(merged[0].amplitude == doctest::Approx(0.3).epsilon(1e-3));

  // Below threshold: nothing.
  SampleSeries tiny{0.0, 4.0, std::vector<double>(240, 0.0)};
  tiny.values[100] = 0.005 / peak;
  CHECK(detect_scrs(tiny, k, cfg).empty());
}

TEST_CASE("detect_scrs invariants on random drivers") {
  const auto k = bateman_kernel({0.75, 2.0}, 4.0);
  DecomposeConfig cfg;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    SampleSeries d{0.0, 4.0, std::vector<double>(400, 0.0)};
    for (double& v : d.values) v = u(rng) < 0.1 ? 3.0 * u(rng) : 0.0;
    for (const auto& e : detect_scrs(d, k, cfg)) {
      CHECK(e.amplitude >= cfg.amp_threshold);
      CHECK(e.peak_time >= e.onset);
      CHECK(e.area > 0.0);
    }
  }
}

TEST_CASE("cda recovers two responses on a constant tonic") {
  auto sig = flat(1.0, 60.0);
  synth::add_scr(sig.values, {40, 0.3}, 0.75, 2.0, 4.0);
  synth::add_scr(sig.values, {80, 0.5}, 0.75, 2.0, 4.0);
  const auto out = cda(sig, {0.75, 2.0});
  REQUIRE(out.scrs.size() == 2);
  CHECK(std::abs(out.scrs[0].onset - 10.0) <= 0.25);
  CHECK(std::abs(out.scrs[1].onset - 20.0) <= 0.25);
  CHECK(std::abs(out.scrs[0].amplitude / 0.3 - 1.0) <= 0.1);
  CHECK(std::abs(out.scrs[1].amplitude / 0.5 - 1.0) <= 0.1);
}

TEST_CASE("cda on a constant signal") {
  const auto out = cda(flat(1.0, 60.0), {0.75, 2.0});
  for (double v : out.tonic.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
  for (double v : out.phasic_driver.values) CHECK(std::abs(v) < 1e-9);
  CHECK(out.scrs.empty());
  CHECK(out.residual_rms < 1e-9);
}

TEST_CASE("cda is deterministic and rejects short input") {
  const auto sc = synth::scr_scenario(5, 120, 4, 0.75, 2.0, 6.5, 20.0);
  const auto a = cda(sc.signal, {0.75, 2.0});
  const auto b = cda(sc.signal, {0.75, 2.0});
  CHECK(a.tonic.values == b.tonic.values);
  CHECK(a.phasic_driver.values == b.phasic_driver.values);
  CHECK(a.scrs.size() == b.scrs.size());
  CHECK(a.residual_rms == b.residual_rms);
  CHECK(code_of([] { cda(flat(1.0, 29.0), {0.75, 2.0}); }) == ErrorCode::SignalTooShort);
}

TEST_CASE("cda output properties on synthetic sessions") {
  const DecomposeConfig cfg;
  for (int seed = 0; seed < 20; ++seed) {
    const auto sc = synth::scr_scenario(100 + seed, 300, 1 + seed % 10, 0.75, 2.0, 6.5, 20.0);
    const auto out = cda(sc.signal, {0.75, 2.0}, cfg);
    const std::size_t n = sc.signal.size();
    // residual_rms is exactly the reconstruction residual.
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = sc.signal.values[i] - out.tonic.values[i] - out.phasic.values[i];
    CHECK(out.residual_rms == doctest::Approx(rms_of(r)).epsilon(1e-12));
    CHECK(out.residual_rms <= 0.02 * peak_to_peak(sc.signal.values));
    // phasic is the phasic driver through the kernel.
    const auto k = bateman_kernel({0.75, 2.0}, 4.0);
    const auto ph = naive_convolve(out.phasic_driver.values, k.taps);
    for (std::size_t i = 0; i < n; i += 7) CHECK(out.phasic.values[i] == doctest::Approx(ph[i]).epsilon(1e-9));
    for (double v : out.phasic_driver.values) CHECK(v >= 0.0);
    for (std::size_t i = 1; i < n; ++i) CHECK(std::abs(out.tonic.values[i] - out.tonic.values[i - 1]) <= cfg.slew + 1e-12);
  }
}

TEST_CASE("tonic slew bound holds on a step") {
  auto sig = flat(1.0, 60.0);
  for (std::size_t i = 120; i < sig.size(); ++i) sig.values[i] = 4.0;
  const DecomposeConfig cfg;
  const auto out = cda(sig, {0.75, 2.0}, cfg);
  for (std::size_t i = 1; i < out.tonic.size(); ++i)
    CHECK(std::abs(out.tonic.values[i] - out.tonic.values[i - 1]) <= cfg.slew + 1e-12);
  const auto dd = dda(sig, {0.75, 2.0}, cfg);
  for (std::size_t i = 1; i < dd.tonic.size(); ++i)
    CHECK(std::abs(dd.tonic.values[i] - dd.tonic.values[i - 1]) <= cfg.slew + 1e-12);
}

TEST_CASE("dda on responses from nonnegative impulses") {
  for (int seed = 0; seed < 10; ++seed) {
    auto sc = synth::scr_scenario(seed, 300, 1 + seed, 0.75, 2.0, 6.5, 1000.0);
    for (std::size_t i = 0; i < sc.signal.size(); ++i) sc.signal.values[i] = 1.2 + sc.phasic[i];
    const auto out = dda(sc.signal, {0.75, 2.0});
    CHECK(rms_of(out.overshoot.values) < 1e-6);
    REQUIRE(out.impulses.size() == sc.events.size());
    for (std::size_t i = 0; i < sc.events.size(); ++i) {
      CHECK(std::abs((out.impulses[i].onset - sc.signal.start_time) * 4.0 - sc.events[i].index) <= 1.0);
      CHECK(std::abs(out.impulses[i].amplitude / sc.events[i].amplitude - 1.0) <= 0.1);
    }
  }
}

TEST_CASE("dda on a constant signal") {
  const auto out = dda(flat(2.0, 60.0), {0.75, 2.0});
  CHECK(out.impulses.empty());
  CHECK(rms_of(out.overshoot.values) < 1e-9);
}

TEST_CASE("dda keeps the driver nonnegative through a negative step") {
  auto sig = flat(2.0, 60.0);
  synth::add_scr(sig.values, {40, 0.4}, 0.75, 2.0, 4.0);
  for (std::size_t i = 140; i < sig.size(); ++i) sig.values[i] -= 1.5;
  const auto out = dda(sig, {0.75, 2.0});
  CHECK(rms_of(out.overshoot.values) > 0.0);
  for (double v : out.driver.values) CHECK(v >= -1e-9);
  for (const auto& e : out.impulses) CHECK(e.amplitude >= 0.0);
}

TEST_CASE("nelder_mead minimizes a quadratic and tracks the best point") {
  auto f = [](std::span<const double> x) { return (x[0] - 1.0) * (x[0] - 1.0) + 10.0 * (x[1] + 2.0) * (x[1] + 2.0); };
  const auto r = nelder_mead(f, {5.0, 5.0}, {1.0, 1.0}, 500);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(r.x[1] == doctest::Approx(-2.0).epsilon(1e-3));
  CHECK(r.value <= f(std::vector<double>{5.0, 5.0}));
  const auto capped = nelder_mead(f, {5.0, 5.0}, {1.0, 1.0}, 7);
  CHECK(capped.evaluations <= 7);
}

TEST_CASE("optimize_tau recovers generator taus") {
  for (int seed = 0; seed < 3; ++seed) {
    const auto sc = synth::scr_scenario(seed, 300, 6, 0.75, 2.0, 6.5, 20.0);
    const DecomposeConfig cfg;
    const auto fit = optimize_tau(sc.signal, {0.75, 2.0}, cfg);
    CHECK(std::abs(fit.params.tau_rise / 0.75 - 1.0) <= 0.25);
    CHECK(std::abs(fit.params.tau_decay / 2.0 - 1.0) <= 0.25);
    CHECK(fit.objective <= tau_objective(sc.signal, {0.75, 2.0}, cfg) + 1e-9);
    CHECK(fit.evaluations <= cfg.max_evaluations);

    const auto far = optimize_tau(sc.signal, {1.0, 3.0}, cfg);
    CHECK(far.objective <= far.initial_objective);
    CHECK(std::abs(far.params.tau_rise / 0.75 - 1.0) <= 0.25);
    CHECK(std::abs(far.params.tau_decay / 2.0 - 1.0) <= 0.25);
    CHECK(within_bounds(far.params));
  }
}

TEST_CASE("optimize_tau bounds") {
  const auto sc = synth::scr_scenario(1, 60, 2, 0.75, 2.0, 6.5, 20.0);
  CHECK(code_of([&] { optimize_tau(sc.signal, {0.05, 2.0}); }) == ErrorCode::BoundsViolation);
  CHECK(code_of([&] { optimize_tau(sc.signal, {1.5, 1.0}); }) == ErrorCode::BoundsViolation);
  CHECK(std::isinf(tau_objective(sc.signal, {0.75, 20.0}, {})));
}
