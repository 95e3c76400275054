#include <cmath>
#include <random>

#include "doctest.h"
#include "hydra/numeric_text.hpp"
#include "hydra/signal.hpp"

using namespace hydra;

namespace {

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

TEST_CASE("parse_e4_csv maps headers and body") {
  const auto s = parse_e4_csv("1587600000.0\n4.0\n0.5\n0.6\n");
  CHECK(s.start_time == 1587600000.0);
  CHECK(s.rate == 4.0);
  REQUIRE(s.values.size() == 2);
  CHECK(s.values[0] == 0.5);
  CHECK(s.values[1] == 0.6);
}

TEST_CASE("parse_e4_csv accepts CRLF and trailing blank lines") {
  const auto s = parse_e4_csv("100\r\n4\r\n1.5\r\n2.5\r\n\r\n");
  CHECK(s.values == std::vector<double>{1.5, 2.5});
}

TEST_CASE("parse_e4_csv errors") {
  CHECK(code_of([] { parse_e4_csv("1587600000.0\n4.0\n"); }) == ErrorCode::EmptyBody);
  CHECK(code_of([] { parse_e4_csv("abc\n4.0\n0.5\n"); }) == ErrorCode::MalformedHeader);
  CHECK(code_of([] { parse_e4_csv("1.0\n"); }) == ErrorCode::MalformedHeader);
  CHECK(code_of([] { parse_e4_csv("1.0\n0\n0.5\n"); }) == ErrorCode::MalformedHeader);
  try {
    parse_e4_csv("1.0\n4.0\n0.5\nx\n");
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonNumericSample);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  CHECK(code_of([] { parse_e4_csv("1.0\n4.0\nnan\n"); }) == ErrorCode::NonNumericSample);
}

TEST_CASE("csv parse -> serialize -> parse is the identity") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-5.0, 50.0);
  for (int trial = 0; trial < 50; ++trial) {
    SampleSeries s;
    s.start_time = 1.5e9 + u(rng);
    s.rate = 0.5 + std::abs(u(rng));
    for (int i = 0; i < 100; ++i) s.values.push_back(u(rng));
    const auto back = parse_e4_csv(serialize_e4_csv(s));
    CHECK(back.start_time == s.start_time);
    CHECK(back.rate == s.rate);
    CHECK(back.values == s.values);
  }
}

TEST_CASE("resample") {
  SampleSeries s{0.0, 4.0, {1, 1, 1, 1, 1}};
  CHECK(resample(s, 2.0).values == std::vector<double>{1, 1, 1});

  SampleSeries ramp{0.0, 4.0, {0, 1, 2, 3}};
  const auto up = resample(ramp, 8.0);
  // Oracle: value at t is t * 4 on this ramp.
  REQUIRE(up.size() == 7);
  for (std::size_t j = 0; j < up.size(); ++j) CHECK(up.values[j] == doctest::Approx(j / 8.0 * 4.0).epsilon(1e-12));

  CHECK(resample(ramp, 4.0).values == ramp.values);
  CHECK(code_of([] { resample(SampleSeries{}, 2.0); }) == ErrorCode::EmptySeries);
}

TEST_CASE("resample to a non-integral ratio keeps endpoints") {
  SampleSeries s{10.0, 4.0, {}};
  for (int i = 0; i < 41; ++i) s.values.push_back(std::sin(i * 0.1));
  const auto r = resample(s, 3.0);
  CHECK(r.start_time == 10.0);
  CHECK(r.values.front() == s.values.front());
  CHECK(r.values.back() == doctest::Approx(s.values.back()));
}

TEST_CASE("level_at") {
  AnnotationTrack track{HydrationLevel::WellHydrated, {{100, HydrationLevel::Hydrated}}};
  CHECK(level_at(track, 50) == HydrationLevel::WellHydrated);
  CHECK(level_at(track, 100) == HydrationLevel::Hydrated);
  AnnotationTrack two{HydrationLevel::WellHydrated,
                      {{100, HydrationLevel::Hydrated}, {200, HydrationLevel::Dehydrated}}};
  CHECK(level_at(two, 150) == HydrationLevel::Hydrated);
  CHECK(level_at(two, 200) == HydrationLevel::Dehydrated);
  CHECK(code_of([&] { level_at(two, 500, TimeSpan{0, 400}); }) == ErrorCode::OutOfRange);
}

TEST_CASE("level_at is right-continuous and piecewise constant") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    AnnotationTrack track;
    track.initial_level = level_from_int(static_cast<int>(u(rng) * 4));
    double t = 0.0;
    HydrationLevel prev = track.initial_level;
    for (int k = 0; k < 5; ++k) {
      t += 1.0 + 100.0 * u(rng);
      HydrationLevel next;
      do next = level_from_int(static_cast<int>(u(rng) * 4)); while (next == prev);
      track.transitions.push_back({t, next});
      prev = next;
    }
    validate(track);
    for (const auto& tr : track.transitions) {
      CHECK(level_at(track, tr.time) == tr.level);
      CHECK(level_at(track, std::nextafter(tr.time, 1e300)) == tr.level);
      CHECK(level_at(track, std::nextafter(tr.time, -1e300)) != tr.level);
    }
  }
}

TEST_CASE("track validation rejects non-increasing times and self transitions") {
  AnnotationTrack same{HydrationLevel::Hydrated, {{10, HydrationLevel::Dehydrated}, {10, HydrationLevel::Hydrated}}};
  CHECK(code_of([&] { validate(same); }) == ErrorCode::InvalidAnnotation);
  AnnotationTrack back{HydrationLevel::Hydrated, {{20, HydrationLevel::Dehydrated}, {10, HydrationLevel::Hydrated}}};
  CHECK(code_of([&] { validate(back); }) == ErrorCode::InvalidAnnotation);
  AnnotationTrack self{HydrationLevel::Hydrated, {{10, HydrationLevel::Hydrated}}};
  CHECK(code_of([&] { validate(self); }) == ErrorCode::InvalidAnnotation);
  AnnotationTrack outside{HydrationLevel::Hydrated, {{500, HydrationLevel::Dehydrated}}};
  CHECK(code_of([&] { validate(outside, TimeSpan{0, 100}); }) == ErrorCode::InvalidAnnotation);
  CHECK(code_of([] { level_from_int(4); }) == ErrorCode::InvalidAnnotation);
}

TEST_CASE("normalize_spans clamps, sorts and merges") {
  std::vector<ArtifactSpan> spans{{50, 60, ArtifactReason::Other},
                                  {-5, 3, ArtifactReason::Movement},
                                  {55, 70, ArtifactReason::Movement},
                                  {200, 300, ArtifactReason::DeviceOff}};
  const auto out = normalize_spans(spans, TimeSpan{0, 100});
  REQUIRE(out.size() == 2);
  CHECK(out[0] == ArtifactSpan{0, 3, ArtifactReason::Movement});
  CHECK(out[1] == ArtifactSpan{50, 70, ArtifactReason::Other});
  for (std::size_t i = 1; i < out.size(); ++i) CHECK(out[i - 1].t_end < out[i].t_start);
  CHECK(code_of([] { normalize_spans({{5, 5, ArtifactReason::Other}}); }) == ErrorCode::InvalidAnnotation);
}

TEST_CASE("annotation JSON round trip") {
  AnnotationDocument doc;
  doc.track = {HydrationLevel::Hydrated, {{1000.25, HydrationLevel::Dehydrated}, {2000.5, HydrationLevel::VeryDehydrated}}};
  doc.artifacts = {{1100, 1110.5, ArtifactReason::DeviceOff}, {1500, 1501, ArtifactReason::Movement}};
  const auto text = serialize_annotation_json(doc);
  CHECK(parse_annotation_json(text) == doc);
  CHECK(text.find("\"v\": 1") != std::string::npos);
}

TEST_CASE("annotation JSON errors name the field") {
  CHECK(code_of([] { parse_annotation_json("{"); }) == ErrorCode::InvalidAnnotation);
  CHECK(code_of([] { parse_annotation_json(R"({"v":2,"initial_level":0,"transitions":[],"artifacts":[]})"); }) ==
        ErrorCode::VersionMismatch);
  try {
    parse_annotation_json(R"({"v":1,"initial_level":0,"transitions":[{"t":1,"level":7}],"artifacts":[]})");
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidAnnotation);
    CHECK(std::string(e.what()).find("transitions[0]") != std::string::npos);
  }
  CHECK(code_of([] {
          parse_annotation_json(
              R"({"v":1,"initial_level":0,"transitions":[],"artifacts":[{"t_start":1,"t_end":2,"reason":"rain"}]})");
        }) == ErrorCode::InvalidAnnotation);
}

TEST_CASE("pad_gaps fills the grid and reports device-off spans") {
  std::vector<double> times{0.0, 0.25, 0.5, 2.0, 2.25};
  std::vector<double> values{1.0, 1.0, 1.0, 2.5, 2.5};
  const auto padded = pad_gaps(times, values, 4.0);
  REQUIRE(padded.series.size() == 10);
  CHECK(padded.series.values[3] == doctest::Approx(1.25));
  CHECK(padded.series.values[8] == 2.5);
  REQUIRE(padded.gaps.size() == 1);
  CHECK(padded.gaps[0].reason == ArtifactReason::DeviceOff);
  CHECK(padded.gaps[0].t_start == doctest::Approx(0.75));
  CHECK(padded.gaps[0].t_end == doctest::Approx(2.0));

  // A two-sample hole is within tolerance: filled but not flagged.
  const auto small = pad_gaps({0.0, 0.75}, {0.0, 3.0}, 4.0);
  CHECK(small.series.values == std::vector<double>{0.0, 1.0, 2.0, 3.0});
  CHECK(small.gaps.empty());
}

TEST_CASE("number formatting is shortest round-trip") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 12345.678, -0.0}) CHECK(parse_double(format_double(v)) == v);
  CHECK_FALSE(parse_double("1.0abc"));
  CHECK_FALSE(parse_double("inf"));
}
