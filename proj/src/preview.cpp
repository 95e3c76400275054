#include "hydra/preview.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "hydra/config_json.hpp"
#include "hydra/numeric_text.hpp"
#include "hydra/preprocess.hpp"

namespace hydra::preview {

using nlohmann::json;

std::string_view to_string(Method m) { return m == Method::Cda ? "cda" : "dda"; }

std::string_view to_string(Channel c) {
  switch (c) {
    case Channel::Raw: return "raw";
    case Channel::Filtered: return "filtered";
    case Channel::Tonic: return "tonic";
    case Channel::Phasic: return "phasic";
    case Channel::Driver: return "driver";
  }
  return "raw";
}

Method method_from_string(std::string_view text) {
  if (text == "cda") return Method::Cda;
  if (text == "dda") return Method::Dda;
  throw Error(ErrorCode::InvalidArgument, "method must be cda or dda, got '" + std::string(text) + "'");
}

Channel channel_from_string(std::string_view text) {
  for (auto c : {Channel::Raw, Channel::Filtered, Channel::Tonic, Channel::Phasic, Channel::Driver})
    if (text == to_string(c)) return c;
  throw Error(ErrorCode::InvalidArgument,
              "channel must be raw, filtered, tonic, phasic or driver, got '" + std::string(text) + "'");
}

DecompositionPreview decompose_recording(const SessionRecording& rec, Method method,
                                         const features::FeatureConfig& config) {
  DecompositionPreview out;
  out.session = rec.id;
  out.method = method;
  const auto pre = preprocess::preprocess_pipeline(rec, config.preprocess);
  auto taus = config.taus;
  if (config.optimize_taus) taus = decompose::optimize_tau(pre, taus, config.decompose).params;
  out.params = taus;
  out.start_time = pre.start_time;
  out.rate = pre.rate;
  out.filtered = pre.values;
  if (method == Method::Cda) {
    auto d = decompose::cda(pre, taus, config.decompose);
    out.tonic = std::move(d.tonic.values);
    out.phasic = std::move(d.phasic.values);
    out.driver = std::move(d.phasic_driver.values);
    out.events = std::move(d.scrs);
    out.noise_sigma = d.noise_sigma;
    out.tonic_fallback = d.tonic_fallback;
  } else {
    auto d = decompose::dda(pre, taus, config.decompose);
    const auto kernel = decompose::bateman_kernel(taus, pre.rate);
    out.tonic = std::move(d.tonic.values);
    out.phasic = decompose::convolve(d.driver.values, kernel.taps);
    out.driver = std::move(d.driver.values);
    out.events = std::move(d.impulses);
    out.noise_sigma = d.noise_sigma;
    out.tonic_fallback = d.tonic_fallback;
  }
  return out;
}

std::string preview_json(const DecompositionPreview& p) {
  json events = json::array();
  for (const auto& e : p.events)
    events.push_back({{"onset", e.onset}, {"peak_time", e.peak_time}, {"amplitude", e.amplitude}, {"area", e.area}});
  json j{{"session", p.session},
         {"method", to_string(p.method)},
         {"tau", p.params},
         {"start_time", p.start_time},
         {"rate", p.rate},
         {"channels", {{"filtered", p.filtered}, {"tonic", p.tonic}, {"phasic", p.phasic}, {"driver", p.driver}}},
         {"events", std::move(events)},
         {"noise_sigma", p.noise_sigma},
         {"tonic_fallback", p.tonic_fallback}};
  return j.dump();
}

DecompositionPreview parse_preview_json(std::string_view text) {
  try {
    const auto j = json::parse(text);
    DecompositionPreview p;
    p.session = j.at("session").get<std::string>();
    p.method = method_from_string(j.at("method").get<std::string>());
    p.params = j.at("tau").get<decompose::BatemanParams>();
    p.start_time = j.at("start_time").get<double>();
    p.rate = j.at("rate").get<double>();
    const auto& ch = j.at("channels");
    p.filtered = ch.at("filtered").get<std::vector<double>>();
    p.tonic = ch.at("tonic").get<std::vector<double>>();
    p.phasic = ch.at("phasic").get<std::vector<double>>();
    p.driver = ch.at("driver").get<std::vector<double>>();
    for (const auto& e : j.at("events"))
      p.events.push_back({e.at("onset").get<double>(), e.at("peak_time").get<double>(),
                          e.at("amplitude").get<double>(), e.at("area").get<double>()});
    p.noise_sigma = j.at("noise_sigma").get<double>();
    p.tonic_fallback = j.at("tonic_fallback").get<bool>();
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("decomposition preview: ") + e.what());
  }
}

std::string cache_key(Method method, const features::FeatureConfig& config,
                      const std::vector<ArtifactSpan>& artifacts) {
  json spans = json::array();
  for (const auto& a : artifacts) spans.push_back({a.t_start, a.t_end, to_string(a.reason)});
  const json key{{"features", config}, {"artifacts", std::move(spans)}};
  return std::string(to_string(method)) + "_" + fnv1a64_hex(key.dump());
}

ChannelSlice select(double start_time, double rate, const std::vector<double>& values, double from, double to,
                    std::size_t decimate) {
  if (decimate == 0) throw Error(ErrorCode::InvalidArgument, "decimate must be >= 1");
  if (!(from <= to)) throw Error(ErrorCode::InvalidArgument, "from must not exceed to");
  ChannelSlice out;
  out.step = static_cast<double>(decimate) / rate;
  const double n = static_cast<double>(values.size());
  // first index with time >= from, first index with time >= to
  const double lo_f = std::clamp(std::ceil((from - start_time) * rate - 1e-7), 0.0, n);
  const double hi_f = std::clamp(std::ceil((to - start_time) * rate - 1e-7), 0.0, n);
  std::size_t lo = static_cast<std::size_t>(lo_f);
  const auto hi = static_cast<std::size_t>(hi_f);
  if (lo % decimate) lo += decimate - lo % decimate;
  out.first_index = lo;
  out.t0 = start_time + static_cast<double>(lo) / rate;
  for (std::size_t i = lo; i < hi; i += decimate) out.values.push_back(values[i]);
  return out;
}

}  // namespace hydra::preview
