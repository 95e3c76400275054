#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "hydra/decompose.hpp"
#include "hydra/features.hpp"
#include "hydra/signal.hpp"

namespace hydra::preview {

enum class Method { Cda, Dda };
enum class Channel { Raw, Filtered, Tonic, Phasic, Driver };

std::string_view to_string(Method m);
std::string_view to_string(Channel c);
Method method_from_string(std::string_view text);    // throws InvalidArgument
Channel channel_from_string(std::string_view text);  // throws InvalidArgument

// Every channel of one decomposition on the recording's sample grid, for
// plotting. For DDA, phasic is the driver convolved back with the kernel.
struct DecompositionPreview {
  std::string session;
  Method method{Method::Cda};
  decompose::BatemanParams params;
  double start_time{0.0};
  double rate{4.0};
  std::vector<double> filtered;  // preprocessed input of the decomposition
  std::vector<double> tonic;
  std::vector<double> phasic;
  std::vector<double> driver;
  std::vector<decompose::SCREvent> events;
  double noise_sigma{0.0};
  bool tonic_fallback{false};
};

// Preprocesses (artifact spans included) and decomposes the recording,
// optimizing taus first when the config asks for it.
DecompositionPreview decompose_recording(const SessionRecording& recording, Method method,
                                         const features::FeatureConfig& config);

std::string preview_json(const DecompositionPreview& p);
DecompositionPreview parse_preview_json(std::string_view text);  // throws InvalidArgument

// Cache key for a decomposition: method plus a hash of everything the
// result depends on besides the raw samples.
std::string cache_key(Method method, const features::FeatureConfig& config,
                      const std::vector<ArtifactSpan>& artifacts);

// Samples of a channel inside [from, to), keeping every `decimate`-th sample
// counted from the start of the recording, so coarse and fine views agree
// wherever they share a timestamp.
struct ChannelSlice {
  double t0{0.0};    // time of the first returned sample
  double step{0.0};  // seconds between returned samples
  std::size_t first_index{0};
  std::vector<double> values;
};

ChannelSlice select(double start_time, double rate, const std::vector<double>& values, double from, double to,
                    std::size_t decimate);

}  // namespace hydra::preview
