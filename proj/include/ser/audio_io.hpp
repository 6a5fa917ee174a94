#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ser::audio {

inline constexpr int kDefaultSampleRate = 22050;

/// Emotion label names used by the synthetic generator, in class-index order.
inline const std::vector<std::string>& synth_label_names() {
  static const std::vector<std::string> names = {"angry", "disgust", "fear", "happy",
                                                 "neutral", "sad", "surprise"};
  return names;
}

class AudioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mono audio buffer. Amplitudes are nominally in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;
  std::string source_id;
  std::optional<std::string> label;

  /// Throws AudioError if the buffer is empty, a sample is non-finite, or the rate is not positive.
  void validate() const;
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

enum class WavFormat { pcm16, float32 };

/// Reads a RIFF/WAVE file (8/16/24/32-bit PCM or 32-bit float, mono or stereo).
/// Stereo is averaged to mono; the result is linearly resampled to `target_rate`.
AudioClip load_wav(const std::filesystem::path& path, int target_rate = kDefaultSampleRate);

void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavFormat format = WavFormat::pcm16);

/// Linear-interpolation resampler. Not band-limited.
/// Output length is round(n * to_rate / from_rate), at least 1.
std::vector<double> resample_linear(std::span<const double> samples, double from_rate,
                                    double to_rate);

/// Deterministic class-dependent test signal: three partials of a class-specific
/// fundamental, amplitude-modulated at a class-specific rate, over a class-specific
/// noise floor. Requires class_index in [0, 6] and duration_s > 0.
AudioClip synth_clip(int class_index, std::uint64_t seed, double duration_s = 1.0,
                     int sample_rate = kDefaultSampleRate);

struct ManifestEntry {
  std::filesystem::path path;
  std::string label;
  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> label_set;  // sorted, defines class indices

  std::size_t class_index(const std::string& label) const;
  bool operator==(const DatasetManifest&) const = default;
};

/// Parses a `path,label` CSV. Relative paths are kept as written.
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Builds a manifest from entries, computing the sorted label set.
DatasetManifest make_manifest(std::vector<ManifestEntry> entries);

}  // namespace ser::audio
