#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "ser/audio_io.hpp"
#include "ser/rng.hpp"

namespace ser::augment {

struct AugmentationPlan {
  double noise_rate = 0.015;
  double pitch_steps = 0.7;   // semitones
  double stretch_rate = 0.8;  // < 1 lengthens
  std::uint64_t rng_seed = 42;

  void validate() const;
};

/// Suffixes of the six clips emitted per input, in emission order.
inline constexpr std::array<std::string_view, 6> kVariantSuffixes = {
    "_orig", "_noise", "_pitch", "_stretch", "_noisepitch", "_pitchstretch"};

/// x + a * g with a = rate * max|x| * U(0,1) drawn once and g per-sample N(0,1).
audio::AudioClip add_noise(const audio::AudioClip& clip, double rate, Rng& rng);

/// Waveform-similarity overlap-add: output duration ~ input duration / rate,
/// pitch preserved. Throws if the clip is shorter than one analysis frame.
audio::AudioClip time_stretch(const audio::AudioClip& clip, double rate);

/// Shifts pitch by `steps` semitones at constant duration: stretch by
/// 2^(steps/12), then linearly resample back to the original length.
audio::AudioClip pitch_shift(const audio::AudioClip& clip, double steps);

inline constexpr std::size_t kStretchFrame = 1024;
inline constexpr std::size_t kStretchHop = 256;

/// Emits, per input clip: original, +noise, pitch-shifted, time-stretched,
/// noise on pitch-shifted, pitch shift on time-stretched. Per-clip randomness is
/// seeded from (plan.rng_seed, source_id), so the result is independent of order.
std::vector<audio::AudioClip> expand_clip(const audio::AudioClip& clip, const AugmentationPlan& plan);
std::vector<audio::AudioClip> expand_dataset(const std::vector<audio::AudioClip>& clips,
                                             const AugmentationPlan& plan);

}  // namespace ser::augment
