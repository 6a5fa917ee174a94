#include "ser/augment.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ser::augment {

namespace {

std::vector<double> stretch_window() {
  std::vector<double> w(kStretchFrame);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double s = std::sin(std::numbers::pi * (static_cast<double>(i) + 0.5) / kStretchFrame);
    w[i] = s * s;
  }
  return w;
}

audio::AudioClip with_samples(const audio::AudioClip& parent, std::vector<double> samples) {
  audio::AudioClip out;
  out.samples = std::move(samples);
  out.sample_rate = parent.sample_rate;
  out.source_id = parent.source_id;
  out.label = parent.label;
  return out;
}

}  // namespace

void AugmentationPlan::validate() const {
  if (!(noise_rate >= 0.0)) throw std::invalid_argument("augmentation: noise_rate must be >= 0");
  if (!(stretch_rate > 0.0)) throw std::invalid_argument("augmentation: stretch_rate must be > 0");
  if (!std::isfinite(pitch_steps)) throw std::invalid_argument("augmentation: pitch_steps must be finite");
}

audio::AudioClip add_noise(const audio::AudioClip& clip, double rate, Rng& rng) {
  if (!(rate >= 0.0)) throw std::invalid_argument("add_noise: rate must be >= 0");
  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double amp = rate * peak * unit(rng);
  auto out = with_samples(clip, clip.samples);
  if (amp == 0.0) return out;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double& s : out.samples) s += amp * gauss(rng);
  return out;
}

audio::AudioClip time_stretch(const audio::AudioClip& clip, double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw std::invalid_argument("time_stretch: rate must be > 0");
  const auto& x = clip.samples;
  const auto n = static_cast<long>(x.size());
  if (x.size() < kStretchFrame) {
    throw std::invalid_argument("time_stretch: clip '" + clip.source_id + "' has " +
                                std::to_string(x.size()) + " samples, fewer than one analysis frame (" +
                                std::to_string(kStretchFrame) + ")");
  }
  static const std::vector<double> window = stretch_window();
  constexpr long kFrame = kStretchFrame;
  constexpr long kHop = kStretchHop;
  constexpr long kTolerance = kHop / 2;
  constexpr long kMatch = kFrame / 2;

  const auto sample = [&](long i) { return (i >= 0 && i < n) ? x[static_cast<std::size_t>(i)] : 0.0; };
  const auto target = std::max<long>(1, std::lround(static_cast<double>(n) / rate));

  std::vector<double> acc(static_cast<std::size_t>(target + kFrame), 0.0);
  std::vector<double> norm(acc.size(), 0.0);
  long prev = 0;
  for (long k = 0; k * kHop < target; ++k) {
    const long nominal = std::lround(static_cast<double>(k * kHop) * rate);
    long pos = 0;
    if (k > 0) {
      // Pick the analysis offset near `nominal` whose content best continues the
      // previously copied frame (normalised cross-correlation).
      const long natural = prev + kHop;
      const long lo = std::max<long>(0, nominal - kTolerance);
      const long hi = std::min<long>(n - 1, nominal + kTolerance);
      pos = std::clamp<long>(nominal, lo, hi);
      if (lo <= hi) {
        double energy = 0.0;
        for (long i = 0; i < kMatch; ++i) energy += sample(lo + i) * sample(lo + i);
        double best = 0.0;
        bool have_best = false;
        for (long c = lo; c <= hi; ++c) {
          if (c > lo) {
            const double out_v = sample(c - 1);
            const double in_v = sample(c + kMatch - 1);
            energy = std::max(0.0, energy - out_v * out_v + in_v * in_v);
          }
          double dot = 0.0;
          for (long i = 0; i < kMatch; ++i) dot += sample(c + i) * sample(natural + i);
          const double score = dot / std::sqrt(energy + 1e-12);
          const double margin = 1e-12 * std::max(1.0, std::abs(best));
          if (!have_best || score > best + margin ||
              (std::abs(score - best) <= margin && std::abs(c - nominal) < std::abs(pos - nominal))) {
            have_best = true;
            best = score;
            pos = c;
          }
        }
      }
    }
    const long out_start = k * kHop;
    for (long i = 0; i < kFrame; ++i) {
      const double w = window[static_cast<std::size_t>(i)];
      acc[static_cast<std::size_t>(out_start + i)] += w * sample(pos + i);
      norm[static_cast<std::size_t>(out_start + i)] += w;
    }
    prev = pos;
  }

  std::vector<double> out(static_cast<std::size_t>(target));
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = norm[j] > 1e-8 ? acc[j] / norm[j] : 0.0;
  return with_samples(clip, std::move(out));
}

audio::AudioClip pitch_shift(const audio::AudioClip& clip, double steps) {
  if (!std::isfinite(steps)) throw std::invalid_argument("pitch_shift: steps must be finite");
  const double ratio = std::pow(2.0, steps / 12.0);
  // Lengthen by `ratio` at constant pitch, then play back `ratio` times faster.
  const auto stretched = time_stretch(clip, 1.0 / ratio);
  auto resampled = audio::resample_linear(stretched.samples, clip.sample_rate * ratio,
                                          static_cast<double>(clip.sample_rate));
  resampled.resize(clip.samples.size(), 0.0);
  return with_samples(clip, std::move(resampled));
}

std::vector<audio::AudioClip> expand_clip(const audio::AudioClip& clip, const AugmentationPlan& plan) {
  plan.validate();
  Rng rng(derive_seed(plan.rng_seed, fnv1a(clip.source_id)));
  std::vector<audio::AudioClip> out;
  out.reserve(kVariantSuffixes.size());
  out.push_back(clip);
  out.push_back(add_noise(clip, plan.noise_rate, rng));
  out.push_back(pitch_shift(clip, plan.pitch_steps));
  out.push_back(time_stretch(clip, plan.stretch_rate));
  out.push_back(add_noise(out[2], plan.noise_rate, rng));
  out.push_back(pitch_shift(out[3], plan.pitch_steps));
  for (std::size_t i = 1; i < out.size(); ++i) {
    out[i].source_id = clip.source_id + std::string(kVariantSuffixes[i]);
  }
  return out;
}

std::vector<audio::AudioClip> expand_dataset(const std::vector<audio::AudioClip>& clips,
                                             const AugmentationPlan& plan) {
  if (clips.empty()) throw std::invalid_argument("expand_dataset: no input clips");
  std::vector<audio::AudioClip> out;
  out.reserve(clips.size() * kVariantSuffixes.size());
  for (const auto& clip : clips) {
    auto expanded = expand_clip(clip, plan);
    std::move(expanded.begin(), expanded.end(), std::back_inserter(out));
  }
  return out;
}

}  // namespace ser::augment
