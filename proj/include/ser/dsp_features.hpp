#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ser/audio_io.hpp"

namespace ser::dsp {

inline constexpr std::size_t kFeatureWidth = 150;

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  std::vector<double> column_means() const;
};

/// Framing parameters. The Hamming window is built on construction.
class FrameSpec {
 public:
  FrameSpec(std::size_t frame_length = 2048, std::size_t hop_length = 512);

  std::size_t frame_length() const { return frame_length_; }
  std::size_t hop_length() const { return hop_length_; }
  const std::vector<double>& window() const { return window_; }

 private:
  std::size_t frame_length_;
  std::size_t hop_length_;
  std::vector<double> window_;
};

std::vector<double> hamming_window(std::size_t n);

/// Splits the clip into ceil(len/hop) frames starting at multiples of hop; the
/// tail is zero-padded. With `apply_window` each frame is multiplied by the
/// Hamming window.
std::vector<std::vector<double>> frame_signal(const audio::AudioClip& clip, const FrameSpec& spec,
                                              bool apply_window = true);

/// |DFT|^2 for bins 0..K/2 via iterative radix-2 FFT. K must be a power of two.
std::vector<double> dft_power(std::span<const double> frame);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t n_bins = 0;  // K/2 + 1
  double f_min = 0.0;
  double f_max = 0.0;
  std::vector<std::size_t> break_bins;  // n_mels + 2
  Matrix weights;                       // n_mels x n_bins

  /// Mel energies for one power spectrum.
  std::vector<double> apply(std::span<const double> power) const;
};

MelFilterbank build_mel_filterbank(std::size_t n_mels, std::size_t fft_size, int sample_rate,
                                   double f_min, double f_max);

/// Per-frame mel energies before compression.
Matrix mel_energies(const audio::AudioClip& clip, const FrameSpec& spec, const MelFilterbank& bank);

/// log(1 + mel energies), frames x n_mels.
Matrix mel_spectrogram(const audio::AudioClip& clip, const FrameSpec& spec,
                       const MelFilterbank& bank);

inline constexpr double kMfccLogEpsilon = 1e-10;

/// Orthonormal DCT-II and its inverse.
std::vector<double> dct2_orthonormal(std::span<const double> x);
std::vector<double> idct2_orthonormal(std::span<const double> coeffs);

/// Frames x n_mfcc: DCT-II of log(eps + mel energies), first n_mfcc coefficients.
Matrix mfcc(const audio::AudioClip& clip, const FrameSpec& spec, const MelFilterbank& bank,
            std::size_t n_mfcc);

/// Fraction of adjacent sample pairs whose product is negative.
double zero_crossing_rate(std::span<const double> frame);
double root_mean_square(std::span<const double> frame);

std::vector<double> zcr(const audio::AudioClip& clip, const FrameSpec& spec);
std::vector<double> rms(const audio::AudioClip& clip, const FrameSpec& spec);

struct ExtractionSettings {
  int sample_rate = audio::kDefaultSampleRate;
  std::size_t frame_length = 2048;
  std::size_t hop_length = 512;
  std::size_t n_mels = 128;
  std::size_t n_mfcc = 20;
  double f_min = 0.0;
  double f_max = 0.0;  // <= 0 means Nyquist

  std::size_t width() const { return n_mfcc + n_mels + 2; }
};

struct FeatureVector {
  std::vector<double> values;
  std::size_t label_index = 0;
};

/// Reusable extractor: the filterbank and window are built once and shared read-only.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const ExtractionSettings& settings = {});

  /// Frame means laid out as [MFCC | log-mel | ZCR | RMS].
  std::vector<double> extract(const audio::AudioClip& clip) const;

  const ExtractionSettings& settings() const { return settings_; }
  const FrameSpec& frame_spec() const { return frames_; }
  const MelFilterbank& filterbank() const { return bank_; }

 private:
  ExtractionSettings settings_;
  FrameSpec frames_;
  MelFilterbank bank_;
  std::vector<double> dct_basis_;  // n_mfcc x n_mels, orthonormal DCT-II rows
};

FeatureVector extract_feature_vector(const audio::AudioClip& clip,
                                     const ExtractionSettings& settings = {},
                                     std::size_t label_index = 0);

}  // namespace ser::dsp
