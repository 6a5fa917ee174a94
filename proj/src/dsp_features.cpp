#include "ser/dsp_features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace ser::dsp {

namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_in_place(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      // Twiddles are evaluated directly rather than by recurrence to keep the
      // error at the 1e-15 level for every bin.
      const std::complex<double> w(std::cos(angle * static_cast<double>(k)),
                                   std::sin(angle * static_cast<double>(k)));
      for (std::size_t i = k; i < n; i += len) {
        const auto u = a[i];
        const auto v = a[i + half] * w;
        a[i] = u + v;
        a[i + half] = u - v;
      }
    }
  }
}

std::vector<double> frame_at(std::span<const double> x, std::size_t start, std::size_t length) {
  std::vector<double> f(length, 0.0);
  if (start < x.size()) {
    const std::size_t count = std::min(length, x.size() - start);
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(start), count, f.begin());
  }
  return f;
}

std::size_t frame_count(std::size_t len, std::size_t hop) { return (len + hop - 1) / hop; }

}  // namespace

std::vector<double> Matrix::column_means() const {
  std::vector<double> means(cols, 0.0);
  if (rows == 0) return means;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) means[c] += (*this)(r, c);
  }
  for (double& m : means) m /= static_cast<double>(rows);
  return means;
}

std::vector<double> hamming_window(std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {1.0};
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n - 1));
  }
  return w;
}

FrameSpec::FrameSpec(std::size_t frame_length, std::size_t hop_length)
    : frame_length_(frame_length), hop_length_(hop_length), window_(hamming_window(frame_length)) {
  if (frame_length_ == 0) throw std::invalid_argument("FrameSpec: frame_length must be positive");
  if (hop_length_ == 0 || hop_length_ > frame_length_) {
    throw std::invalid_argument("FrameSpec: need 0 < hop_length <= frame_length");
  }
}

std::vector<std::vector<double>> frame_signal(const audio::AudioClip& clip, const FrameSpec& spec,
                                              bool apply_window) {
  if (clip.samples.empty()) throw std::invalid_argument("frame_signal: empty clip");
  const std::size_t n = frame_count(clip.samples.size(), spec.hop_length());
  std::vector<std::vector<double>> frames;
  frames.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto f = frame_at(clip.samples, i * spec.hop_length(), spec.frame_length());
    if (apply_window) {
      for (std::size_t j = 0; j < f.size(); ++j) f[j] *= spec.window()[j];
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<double> dft_power(std::span<const double> frame) {
  const std::size_t k = frame.size();
  if (!is_power_of_two(k)) {
    throw std::invalid_argument("dft_power: frame length " + std::to_string(k) +
                                " is not a power of two");
  }
  std::vector<std::complex<double>> a(frame.begin(), frame.end());
  fft_in_place(a);
  std::vector<double> power(k / 2 + 1);
  for (std::size_t m = 0; m < power.size(); ++m) power[m] = std::norm(a[m]);
  return power;
}

double hz_to_mel(double hz) {
  if (!(hz >= 0.0)) throw std::domain_error("hz_to_mel: frequency must be non-negative");
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> MelFilterbank::apply(std::span<const double> power) const {
  std::vector<double> out(n_mels, 0.0);
  for (std::size_t i = 0; i < n_mels; ++i) {
    const std::size_t lo = break_bins[i];
    const std::size_t hi = std::min(break_bins[i + 2], n_bins - 1);
    double acc = 0.0;
    for (std::size_t b = lo; b <= hi; ++b) acc += weights(i, b) * power[b];
    out[i] = acc;
  }
  return out;
}

MelFilterbank build_mel_filterbank(std::size_t n_mels, std::size_t fft_size, int sample_rate,
                                   double f_min, double f_max) {
  if (n_mels == 0) throw std::invalid_argument("mel filterbank: n_mels must be >= 1");
  if (!is_power_of_two(fft_size)) throw std::invalid_argument("mel filterbank: fft size must be a power of two");
  if (sample_rate <= 0) throw std::invalid_argument("mel filterbank: sample rate must be positive");
  const double nyquist = sample_rate / 2.0;
  if (f_max > nyquist) throw std::invalid_argument("mel filterbank: f_max above Nyquist");
  if (!(f_min >= 0.0) || !(f_min < f_max)) {
    throw std::invalid_argument("mel filterbank: need 0 <= f_min < f_max");
  }

  MelFilterbank bank;
  bank.n_mels = n_mels;
  bank.n_bins = fft_size / 2 + 1;
  bank.f_min = f_min;
  bank.f_max = f_max;
  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  bank.break_bins.resize(n_mels + 2);
  for (std::size_t j = 0; j < n_mels + 2; ++j) {
    const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(j) / static_cast<double>(n_mels + 1);
    const double bin = mel_to_hz(mel) * static_cast<double>(fft_size) / sample_rate;
    bank.break_bins[j] = std::min(static_cast<std::size_t>(std::llround(bin)), bank.n_bins - 1);
  }

  bank.weights = Matrix(n_mels, bank.n_bins);
  for (std::size_t i = 0; i < n_mels; ++i) {
    const std::size_t left = bank.break_bins[i];
    const std::size_t center = bank.break_bins[i + 1];
    const std::size_t right = bank.break_bins[i + 2];
    for (std::size_t b = left + 1; b < center; ++b) {
      bank.weights(i, b) = static_cast<double>(b - left) / static_cast<double>(center - left);
    }
    for (std::size_t b = center + 1; b < right; ++b) {
      bank.weights(i, b) = static_cast<double>(right - b) / static_cast<double>(right - center);
    }
    bank.weights(i, center) = 1.0;
  }
  return bank;
}

Matrix mel_energies(const audio::AudioClip& clip, const FrameSpec& spec, const MelFilterbank& bank) {
  if (bank.n_bins != spec.frame_length() / 2 + 1) {
    throw std::invalid_argument("mel_energies: filterbank does not match frame length");
  }
  const auto frames = frame_signal(clip, spec, true);
  Matrix out(frames.size(), bank.n_mels);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto energies = bank.apply(dft_power(frames[t]));
    std::copy(energies.begin(), energies.end(), out.values.begin() + static_cast<std::ptrdiff_t>(t * bank.n_mels));
  }
  return out;
}

Matrix mel_spectrogram(const audio::AudioClip& clip, const FrameSpec& spec,
                       const MelFilterbank& bank) {
  Matrix m = mel_energies(clip, spec, bank);
  for (double& v : m.values) v = std::log1p(v);
  return m;
}

std::vector<double> dct2_orthonormal(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> out(n, 0.0);
  if (n == 0) return out;
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double sk = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::cos(std::numbers::pi * static_cast<double>(k) *
                             (2.0 * static_cast<double>(i) + 1.0) / (2.0 * static_cast<double>(n)));
    }
    out[k] = (k == 0 ? s0 : sk) * acc;
  }
  return out;
}

std::vector<double> idct2_orthonormal(std::span<const double> coeffs) {
  const std::size_t n = coeffs.size();
  std::vector<double> out(n, 0.0);
  if (n == 0) return out;
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double sk = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      acc += (k == 0 ? s0 : sk) * coeffs[k] *
             std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) /
                      (2.0 * static_cast<double>(n)));
    }
    out[i] = acc;
  }
  return out;
}

Matrix mfcc(const audio::AudioClip& clip, const FrameSpec& spec, const MelFilterbank& bank,
            std::size_t n_mfcc) {
  if (n_mfcc > bank.n_mels) throw std::invalid_argument("mfcc: n_mfcc exceeds n_mels");
  const Matrix energies = mel_energies(clip, spec, bank);
  Matrix out(energies.rows, n_mfcc);
  std::vector<double> logmel(bank.n_mels);
  for (std::size_t t = 0; t < energies.rows; ++t) {
    for (std::size_t m = 0; m < bank.n_mels; ++m) logmel[m] = std::log(kMfccLogEpsilon + energies(t, m));
    const auto c = dct2_orthonormal(logmel);
    for (std::size_t k = 0; k < n_mfcc; ++k) out(t, k) = c[k];
  }
  return out;
}

double zero_crossing_rate(std::span<const double> frame) {
  if (frame.size() < 2) throw std::invalid_argument("zero_crossing_rate: frame length must be >= 2");
  std::size_t crossings = 0;
  for (std::size_t i = 1; i < frame.size(); ++i) {
    if (frame[i] * frame[i - 1] < 0.0) ++crossings;
  }
  return static_cast<double>(crossings) / static_cast<double>(frame.size() - 1);
}

double root_mean_square(std::span<const double> frame) {
  if (frame.empty()) throw std::invalid_argument("root_mean_square: empty frame");
  double acc = 0.0;
  for (double v : frame) acc += v * v;
  return std::sqrt(acc / static_cast<double>(frame.size()));
}

std::vector<double> zcr(const audio::AudioClip& clip, const FrameSpec& spec) {
  std::vector<double> out;
  for (const auto& f : frame_signal(clip, spec, false)) out.push_back(zero_crossing_rate(f));
  return out;
}

std::vector<double> rms(const audio::AudioClip& clip, const FrameSpec& spec) {
  std::vector<double> out;
  for (const auto& f : frame_signal(clip, spec, false)) out.push_back(root_mean_square(f));
  return out;
}

namespace {

MelFilterbank bank_for(const ExtractionSettings& s) {
  const double f_max = s.f_max > 0.0 ? s.f_max : s.sample_rate / 2.0;
  return build_mel_filterbank(s.n_mels, s.frame_length, s.sample_rate, s.f_min, f_max);
}

}  // namespace

FeatureExtractor::FeatureExtractor(const ExtractionSettings& settings)
    : settings_(settings),
      frames_(settings.frame_length, settings.hop_length),
      bank_(bank_for(settings)) {
  if (settings_.n_mfcc > settings_.n_mels) throw std::invalid_argument("n_mfcc exceeds n_mels");
  const std::size_t n = settings_.n_mels;
  dct_basis_.resize(settings_.n_mfcc * n);
  for (std::size_t k = 0; k < settings_.n_mfcc; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      dct_basis_[k * n + i] =
          scale * std::cos(std::numbers::pi * static_cast<double>(k) *
                           (2.0 * static_cast<double>(i) + 1.0) / (2.0 * static_cast<double>(n)));
    }
  }
}

std::vector<double> FeatureExtractor::extract(const audio::AudioClip& clip) const {
  clip.validate();
  if (clip.sample_rate != settings_.sample_rate) {
    throw std::invalid_argument("extract: clip '" + clip.source_id + "' is at " +
                                std::to_string(clip.sample_rate) + " Hz, expected " +
                                std::to_string(settings_.sample_rate));
  }
  const std::size_t n_mels = settings_.n_mels;
  const std::size_t n_mfcc = settings_.n_mfcc;
  const std::size_t hop = frames_.hop_length();
  const std::size_t len = frames_.frame_length();
  const std::size_t n_frames = frame_count(clip.samples.size(), hop);

  std::vector<double> sums(settings_.width(), 0.0);
  std::vector<double> logmel(n_mels);
  std::vector<double> windowed(len);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const auto raw = frame_at(clip.samples, t * hop, len);
    for (std::size_t j = 0; j < len; ++j) windowed[j] = raw[j] * frames_.window()[j];
    const auto energies = bank_.apply(dft_power(windowed));
    for (std::size_t m = 0; m < n_mels; ++m) {
      logmel[m] = std::log(kMfccLogEpsilon + energies[m]);
      sums[n_mfcc + m] += std::log1p(energies[m]);
    }
    for (std::size_t k = 0; k < n_mfcc; ++k) {
      double c = 0.0;
      for (std::size_t m = 0; m < n_mels; ++m) c += dct_basis_[k * n_mels + m] * logmel[m];
      sums[k] += c;
    }
    sums[n_mfcc + n_mels] += zero_crossing_rate(raw);
    sums[n_mfcc + n_mels + 1] += root_mean_square(raw);
  }
  for (double& s : sums) s /= static_cast<double>(n_frames);
  return sums;
}

FeatureVector extract_feature_vector(const audio::AudioClip& clip, const ExtractionSettings& settings,
                                     std::size_t label_index) {
  return {FeatureExtractor(settings).extract(clip), label_index};
}

}  // namespace ser::dsp
