#include "ser/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "ser/rng.hpp"

namespace ser::audio {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& cause) {
  throw AudioError(path.string() + ": " + cause);
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

double decode_sample(const unsigned char* p, std::uint16_t format, std::uint16_t bits) {
  if (format == kFormatFloat) {
    float f;
    std::uint32_t raw = read_u32(p);
    std::memcpy(&f, &raw, sizeof f);
    return static_cast<double>(f);
  }
  switch (bits) {
    case 8:
      return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16:
      return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
    case 24: {
      std::int32_t v = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    case 32:
      return static_cast<std::int32_t>(read_u32(p)) / 2147483648.0;
    default:
      return 0.0;
  }
}

std::string trim_cr(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
  return s;
}

}  // namespace

void AudioClip::validate() const {
  if (samples.empty()) throw AudioError("clip '" + source_id + "' has no samples");
  if (sample_rate <= 0) throw AudioError("clip '" + source_id + "' has non-positive sample rate");
  for (double s : samples) {
    if (!std::isfinite(s)) throw AudioError("clip '" + source_id + "' has a non-finite sample");
  }
}

std::vector<double> resample_linear(std::span<const double> samples, double from_rate,
                                    double to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw AudioError("resample: rates must be positive");
  const std::size_t n = samples.size();
  if (n == 0) return {};
  if (from_rate == to_rate) return {samples.begin(), samples.end()};
  const auto out_len = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * to_rate / from_rate)));
  const double step = from_rate / to_rate;
  std::vector<double> out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) * step;
    const auto i0 = std::min(static_cast<std::size_t>(pos), n - 1);
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    const double frac = std::clamp(pos - static_cast<double>(i0), 0.0, 1.0);
    out[i] = samples[i0] * (1.0 - frac) + samples[i1] * frac;
  }
  return out;
}

AudioClip load_wav(const std::filesystem::path& path, int target_rate) {
  if (target_rate <= 0) fail(path, "target sample rate must be positive");
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open file");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* buf = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  if (size < 12 || std::memcmp(buf, "RIFF", 4) != 0 || std::memcmp(buf + 8, "WAVE", 4) != 0) {
    fail(path, "not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const unsigned char* chunk = buf + pos;
    const std::uint32_t chunk_size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = size - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_size < 16 || avail < 16) fail(path, "truncated fmt chunk");
      format = read_u16(buf + body);
      channels = read_u16(buf + body + 2);
      rate = read_u32(buf + body + 4);
      bits = read_u16(buf + body + 14);
      if (format == kFormatExtensible) {
        if (chunk_size < 26 || avail < 26) fail(path, "truncated extensible fmt chunk");
        format = read_u16(buf + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = buf + body;
      data_size = std::min<std::size_t>(chunk_size, avail);
    }
    pos = body + chunk_size + (chunk_size & 1U);
  }

  if (!have_fmt) fail(path, "missing fmt chunk");
  if (format != kFormatPcm && format != kFormatFloat) {
    fail(path, "unsupported compression (format tag " + std::to_string(format) + ")");
  }
  if (format == kFormatFloat && bits != 32) fail(path, "unsupported float width " + std::to_string(bits));
  if (format == kFormatPcm && bits != 8 && bits != 16 && bits != 24 && bits != 32) {
    fail(path, "unsupported PCM width " + std::to_string(bits));
  }
  if (channels != 1 && channels != 2) {
    fail(path, "unsupported channel count " + std::to_string(channels));
  }
  if (rate == 0) fail(path, "zero sample rate");
  if (data == nullptr) fail(path, "missing data chunk");

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = data_size / frame_bytes;
  if (frames == 0) fail(path, "zero-length data chunk");

  std::vector<double> mono(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      acc += decode_sample(data + f * frame_bytes + c * bytes_per_sample, format, bits);
    }
    mono[f] = acc / channels;
  }

  AudioClip clip;
  clip.source_id = path.string();
  clip.sample_rate = target_rate;
  clip.samples = resample_linear(mono, static_cast<double>(rate), static_cast<double>(target_rate));
  for (double s : clip.samples) {
    if (!std::isfinite(s)) fail(path, "non-finite sample");
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavFormat format) {
  clip.validate();
  const std::uint16_t bits = format == WavFormat::pcm16 ? 16 : 32;
  const std::uint16_t tag = format == WavFormat::pcm16 ? kFormatPcm : kFormatFloat;
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * (bits / 8));

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, tag);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  out += "data";
  put_u32(out, data_bytes);
  for (double s : clip.samples) {
    if (format == WavFormat::pcm16) {
      const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
      put_u16(out, static_cast<std::uint16_t>(
                       static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0))));
    } else {
      const auto f = static_cast<float>(s);
      std::uint32_t raw;
      std::memcpy(&raw, &f, sizeof raw);
      put_u32(out, raw);
    }
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw AudioError(path.string() + ": cannot open for writing");
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw AudioError(path.string() + ": write failed");
}

AudioClip synth_clip(int class_index, std::uint64_t seed, double duration_s, int sample_rate) {
  if (class_index < 0 || class_index > 6) {
    throw std::invalid_argument("synth_clip: class_index must be in [0, 6]");
  }
  if (!(duration_s > 0.0)) throw std::invalid_argument("synth_clip: duration must be positive");
  if (sample_rate <= 0) throw std::invalid_argument("synth_clip: sample rate must be positive");

  Rng rng(derive_seed(seed, "synth", static_cast<std::uint64_t>(class_index)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double c = class_index;
  const double f0 = (120.0 + 55.0 * c) * (1.0 + 0.06 * (unit(rng) - 0.5));
  const double am_rate = 2.0 + 1.5 * c;
  const double noise_floor = 0.004 * (1.0 + c);
  const double gain = 0.7 + 0.2 * unit(rng);
  constexpr double kPartialRatio[3] = {1.0, 2.0, 3.1};
  constexpr double kPartialAmp[3] = {0.45, 0.25, 0.15};
  double phase[3];
  for (double& p : phase) p = 2.0 * std::numbers::pi * unit(rng);
  const double am_phase = 2.0 * std::numbers::pi * unit(rng);

  const auto n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(duration_s * sample_rate)));
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.source_id = "synth_c" + std::to_string(class_index) + "_s" + std::to_string(seed);
  clip.label = synth_label_names()[static_cast<std::size_t>(class_index)];
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    double tone = 0.0;
    for (int k = 0; k < 3; ++k) {
      tone += kPartialAmp[k] * std::sin(2.0 * std::numbers::pi * kPartialRatio[k] * f0 * t + phase[k]);
    }
    const double env = 1.0 - 0.4 * (0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * am_rate * t + am_phase));
    const double v = gain * env * tone + noise_floor * gauss(rng);
    clip.samples[i] = std::clamp(v, -1.0, 1.0);
  }
  return clip;
}

std::size_t DatasetManifest::class_index(const std::string& label) const {
  auto it = std::lower_bound(label_set.begin(), label_set.end(), label);
  if (it == label_set.end() || *it != label) {
    throw std::out_of_range("label '" + label + "' is not in the manifest label set");
  }
  return static_cast<std::size_t>(it - label_set.begin());
}

DatasetManifest make_manifest(std::vector<ManifestEntry> entries) {
  DatasetManifest m;
  std::set<std::string> labels;
  for (const auto& e : entries) labels.insert(e.label);
  m.entries = std::move(entries);
  m.label_set.assign(labels.begin(), labels.end());
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw AudioError(path.string() + ": cannot open manifest");
  std::string line;
  if (!std::getline(in, line)) throw AudioError(path.string() + ": empty file");
  line = trim_cr(line);
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (line != "path,label") throw AudioError(path.string() + ": missing header 'path,label'");

  std::vector<ManifestEntry> entries;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim_cr(line);
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 == line.size()) {
      throw AudioError(path.string() + ": line " + std::to_string(line_no) +
                       ": expected 'path,label'");
    }
    entries.push_back({line.substr(0, comma), line.substr(comma + 1)});
  }
  if (entries.empty()) throw AudioError(path.string() + ": empty manifest");
  return make_manifest(std::move(entries));
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw AudioError(path.string() + ": cannot open for writing");
  os << "path,label\n";
  for (const auto& e : manifest.entries) os << e.path.generic_string() << ',' << e.label << '\n';
  if (!os) throw AudioError(path.string() + ": write failed");
}

}  // namespace ser::audio
