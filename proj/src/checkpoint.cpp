#include "ser/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace ser::ad {

namespace {

constexpr const char* kMagic = "ser-checkpoint";

[[noreturn]] void bad(const std::filesystem::path& path, const std::string& why) {
  throw std::runtime_error(path.string() + ": " + why);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) bad(path, "cannot open for writing");
  os << kMagic << ' ' << kCheckpointVersion << '\n' << "tensors " << tensors.size() << '\n';
  for (const auto& [name, t] : tensors) {
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) bad(path, "invalid tensor name '" + name + "'");
    os << name << ' ' << t.rank();
    for (std::size_t d : t.shape()) os << ' ' << d;
    os << '\n';
    bool first = true;
    for (double v : t.data()) {
      if (!first) os << ' ';
      os << format_double(v);
      first = false;
    }
    os << '\n';
  }
  if (!os) bad(path, "write failed");
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) bad(path, "cannot open checkpoint");
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kMagic) bad(path, "not a checkpoint file");
  if (version != kCheckpointVersion) bad(path, "unsupported checkpoint version " + std::to_string(version));
  std::string word;
  std::size_t count = 0;
  in >> word >> count;
  if (word != "tensors") bad(path, "malformed header");

  std::vector<NamedTensor> out;
  for (std::size_t k = 0; k < count; ++k) {
    std::string name;
    std::size_t rank = 0;
    if (!(in >> name >> rank)) bad(path, "truncated tensor header");
    Shape shape(rank);
    for (auto& d : shape) {
      if (!(in >> d)) bad(path, "truncated shape for '" + name + "'");
    }
    Buffer values(shape_numel(shape));
    for (double& v : values) {
      std::string tok;
      if (!(in >> tok)) bad(path, "truncated values for '" + name + "'");
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) bad(path, "bad number '" + tok + "' in '" + name + "'");
    }
    out.push_back({name, Tensor::from(std::move(shape), std::move(values))});
  }
  return out;
}

}  // namespace ser::ad
