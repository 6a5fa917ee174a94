#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ser/tensor.hpp"

namespace ser::ad {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

inline constexpr int kCheckpointVersion = 1;

/// Text checkpoint: a versioned header, then per tensor a line
/// `name rank d0 .. dn` followed by a line of row-major values printed with 17
/// significant digits (exact round-trip).
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace ser::ad
