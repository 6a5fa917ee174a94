#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ser/checkpoint.hpp"
#include "ser/ops.hpp"
#include "ser/rng.hpp"
#include "ser/tensor.hpp"

namespace ser::model {

using ad::Mode;
using ad::NamedTensor;
using ad::Tensor;

/// How the ECA gate convolution is sized.
///  table1: kernel 1 with bias (2 parameters per block).
///  eq4:    adaptive odd kernel from the channel count, no bias.
enum class EcaMode { table1, eq4 };

enum class Variant { full, no_eca, no_gfb, one_gfb, no_eca_no_gfb };

std::string to_string(EcaMode mode);
std::string to_string(Variant variant);
EcaMode parse_eca_mode(const std::string& s);
Variant parse_variant(const std::string& s);

struct PoolSpec {
  std::size_t pool = 2;
  std::size_t stride = 2;
  bool operator==(const PoolSpec&) const = default;
};

struct ModelConfig {
  std::size_t input_len = 150;
  std::vector<std::size_t> alfb_filters{256, 256, 256, 32};
  std::vector<std::size_t> alfb_kernels{5, 5, 5, 3};
  std::vector<PoolSpec> alfb_pools{{2, 2}, {2, 2}, {2, 2}, {5, 2}};
  EcaMode eca_mode = EcaMode::table1;
  std::vector<std::size_t> gfb_units{512, 512};
  std::vector<double> gfb_dropout{0.1, 0.2};
  std::size_t dense_units = 32;
  std::size_t n_classes = 7;
  Variant variant = Variant::full;
  std::uint64_t seed = 42;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Nearest odd integer to log2(C)/gamma + b/gamma; a value midway between two
/// odd numbers rounds up.
std::size_t eca_kernel_size(std::size_t channels, double gamma = 2.0, double b = 1.0);

// ---------------------------------------------------------------------------
// Layers. Each holds tensor handles; the owning Network registers them by name.

struct Conv1dLayer {
  Tensor weights;  // [kernel, in, out]
  Tensor bias;     // [out]
  Tensor forward(const Tensor& x) const { return ad::conv1d(x, weights, bias, 1, ad::Padding::same); }
};

struct DenseLayer {
  Tensor weights;  // [in, out]
  Tensor bias;     // [out]
  Tensor forward(const Tensor& x) const { return ad::add(ad::matmul(x, weights), bias); }
};

struct BatchNormLayer {
  Tensor gamma, beta, moving_mean, moving_var;
  Tensor forward(const Tensor& x, Mode mode) {
    return ad::batchnorm(x, gamma, beta, moving_mean, moving_var, mode);
  }
};

/// Efficient channel attention: a 1-D convolution across the channel axis of the
/// time-averaged input, squashed by a sigmoid, rescales every channel.
struct EcaBlock {
  Tensor weights;  // [k, 1, 1]
  Tensor bias;     // [1] or undefined

  /// Per-channel gate in (0, 1): [batch, time, C] -> [batch, C].
  Tensor attention(const Tensor& x) const;
  Tensor forward(const Tensor& x) const;
};

/// Squeeze-and-excitation gate sigmoid(W2 relu(W1 z)) with z the channel means.
struct SeBlock {
  Tensor w1;  // [C, C/r]
  Tensor w2;  // [C/r, C]

  static SeBlock create(std::size_t channels, std::size_t reduction, Rng& rng);
  Tensor attention(const Tensor& x) const;
  Tensor forward(const Tensor& x) const;
};

/// Per-gate LSTM weights: input (i), forget (f), candidate (c), output (o).
/// No peephole connections.
struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t units = 0;
  Tensor wxi, wxf, wxc, wxo;  // [in, u]
  Tensor whi, whf, whc, who;  // [u, u]
  Tensor bi, bf, bc, bo;      // [u]

  static LstmParams create(std::size_t input_dim, std::size_t units, Rng& rng);
  std::vector<std::pair<std::string, Tensor*>> named();
  /// Whole-sequence recurrence through the fused op: [batch, time, in] -> [batch, time, u].
  Tensor run(const Tensor& x, bool reverse) const;
};

/// One LSTM step from primitive ops. Returns (h_t, c_t).
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x_t, const Tensor& h_prev, const Tensor& c_prev,
                                    const LstmParams& params);

/// Forward and time-reversed passes concatenated per step: [batch, time, 2u].
Tensor bilstm(const Tensor& x, const LstmParams& forward, const LstmParams& backward);

struct AlfbBlock {
  Conv1dLayer conv;
  bool use_eca = true;
  EcaBlock eca;
  BatchNormLayer bn;
  PoolSpec pool;
  Tensor forward(const Tensor& x, Mode mode);
};

struct GfbBlock {
  LstmParams fw, bw;
  BatchNormLayer bn;
  double dropout = 0.0;
  Tensor forward(const Tensor& x, Mode mode, Rng& rng);
};

struct BlockCount {
  std::string block;
  std::size_t count = 0;
};

struct ParameterCounts {
  std::vector<BlockCount> blocks;
  std::size_t total = 0;
  std::size_t of(const std::string& block) const;
};

/// Dual-channel network: ALFB stack (local) and GFB stack (global) over the
/// same input, concatenated into a dense head. forward() returns logits.
class Network {
 public:
  explicit Network(const ModelConfig& config);
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  /// x: [batch, input_len] -> logits [batch, n_classes].
  Tensor forward(const Tensor& x, Mode mode, Rng& dropout_rng);
  /// Softmax probabilities in infer mode without recording a graph.
  Tensor predict_proba(const Tensor& x);

  const ModelConfig& config() const { return config_; }
  bool has_eca() const;
  std::size_t active_gfbs() const;

  std::vector<Tensor> trainable_parameters() const;
  std::vector<NamedTensor> named_parameters() const;
  /// Everything a checkpoint needs: parameters, moving statistics, input scaling.
  std::vector<NamedTensor> state() const;
  /// Copies values from `tensors`; every expected name must be present with the same shape.
  void load_state(const std::vector<NamedTensor>& tensors);

  /// Counts trainable weights and both batch-norm moving statistics per block.
  ParameterCounts count_parameters() const;

  /// Sequence length entering each ALFB and after the last one.
  std::vector<std::size_t> local_time_chain() const;
  std::size_t concat_width() const;

  void set_input_normalization(const std::vector<double>& mean, const std::vector<double>& stddev);

  std::vector<AlfbBlock>& alfbs() { return alfbs_; }
  std::vector<GfbBlock>& gfbs() { return gfbs_; }

 private:
  struct Entry {
    std::string name;
    std::string block;
    Tensor tensor;
    bool trainable;
    bool counted;
  };

  void add(const std::string& name, Tensor& t, bool trainable = true, bool counted = true);

  ModelConfig config_;
  std::vector<AlfbBlock> alfbs_;
  std::vector<GfbBlock> gfbs_;
  DenseLayer dense_;
  BatchNormLayer dense_bn_;
  DenseLayer output_;
  Tensor input_mean_, input_std_;
  std::vector<Entry> entries_;
};

Network build_model(const ModelConfig& config);
Network build_ablation(ModelConfig config, Variant variant);

}  // namespace ser::model
