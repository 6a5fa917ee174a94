#pragma once

#include <cstddef>
#include <vector>

#include "ser/rng.hpp"
#include "ser/tensor.hpp"

namespace ser::ad {

enum class Mode { train, infer };
enum class Padding { same, valid };

// Elementwise arithmetic with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// [m, k] x [k, n] -> [m, n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor reshape(const Tensor& a, Shape shape);
/// 2-D transpose.
Tensor transpose(const Tensor& a);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
/// Reverses the order of entries along `axis`.
Tensor flip(const Tensor& a, std::size_t axis);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& a, std::size_t axis);

// Sequence ops take [batch, time, channels]; a rank-2 [time, channels] input is
// treated as a batch of one and the result keeps rank 2.

/// Cross-correlation with weights [kernel, in_ch, out_ch] and optional bias
/// [out_ch]. `same` padding gives ceil(time/stride) steps, extra pad on the right.
Tensor conv1d(const Tensor& x, const Tensor& weights, const Tensor& bias, std::size_t stride = 1,
              Padding padding = Padding::same);

/// Max pooling with `same` padding: ceil(time/stride) steps; padding never wins
/// and ties go to the lowest index.
Tensor maxpool1d(const Tensor& x, std::size_t pool, std::size_t stride);

/// Channel means over time: [batch, time, ch] -> [batch, ch].
Tensor global_avg_pool1d(const Tensor& x);

inline constexpr double kBatchNormMomentum = 0.99;
inline constexpr double kBatchNormEpsilon = 1e-3;

/// Normalises over every axis but the last. Train mode uses batch statistics
/// and updates the moving statistics in place; infer mode uses the moving ones.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& moving_mean,
                 Tensor& moving_var, Mode mode, double momentum = kBatchNormMomentum,
                 double eps = kBatchNormEpsilon);

/// Inverted dropout. Identity in infer mode or at rate 0.
Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng);

/// Mean over the batch of -sum_c y_c log(max(p_c, 1e-12)). Rows of `probs` must
/// sum to 1 within 1e-6 and rows of `one_hot` must be one-hot.
Tensor cross_entropy(const Tensor& probs, const Tensor& one_hot);

/// Same loss computed from logits through log-sum-exp; gradient (softmax - y) / batch.
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& one_hot);

Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t n_classes);

/// Unidirectional LSTM over [batch, time, in] returning every hidden state
/// [batch, time, units]. Gate columns of `wx` [in, 4u], `wh` [u, 4u] and `b` [4u]
/// are ordered input, forget, candidate, output. With `reverse` the sequence is
/// consumed from the last step, and output row t holds the state after seeing
/// steps t..T-1.
Tensor lstm(const Tensor& x, const Tensor& wx, const Tensor& wh, const Tensor& b, bool reverse = false);

}  // namespace ser::ad
