#pragma once

#include <cstddef>
#include <vector>

#include "ser/tensor.hpp"

namespace ser::ad {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

/// Adam with bias correction:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options = {});

  void step();
  void zero_grad();

  std::size_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t step_ = 0;
};

}  // namespace ser::ad
