#pragma once

#include <cstdint>
#include <vector>

#include "stgnn/diff/tensor.hpp"

namespace stgnn::diff {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Decoupled: lr * weight_decay * theta is subtracted alongside the Adam step.
  double weight_decay = 0.0;
};

template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamConfig config);

  // Parameters without a grad buffer are skipped for this step.
  void step();
  void zero_grad();

  std::int64_t steps_taken() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> first_moment_;
  std::vector<std::vector<T>> second_moment_;
  AdamConfig config_;
  std::int64_t step_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace stgnn::diff
