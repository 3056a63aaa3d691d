#include "stgnn/diff/adam.hpp"

#include <cmath>

namespace stgnn::diff {

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    first_moment_.emplace_back(p.numel(), T(0));
    second_moment_.emplace_back(p.numel(), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  ++step_;
  const double correction1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  const T lr = static_cast<T>(config_.learning_rate);
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T eps = static_cast<T>(config_.epsilon);
  const T decay = static_cast<T>(config_.learning_rate * config_.weight_decay);
  const T c1 = static_cast<T>(correction1);
  const T c2 = static_cast<T>(correction2);

  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    auto theta = p.data();
    auto grad = p.grad();
    auto& m = first_moment_[i];
    auto& v = second_moment_[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const T g = grad[j];
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      const T m_hat = m[j] / c1;
      const T v_hat = v[j] / c2;
      theta[j] -= lr * m_hat / (std::sqrt(v_hat) + eps) + decay * theta[j];
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace stgnn::diff
