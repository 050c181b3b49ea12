#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ran/error.hpp"
#include "ran/tensor.hpp"

namespace ran {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. First and second moment buffers are kept per
// parameter tensor, in parameter order. step() consumes the accumulated
// gradients and zeroes them afterwards; calling it when some parameter never
// received a gradient is treated as a caller bug.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamConfig config = {})
      : params_(std::move(params)), config_(config) {
    if (params_.empty()) throw ArgumentError("Adam needs at least one parameter");
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!params_[i].requires_grad()) {
        throw UseError("Adam parameters must require gradients");
      }
      m_[i].assign(static_cast<std::size_t>(params_[i].size()), T(0));
      v_[i].assign(static_cast<std::size_t>(params_[i].size()), T(0));
    }
  }

  long long step_count() const { return t_; }
  const std::vector<Tensor<T>>& params() const { return params_; }

  void step() {
    for (const auto& p : params_) {
      if (!p.has_grad()) {
        throw UseError("Adam::step called with a parameter that has no gradient");
      }
    }
    ++t_;
    const T b1 = static_cast<T>(config_.beta1);
    const T b2 = static_cast<T>(config_.beta2);
    const T lr = static_cast<T>(config_.learning_rate);
    const T eps = static_cast<T>(config_.epsilon);
    const T bc1 = T(1) - static_cast<T>(std::pow(config_.beta1, static_cast<double>(t_)));
    const T bc2 = T(1) - static_cast<T>(std::pow(config_.beta2, static_cast<double>(t_)));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      T* w = params_[i].data();
      T* g = params_[i].grad().data();
      T* m = m_[i].data();
      T* v = v_[i].data();
      const int n = params_[i].size();
      for (int j = 0; j < n; ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        const T mhat = m[j] / bc1;
        const T vhat = v[j] / bc2;
        w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
      params_[i].zero_grad();
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::vector<Tensor<T>> params_;
  AdamConfig config_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  long long t_ = 0;
};

}  // namespace ran
