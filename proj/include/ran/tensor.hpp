#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "ran/error.hpp"

namespace ran {

template <typename T>
class Tape;

// ============================================================================
// Tensor: n-dimensional array with shared storage
// ============================================================================
//
// Copying a Tensor aliases the underlying buffer (shallow, shared_ptr), which
// is what lets backward closures hold onto the exact nodes they must update.
// Ops always allocate fresh output tensors. `requires_grad` marks a leaf the
// caller wants gradients for; `tracked` additionally covers intermediate
// results produced while recording on a tape.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : node_(std::make_shared<Node>()) {
    node_->shape = std::move(shape);
    node_->values.assign(checked_size(node_->shape), T(0));
  }

  Tensor(std::vector<int> shape, std::vector<T> values) : node_(std::make_shared<Node>()) {
    node_->shape = std::move(shape);
    if (static_cast<std::size_t>(checked_size(node_->shape)) != values.size()) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape product " +
                       std::to_string(checked_size(node_->shape)));
    }
    node_->values = std::move(values);
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    Tensor t({1}, {value});
    if (requires_grad) t.set_requires_grad(true);
    return t;
  }

  bool valid() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(node_->values.size()); }

  std::vector<T>& values() { return node_->values; }
  const std::vector<T>& values() const { return node_->values; }
  T* data() { return node_->values.data(); }
  const T* data() const { return node_->values.data(); }

  // Scalar extraction; most loss tensors go through here.
  T value() const {
    if (!valid() || size() != 1) {
      throw UseError("value() expects a scalar tensor");
    }
    return node_->values[0];
  }

  bool requires_grad() const { return node_->requires_grad; }

  // For leaves only; op outputs manage their own tracking.
  void set_requires_grad(bool requires_grad) {
    node_->requires_grad = requires_grad;
    node_->tracked = requires_grad;
  }
  bool tracked() const { return valid() && node_->tracked; }
  bool has_grad() const { return valid() && !node_->grad.empty(); }

  // Gradient buffer, allocated zero-filled on first access.
  std::vector<T>& grad() {
    if (node_->grad.empty()) {
      node_->grad.assign(node_->values.size(), T(0));
    }
    return node_->grad;
  }
  const std::vector<T>& grad() const { return node_->grad; }

  void zero_grad() {
    if (!node_->grad.empty()) {
      std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }
  }

  // Same node, not just same contents.
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  struct Node {
    std::vector<int> shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool requires_grad = false;
    bool tracked = false;
  };

  static int checked_size(const std::vector<int>& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
    long long n = 1;
    for (int d : shape) {
      if (d < 1) throw ShapeError("tensor dimensions must be positive");
      n *= d;
      if (n > (1LL << 31)) throw ShapeError("tensor too large");
    }
    return static_cast<int>(n);
  }

  void mark_tracked() { node_->tracked = true; }

  std::shared_ptr<Node> node_;

  template <typename U>
  friend class Tape;
  template <typename U, typename... Ts>
  friend Tensor<U> detail_make_output(Tape<U>* tape, std::vector<int> shape,
                                      const Ts&... inputs);
};

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// ============================================================================
// Tape: recorded backward steps
// ============================================================================
//
// Ops executed while a tape is supplied push one backward step each, in
// execution order. backward() seeds d(loss)/d(loss) = 1 and replays the steps
// in reverse, accumulating into the grad buffer of every tracked tensor.
// A tape is a single-threaded unit of work, reset per training step.
template <typename T>
class Tape {
 public:
  void record(Tensor<T> out, std::function<void()> backward_step) {
    outs_.push_back(std::move(out));
    steps_.push_back(std::move(backward_step));
  }

  std::size_t size() const { return steps_.size(); }

  void clear() {
    steps_.clear();
    outs_.clear();
  }

  // Each call contributes one full gradient into every reachable leaf, so
  // repeated calls without zeroing the leaves accumulate linearly. Output
  // grads are scratch space for the replay and reset every time.
  void backward(Tensor<T>& loss) {
    if (!loss.valid() || loss.size() != 1) {
      throw UseError("backward expects a scalar loss tensor");
    }
    for (auto& o : outs_) o.zero_grad();
    loss.grad()[0] = T(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
      (*it)();
    }
  }

 private:
  std::vector<std::function<void()>> steps_;
  std::vector<Tensor<T>> outs_;
};

// Allocates the output node of an op and decides whether the op is recorded:
// only when a tape is present and at least one input carries gradient.
template <typename T, typename... Ts>
Tensor<T> detail_make_output(Tape<T>* tape, std::vector<int> shape, const Ts&... inputs) {
  Tensor<T> out(std::move(shape));
  if (tape != nullptr && (inputs.tracked() || ...)) {
    out.mark_tracked();
  }
  return out;
}

// ============================================================================
// Ops
// ============================================================================

// Hot inner loops for the unpadded convolutions, where every window is a
// full K taps (j0 = t*stride >= 0 and j0 + K <= L by the L_out formula).
// KF > 0 bakes the kernel width into the instantiation so the tap loop
// unrolls; KF == 0 falls back to the runtime width. Accumulation order is
// identical across specializations.
template <typename T, int KF>
void detail_conv_fwd_nopad(const T* x, const T* w, const T* b, T* y, int c_in, int len,
                           int c_out, int k_dyn, int l_out, int stride) {
  const int k = KF > 0 ? KF : k_dyn;
  for (int o = 0; o < c_out; ++o) {
    T* y_o = y + o * l_out;
    for (int t = 0; t < l_out; ++t) y_o[t] = b[o];
    for (int i = 0; i < c_in; ++i) {
      const T* x_i = x + i * len;
      const T* w_oi = w + (o * c_in + i) * k;
      for (int t = 0; t < l_out; ++t) {
        const T* xt = x_i + t * stride;
        T acc = 0;
        for (int kk = 0; kk < k; ++kk) acc += w_oi[kk] * xt[kk];
        y_o[t] += acc;
      }
    }
  }
}

template <typename T, int KF>
void detail_conv_bwd_nopad(const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb, int c_in,
                           int len, int c_out, int k_dyn, int l_out, int stride) {
  const int k = KF > 0 ? KF : k_dyn;
  for (int o = 0; o < c_out; ++o) {
    const T* gy_o = gy + o * l_out;
    if (gb) {
      T acc = 0;
      for (int t = 0; t < l_out; ++t) acc += gy_o[t];
      gb[o] += acc;
    }
    for (int i = 0; i < c_in; ++i) {
      const T* x_i = x + i * len;
      const T* w_oi = w + (o * c_in + i) * k;
      T* gx_i = gx ? gx + i * len : nullptr;
      T* gw_oi = gw ? gw + (o * c_in + i) * k : nullptr;
      if (gx && gw) {
        for (int t = 0; t < l_out; ++t) {
          const T g = gy_o[t];
          T* gxt = gx_i + t * stride;
          const T* xt = x_i + t * stride;
          for (int kk = 0; kk < k; ++kk) {
            gxt[kk] += g * w_oi[kk];
            gw_oi[kk] += g * xt[kk];
          }
        }
      } else if (gx) {
        for (int t = 0; t < l_out; ++t) {
          const T g = gy_o[t];
          T* gxt = gx_i + t * stride;
          for (int kk = 0; kk < k; ++kk) gxt[kk] += g * w_oi[kk];
        }
      } else if (gw) {
        for (int t = 0; t < l_out; ++t) {
          const T g = gy_o[t];
          const T* xt = x_i + t * stride;
          for (int kk = 0; kk < k; ++kk) gw_oi[kk] += g * xt[kk];
        }
      }
    }
  }
}

// Same pair for the transposed convolution: forward scatters, backward
// gathers. Full taps hold for padding == 0 since j0 + K <= (L-1)*stride + K
// == L_out.
template <typename T, int KF>
void detail_tconv_fwd_nopad(const T* x, const T* w, const T* b, T* y, int c_in, int len,
                            int c_out, int k_dyn, int l_out, int stride) {
  const int k = KF > 0 ? KF : k_dyn;
  for (int c = 0; c < c_out; ++c) {
    T* y_c = y + c * l_out;
    for (int j = 0; j < l_out; ++j) y_c[j] = b[c];
  }
  for (int i = 0; i < c_in; ++i) {
    const T* x_i = x + i * len;
    for (int c = 0; c < c_out; ++c) {
      const T* w_ic = w + (i * c_out + c) * k;
      T* y_c = y + c * l_out;
      for (int t = 0; t < len; ++t) {
        const T v = x_i[t];
        T* yt = y_c + t * stride;
        for (int kk = 0; kk < k; ++kk) yt[kk] += v * w_ic[kk];
      }
    }
  }
}

template <typename T, int KF>
void detail_tconv_bwd_nopad(const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb, int c_in,
                            int len, int c_out, int k_dyn, int l_out, int stride) {
  const int k = KF > 0 ? KF : k_dyn;
  if (gb) {
    for (int c = 0; c < c_out; ++c) {
      const T* gy_c = gy + c * l_out;
      T acc = 0;
      for (int j = 0; j < l_out; ++j) acc += gy_c[j];
      gb[c] += acc;
    }
  }
  for (int i = 0; i < c_in; ++i) {
    const T* x_i = x + i * len;
    T* gx_i = gx ? gx + i * len : nullptr;
    for (int c = 0; c < c_out; ++c) {
      const T* w_ic = w + (i * c_out + c) * k;
      T* gw_ic = gw ? gw + (i * c_out + c) * k : nullptr;
      const T* gy_c = gy + c * l_out;
      if (gx && gw) {
        for (int t = 0; t < len; ++t) {
          const T v = x_i[t];
          const T* gyt = gy_c + t * stride;
          T acc = 0;
          for (int kk = 0; kk < k; ++kk) {
            acc += w_ic[kk] * gyt[kk];
            gw_ic[kk] += v * gyt[kk];
          }
          gx_i[t] += acc;
        }
      } else if (gx) {
        for (int t = 0; t < len; ++t) {
          const T* gyt = gy_c + t * stride;
          T acc = 0;
          for (int kk = 0; kk < k; ++kk) acc += w_ic[kk] * gyt[kk];
          gx_i[t] += acc;
        }
      } else if (gw) {
        for (int t = 0; t < len; ++t) {
          const T v = x_i[t];
          const T* gyt = gy_c + t * stride;
          for (int kk = 0; kk < k; ++kk) gw_ic[kk] += v * gyt[kk];
        }
      }
    }
  }
}

// Routes a runtime kernel width to the unrolled instantiations used by the
// default architectures.
template <typename Fn>
void detail_dispatch_k(int k, Fn&& fn) {
  switch (k) {
    case 3: fn(std::integral_constant<int, 3>{}); break;
    case 5: fn(std::integral_constant<int, 5>{}); break;
    case 7: fn(std::integral_constant<int, 7>{}); break;
    default: fn(std::integral_constant<int, 0>{}); break;
  }
}

// 1D convolution. input [C_in x L], kernels [C_out x C_in x K], bias [C_out],
// explicit symmetric zero padding. Output [C_out x L_out] with
// L_out = (L + 2*padding - K) / stride + 1.
template <typename T>
Tensor<T> conv1d(Tape<T>* tape, Tensor<T> input, Tensor<T> kernels,
                 Tensor<T> bias, int stride, int padding) {
  if (input.rank() != 2 || kernels.rank() != 3 || bias.rank() != 1) {
    throw ShapeError("conv1d expects input [C_in x L], kernels [C_out x C_in x K], bias [C_out]");
  }
  const int c_in = input.dim(0);
  const int len = input.dim(1);
  const int c_out = kernels.dim(0);
  const int k = kernels.dim(2);
  if (kernels.dim(1) != c_in) {
    throw ShapeError("conv1d channel mismatch: input has " + std::to_string(c_in) +
                     " channels, kernels expect " + std::to_string(kernels.dim(1)));
  }
  if (bias.dim(0) != c_out) {
    throw ShapeError("conv1d bias length " + std::to_string(bias.dim(0)) +
                     " != C_out " + std::to_string(c_out));
  }
  if (stride < 1) throw ArgumentError("conv1d stride must be positive");
  if (padding < 0) throw ArgumentError("conv1d padding must be non-negative");
  if (k > len + 2 * padding || (len + 2 * padding - k) / stride + 1 < 1) {
    throw GeometryError("conv1d output would be empty: L=" + std::to_string(len) +
                        " K=" + std::to_string(k) + " stride=" + std::to_string(stride) +
                        " padding=" + std::to_string(padding));
  }
  const int l_out = (len + 2 * padding - k) / stride + 1;

  Tensor<T> out = detail_make_output(tape, {c_out, l_out}, input, kernels, bias);
  if (padding == 0) {
    detail_dispatch_k(k, [&](auto kf) {
      detail_conv_fwd_nopad<T, decltype(kf)::value>(input.data(), kernels.data(), bias.data(),
                                                    out.data(), c_in, len, c_out, k, l_out,
                                                    stride);
    });
  } else {
    const T* x = input.data();
    const T* w = kernels.data();
    const T* b = bias.data();
    T* y = out.data();
    for (int o = 0; o < c_out; ++o) {
      T* y_o = y + o * l_out;
      for (int t = 0; t < l_out; ++t) y_o[t] = b[o];
      for (int i = 0; i < c_in; ++i) {
        const T* x_i = x + i * len;
        const T* w_oi = w + (o * c_in + i) * k;
        for (int t = 0; t < l_out; ++t) {
          const int j0 = t * stride - padding;
          const int k_lo = j0 < 0 ? -j0 : 0;
          const int k_hi = std::min(k, len - j0);
          T acc = 0;
          for (int kk = k_lo; kk < k_hi; ++kk) acc += w_oi[kk] * x_i[j0 + kk];
          y_o[t] += acc;
        }
      }
    }
  }

  if (out.tracked()) {
    tape->record(out, [out, input, kernels, bias, stride, padding]() mutable {
      if (!out.has_grad()) return;
      const int c_in = input.dim(0), len = input.dim(1);
      const int c_out = kernels.dim(0), k = kernels.dim(2);
      const int l_out = out.dim(1);
      const T* gy = out.grad().data();
      if (padding == 0) {
        T* gx = input.tracked() ? input.grad().data() : nullptr;
        T* gw = kernels.tracked() ? kernels.grad().data() : nullptr;
        T* gb = bias.tracked() ? bias.grad().data() : nullptr;
        detail_dispatch_k(k, [&](auto kf) {
          detail_conv_bwd_nopad<T, decltype(kf)::value>(input.data(), kernels.data(), gy, gx, gw,
                                                        gb, c_in, len, c_out, k, l_out, stride);
        });
        return;
      }
      if (input.tracked()) {
        T* gx = input.grad().data();
        const T* w = kernels.data();
        for (int o = 0; o < c_out; ++o) {
          const T* gy_o = gy + o * l_out;
          for (int i = 0; i < c_in; ++i) {
            const T* w_oi = w + (o * c_in + i) * k;
            T* gx_i = gx + i * len;
            for (int t = 0; t < l_out; ++t) {
              const int j0 = t * stride - padding;
              const int k_lo = j0 < 0 ? -j0 : 0;
              const int k_hi = std::min(k, len - j0);
              const T g = gy_o[t];
              for (int kk = k_lo; kk < k_hi; ++kk) gx_i[j0 + kk] += g * w_oi[kk];
            }
          }
        }
      }
      if (kernels.tracked()) {
        T* gw = kernels.grad().data();
        const T* x = input.data();
        for (int o = 0; o < c_out; ++o) {
          const T* gy_o = gy + o * l_out;
          for (int i = 0; i < c_in; ++i) {
            const T* x_i = x + i * len;
            T* gw_oi = gw + (o * c_in + i) * k;
            for (int t = 0; t < l_out; ++t) {
              const int j0 = t * stride - padding;
              const int k_lo = j0 < 0 ? -j0 : 0;
              const int k_hi = std::min(k, len - j0);
              const T g = gy_o[t];
              for (int kk = k_lo; kk < k_hi; ++kk) gw_oi[kk] += g * x_i[j0 + kk];
            }
          }
        }
      }
      if (bias.tracked()) {
        T* gb = bias.grad().data();
        for (int o = 0; o < c_out; ++o) {
          const T* gy_o = gy + o * l_out;
          T acc = 0;
          for (int t = 0; t < l_out; ++t) acc += gy_o[t];
          gb[o] += acc;
        }
      }
    });
  }
  return out;
}

// Transposed 1D convolution, the exact adjoint of conv1d's linear map when
// the kernel buffer is shared. input [C_in x L], kernels [C_in x C_out x K],
// bias [C_out]. Output [C_out x L_out] with L_out = (L-1)*stride + K - 2*padding.
template <typename T>
Tensor<T> conv1d_transpose(Tape<T>* tape, Tensor<T> input, Tensor<T> kernels,
                           Tensor<T> bias, int stride, int padding) {
  if (input.rank() != 2 || kernels.rank() != 3 || bias.rank() != 1) {
    throw ShapeError(
        "conv1d_transpose expects input [C_in x L], kernels [C_in x C_out x K], bias [C_out]");
  }
  const int c_in = input.dim(0);
  const int len = input.dim(1);
  const int c_out = kernels.dim(1);
  const int k = kernels.dim(2);
  if (kernels.dim(0) != c_in) {
    throw ShapeError("conv1d_transpose channel mismatch: input has " + std::to_string(c_in) +
                     " channels, kernels expect " + std::to_string(kernels.dim(0)));
  }
  if (bias.dim(0) != c_out) {
    throw ShapeError("conv1d_transpose bias length " + std::to_string(bias.dim(0)) +
                     " != C_out " + std::to_string(c_out));
  }
  if (stride < 1) throw ArgumentError("conv1d_transpose stride must be positive");
  if (padding < 0) throw ArgumentError("conv1d_transpose padding must be non-negative");
  const int l_out = (len - 1) * stride + k - 2 * padding;
  if (l_out < 1) {
    throw GeometryError("conv1d_transpose output would be empty: L=" + std::to_string(len) +
                        " K=" + std::to_string(k) + " stride=" + std::to_string(stride) +
                        " padding=" + std::to_string(padding));
  }

  Tensor<T> out = detail_make_output(tape, {c_out, l_out}, input, kernels, bias);
  if (padding == 0) {
    detail_dispatch_k(k, [&](auto kf) {
      detail_tconv_fwd_nopad<T, decltype(kf)::value>(input.data(), kernels.data(), bias.data(),
                                                     out.data(), c_in, len, c_out, k, l_out,
                                                     stride);
    });
  } else {
    const T* x = input.data();
    const T* w = kernels.data();
    const T* b = bias.data();
    T* y = out.data();
    for (int c = 0; c < c_out; ++c) {
      T* y_c = y + c * l_out;
      for (int j = 0; j < l_out; ++j) y_c[j] = b[c];
    }
    for (int i = 0; i < c_in; ++i) {
      const T* x_i = x + i * len;
      for (int c = 0; c < c_out; ++c) {
        const T* w_ic = w + (i * c_out + c) * k;
        T* y_c = y + c * l_out;
        for (int t = 0; t < len; ++t) {
          const T v = x_i[t];
          const int j0 = t * stride - padding;
          const int k_lo = j0 < 0 ? -j0 : 0;
          const int k_hi = std::min(k, l_out - j0);
          for (int kk = k_lo; kk < k_hi; ++kk) y_c[j0 + kk] += v * w_ic[kk];
        }
      }
    }
  }

  if (out.tracked()) {
    tape->record(out, [out, input, kernels, bias, stride, padding]() mutable {
      if (!out.has_grad()) return;
      const int c_in = input.dim(0), len = input.dim(1);
      const int c_out = kernels.dim(1), k = kernels.dim(2);
      const int l_out = out.dim(1);
      const T* gy = out.grad().data();
      if (padding == 0) {
        T* gx = input.tracked() ? input.grad().data() : nullptr;
        T* gw = kernels.tracked() ? kernels.grad().data() : nullptr;
        T* gb = bias.tracked() ? bias.grad().data() : nullptr;
        detail_dispatch_k(k, [&](auto kf) {
          detail_tconv_bwd_nopad<T, decltype(kf)::value>(input.data(), kernels.data(), gy, gx, gw,
                                                         gb, c_in, len, c_out, k, l_out, stride);
        });
        return;
      }
      if (input.tracked()) {
        T* gx = input.grad().data();
        const T* w = kernels.data();
        for (int i = 0; i < c_in; ++i) {
          T* gx_i = gx + i * len;
          for (int c = 0; c < c_out; ++c) {
            const T* w_ic = w + (i * c_out + c) * k;
            const T* gy_c = gy + c * l_out;
            for (int t = 0; t < len; ++t) {
              const int j0 = t * stride - padding;
              const int k_lo = j0 < 0 ? -j0 : 0;
              const int k_hi = std::min(k, l_out - j0);
              T acc = 0;
              for (int kk = k_lo; kk < k_hi; ++kk) acc += w_ic[kk] * gy_c[j0 + kk];
              gx_i[t] += acc;
            }
          }
        }
      }
      if (kernels.tracked()) {
        T* gw = kernels.grad().data();
        const T* x = input.data();
        for (int i = 0; i < c_in; ++i) {
          const T* x_i = x + i * len;
          for (int c = 0; c < c_out; ++c) {
            T* gw_ic = gw + (i * c_out + c) * k;
            const T* gy_c = gy + c * l_out;
            for (int t = 0; t < len; ++t) {
              const T v = x_i[t];
              const int j0 = t * stride - padding;
              const int k_lo = j0 < 0 ? -j0 : 0;
              const int k_hi = std::min(k, l_out - j0);
              for (int kk = k_lo; kk < k_hi; ++kk) gw_ic[kk] += v * gy_c[j0 + kk];
            }
          }
        }
      }
      if (bias.tracked()) {
        T* gb = bias.grad().data();
        for (int c = 0; c < c_out; ++c) {
          const T* gy_c = gy + c * l_out;
          T acc = 0;
          for (int j = 0; j < l_out; ++j) acc += gy_c[j];
          gb[c] += acc;
        }
      }
    });
  }
  return out;
}

// Fully connected layer: weight [F_out x F_in] * input [F_in] + bias [F_out].
template <typename T>
Tensor<T> dense(Tape<T>* tape, Tensor<T> input, Tensor<T> weight,
                Tensor<T> bias) {
  if (input.rank() != 1 || weight.rank() != 2 || bias.rank() != 1) {
    throw ShapeError("dense expects input [F_in], weight [F_out x F_in], bias [F_out]");
  }
  const int f_in = input.dim(0);
  const int f_out = weight.dim(0);
  if (weight.dim(1) != f_in) {
    throw ShapeError("dense weight columns " + std::to_string(weight.dim(1)) +
                     " != input length " + std::to_string(f_in));
  }
  if (bias.dim(0) != f_out) {
    throw ShapeError("dense bias length " + std::to_string(bias.dim(0)) +
                     " != F_out " + std::to_string(f_out));
  }

  Tensor<T> out = detail_make_output(tape, {f_out}, input, weight, bias);
  {
    const T* x = input.data();
    const T* w = weight.data();
    const T* b = bias.data();
    T* y = out.data();
    for (int o = 0; o < f_out; ++o) {
      const T* w_o = w + o * f_in;
      T acc = b[o];
      for (int i = 0; i < f_in; ++i) acc += w_o[i] * x[i];
      y[o] = acc;
    }
  }

  if (out.tracked()) {
    tape->record(out, [out, input, weight, bias]() mutable {
      if (!out.has_grad()) return;
      const int f_in = input.dim(0), f_out = weight.dim(0);
      const T* gy = out.grad().data();
      if (input.tracked()) {
        T* gx = input.grad().data();
        const T* w = weight.data();
        for (int o = 0; o < f_out; ++o) {
          const T g = gy[o];
          const T* w_o = w + o * f_in;
          for (int i = 0; i < f_in; ++i) gx[i] += g * w_o[i];
        }
      }
      if (weight.tracked()) {
        T* gw = weight.grad().data();
        const T* x = input.data();
        for (int o = 0; o < f_out; ++o) {
          const T g = gy[o];
          T* gw_o = gw + o * f_in;
          for (int i = 0; i < f_in; ++i) gw_o[i] += g * x[i];
        }
      }
      if (bias.tracked()) {
        T* gb = bias.grad().data();
        for (int o = 0; o < f_out; ++o) gb[o] += gy[o];
      }
    });
  }
  return out;
}

enum class ActivationKind { LeakyRelu, Sigmoid, Tanh };

struct Activation {
  ActivationKind kind = ActivationKind::LeakyRelu;
  double alpha = 0.2;  // leaky_relu negative slope
};

template <typename T>
Tensor<T> leaky_relu(Tape<T>* tape, Tensor<T> input, T alpha) {
  if (!(alpha > T(0))) throw ArgumentError("leaky_relu alpha must be positive");
  Tensor<T> out = detail_make_output(tape, input.shape(), input);
  const T* x = input.data();
  T* y = out.data();
  const int n = input.size();
  for (int i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : alpha * x[i];
  if (out.tracked()) {
    tape->record(out, [out, input, alpha]() mutable {
      if (!out.has_grad() || !input.tracked()) return;
      const T* gy = out.grad().data();
      const T* x = input.data();
      T* gx = input.grad().data();
      const int n = input.size();
      for (int i = 0; i < n; ++i) gx[i] += gy[i] * (x[i] > T(0) ? T(1) : alpha);
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, Tensor<T> input) {
  Tensor<T> out = detail_make_output(tape, input.shape(), input);
  const T* x = input.data();
  T* y = out.data();
  const int n = input.size();
  for (int i = 0; i < n; ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
  if (out.tracked()) {
    tape->record(out, [out, input]() mutable {
      if (!out.has_grad() || !input.tracked()) return;
      const T* gy = out.grad().data();
      const T* y = out.data();
      T* gx = input.grad().data();
      const int n = input.size();
      for (int i = 0; i < n; ++i) gx[i] += gy[i] * y[i] * (T(1) - y[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> tanh_act(Tape<T>* tape, Tensor<T> input) {
  Tensor<T> out = detail_make_output(tape, input.shape(), input);
  const T* x = input.data();
  T* y = out.data();
  const int n = input.size();
  for (int i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
  if (out.tracked()) {
    tape->record(out, [out, input]() mutable {
      if (!out.has_grad() || !input.tracked()) return;
      const T* gy = out.grad().data();
      const T* y = out.data();
      T* gx = input.grad().data();
      const int n = input.size();
      for (int i = 0; i < n; ++i) gx[i] += gy[i] * (T(1) - y[i] * y[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> activation(Tape<T>* tape, Tensor<T> input, const Activation& act) {
  switch (act.kind) {
    case ActivationKind::LeakyRelu:
      return leaky_relu(tape, input, static_cast<T>(act.alpha));
    case ActivationKind::Sigmoid:
      return sigmoid(tape, input);
    case ActivationKind::Tanh:
      return tanh_act(tape, input);
  }
  throw ArgumentError("unknown activation kind");
}

// Mean squared error over all elements; scalar output.
template <typename T>
Tensor<T> mse(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse operands must share a shape");
  }
  const int n = a.size();
  Tensor<T> out = detail_make_output(tape, {1}, a, b);
  {
    const T* pa = a.data();
    const T* pb = b.data();
    T acc = 0;
    for (int i = 0; i < n; ++i) {
      const T d = pa[i] - pb[i];
      acc += d * d;
    }
    out.data()[0] = acc / static_cast<T>(n);
  }
  if (out.tracked()) {
    tape->record(out, [out, a, b]() mutable {
      if (!out.has_grad()) return;
      const int n = a.size();
      const T g = out.grad()[0] * T(2) / static_cast<T>(n);
      const T* pa = a.data();
      const T* pb = b.data();
      if (a.tracked()) {
        T* ga = a.grad().data();
        for (int i = 0; i < n; ++i) ga[i] += g * (pa[i] - pb[i]);
      }
      if (b.tracked()) {
        T* gb = b.grad().data();
        for (int i = 0; i < n; ++i) gb[i] -= g * (pa[i] - pb[i]);
      }
    });
  }
  return out;
}

// Probability clamp used inside bce before taking logarithms.
inline constexpr double kBceClamp = 1e-7;

// Binary cross-entropy of a scalar probability against a hard 0/1 target.
// The probability is clamped into [kBceClamp, 1-kBceClamp]; the gradient uses
// the clamped denominator as well, so it stays bounded when the input
// saturates instead of dropping to zero.
template <typename T>
Tensor<T> bce(Tape<T>* tape, Tensor<T> p, int target) {
  if (p.size() != 1) throw ShapeError("bce expects a scalar probability");
  if (target != 0 && target != 1) throw ArgumentError("bce target must be 0 or 1");
  const T eps = static_cast<T>(kBceClamp);
  Tensor<T> out = detail_make_output(tape, {1}, p);
  const T pc = std::clamp(p.data()[0], eps, T(1) - eps);
  out.data()[0] = target == 1 ? -std::log(pc) : -std::log(T(1) - pc);
  if (out.tracked()) {
    tape->record(out, [out, p, target, eps]() mutable {
      if (!out.has_grad() || !p.tracked()) return;
      const T pc = std::clamp(p.data()[0], eps, T(1) - eps);
      const T d = target == 1 ? -T(1) / pc : T(1) / (T(1) - pc);
      p.grad()[0] += out.grad()[0] * d;
    });
  }
  return out;
}

// Elementwise sum; operands must share a shape.
template <typename T>
Tensor<T> add(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  if (a.shape() != b.shape()) throw ShapeError("add operands must share a shape");
  const int n = a.size();
  Tensor<T> out = detail_make_output(tape, a.shape(), a, b);
  const T* pa = a.data();
  const T* pb = b.data();
  T* y = out.data();
  for (int i = 0; i < n; ++i) y[i] = pa[i] + pb[i];
  if (out.tracked()) {
    tape->record(out, [out, a, b]() mutable {
      if (!out.has_grad()) return;
      const int n = a.size();
      const T* gy = out.grad().data();
      if (a.tracked()) {
        T* ga = a.grad().data();
        for (int i = 0; i < n; ++i) ga[i] += gy[i];
      }
      if (b.tracked()) {
        T* gb = b.grad().data();
        for (int i = 0; i < n; ++i) gb[i] += gy[i];
      }
    });
  }
  return out;
}

// Multiply every element by a constant.
template <typename T>
Tensor<T> scale(Tape<T>* tape, Tensor<T> input, T factor) {
  const int n = input.size();
  Tensor<T> out = detail_make_output(tape, input.shape(), input);
  const T* x = input.data();
  T* y = out.data();
  for (int i = 0; i < n; ++i) y[i] = factor * x[i];
  if (out.tracked()) {
    tape->record(out, [out, input, factor]() mutable {
      if (!out.has_grad() || !input.tracked()) return;
      const int n = input.size();
      const T* gy = out.grad().data();
      T* gx = input.grad().data();
      for (int i = 0; i < n; ++i) gx[i] += factor * gy[i];
    });
  }
  return out;
}

// Keeps the first `length` columns of a [C x L] tensor. The gradient
// scatters back into those columns; the dropped tail gets none.
template <typename T>
Tensor<T> crop1d(Tape<T>* tape, Tensor<T> input, int length) {
  if (input.rank() != 2) throw ShapeError("crop1d expects a [C x L] tensor");
  const int c = input.dim(0);
  const int len = input.dim(1);
  if (length < 1 || length > len) {
    throw ArgumentError("crop1d length " + std::to_string(length) +
                        " out of range for L=" + std::to_string(len));
  }
  Tensor<T> out = detail_make_output(tape, {c, length}, input);
  for (int i = 0; i < c; ++i) {
    std::copy(input.data() + i * len, input.data() + i * len + length,
              out.data() + i * length);
  }
  if (out.tracked()) {
    tape->record(out, [out, input, length]() mutable {
      if (!out.has_grad() || !input.tracked()) return;
      const int c = input.dim(0), len = input.dim(1);
      const T* gy = out.grad().data();
      T* gx = input.grad().data();
      for (int i = 0; i < c; ++i)
        for (int j = 0; j < length; ++j) gx[i * len + j] += gy[i * length + j];
    });
  }
  return out;
}

// View change with a copy; gradient passes straight through.
template <typename T>
Tensor<T> reshape(Tape<T>* tape, Tensor<T> input, std::vector<int> new_shape) {
  Tensor<T> out = detail_make_output(tape, std::move(new_shape), input);
  if (out.size() != input.size()) {
    throw ShapeError("reshape cannot change the element count (" +
                     std::to_string(input.size()) + " -> " + std::to_string(out.size()) + ")");
  }
  std::copy(input.values().begin(), input.values().end(), out.values().begin());
  if (out.tracked()) {
    tape->record(out, [out, input]() mutable {
      if (!out.has_grad() || !input.tracked()) return;
      const int n = input.size();
      const T* gy = out.grad().data();
      T* gx = input.grad().data();
      for (int i = 0; i < n; ++i) gx[i] += gy[i];
    });
  }
  return out;
}

}  // namespace ran
