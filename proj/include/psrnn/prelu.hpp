#pragma once

#include <string>

#include "psrnn/tensor.hpp"

namespace psrnn {

template <class T>
struct PReluGrads {
  BasicTensor<T> input;
  BasicTensor<T> alpha;
};

namespace detail {
template <class T>
std::size_t prelu_channels(const BasicTensor<T>& x, const BasicTensor<T>& alpha, const char* op) {
  const std::size_t c = x.dim(x.rank() - 1);
  if (alpha.rank() != 1 || alpha.dim(0) != c)
    throw ShapeError(std::string(op) + ": alpha has " + alpha.shape().str() + " entries for " + std::to_string(c) +
                     " channels");
  return c;
}
}  // namespace detail

/// x if x >= 0 else alpha[c] * x, channel taken from the last axis.
template <class T>
BasicTensor<T> prelu_forward(const BasicTensor<T>& x, const BasicTensor<T>& alpha) {
  const std::size_t c = detail::prelu_channels(x, alpha, "prelu_forward");
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    y[i] = static_cast<T>(v >= 0.0 ? v : static_cast<double>(alpha[i % c]) * v);
  }
  return y;
}

template <class T>
PReluGrads<T> prelu_backward(const BasicTensor<T>& x, const BasicTensor<T>& alpha, const BasicTensor<T>& grad_out) {
  const std::size_t c = detail::prelu_channels(x, alpha, "prelu_backward");
  detail::require_same_shape(x, grad_out, "prelu_backward");
  BasicTensor<T> gx(x.shape());
  std::vector<double> ga(c, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i], g = grad_out[i];
    if (v >= 0.0) {
      gx[i] = static_cast<T>(g);
    } else {
      gx[i] = static_cast<T>(static_cast<double>(alpha[i % c]) * g);
      ga[i % c] += v * g;
    }
  }
  BasicTensor<T> galpha(alpha.shape());
  for (std::size_t k = 0; k < c; ++k) galpha[k] = static_cast<T>(ga[k]);
  return {std::move(gx), std::move(galpha)};
}

}  // namespace psrnn
