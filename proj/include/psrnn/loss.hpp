#pragma once

#include <string>
#include <utility>

#include "psrnn/hadamard.hpp"
#include "psrnn/tensor.hpp"

namespace psrnn {

enum class LossKind { Satd, Mse };

inline const char* to_string(LossKind k) { return k == LossKind::Satd ? "satd" : "mse"; }

inline LossKind parse_loss(std::string_view s) {
  if (s == "satd" || s == "SATD") return LossKind::Satd;
  if (s == "mse" || s == "MSE") return LossKind::Mse;
  throw ConfigError("unknown loss '" + std::string(s) + "' (expected satd or mse)");
}

/// Loss of one rank-2 prediction against its target and the gradient with
/// respect to the prediction. SATD uses D = prediction - target and is not
/// normalised by pixel count; MSE is the mean over pixels.
template <class T>
std::pair<double, BasicTensor<T>> loss_and_grad(const BasicTensor<T>& prediction, const BasicTensor<T>& target,
                                                LossKind kind, const SatdConfig& satd_cfg = {}) {
  detail::require_same_shape(prediction, target, "loss_and_grad");
  BasicTensor<T> d = sub(prediction, target);
  if (kind == LossKind::Satd) return {satd(d, satd_cfg), satd_loss_grad(d, satd_cfg)};
  const double count = static_cast<double>(d.size());
  double s = 0;
  for (T v : d.values()) s += static_cast<double>(v) * static_cast<double>(v);
  return {s / count, scale(d, 2.0 / count)};
}

/// Per-sample losses of a (B, N, N, 1) prediction batch and the gradient of
/// their mean.
template <class T>
std::pair<std::vector<double>, BasicTensor<T>> batch_loss_and_grad(const BasicTensor<T>& prediction,
                                                                   const BasicTensor<T>& target, LossKind kind,
                                                                   const SatdConfig& satd_cfg = {}) {
  detail::require_same_shape(prediction, target, "batch_loss_and_grad");
  if (prediction.rank() != 4 || prediction.dim(3) != 1) throw ShapeError("batch loss expects (B,N,N,1) tensors");
  const std::size_t b = prediction.dim(0), h = prediction.dim(1), w = prediction.dim(2), per = h * w;
  std::vector<double> losses(b);
  BasicTensor<T> grad(prediction.shape());
  for (std::size_t i = 0; i < b; ++i) {
    const BasicTensor<T> p(Shape{h, w}, std::vector<T>(prediction.data() + i * per, prediction.data() + (i + 1) * per));
    const BasicTensor<T> t(Shape{h, w}, std::vector<T>(target.data() + i * per, target.data() + (i + 1) * per));
    auto [l, g] = loss_and_grad(p, t, kind, satd_cfg);
    losses[i] = l;
    for (std::size_t k = 0; k < per; ++k) grad[i * per + k] = static_cast<T>(static_cast<double>(g[k]) / b);
  }
  return {std::move(losses), std::move(grad)};
}

}  // namespace psrnn
