#pragma once

#include <cstddef>
#include <string>

#include "psrnn/tensor.hpp"

namespace psrnn {

/// Geometry of a 2-D convolution over NHWC tensors. Weights are laid out as
/// (out_channels, kernel_h, kernel_w, in_channels); bias as (out_channels).
struct ConvSpec {
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;

  std::size_t out_extent(std::size_t in, std::size_t kernel) const {
    if (stride < 1 || kernel < 1) throw ShapeError("conv: kernel and stride must be positive");
    if (in + 2 * padding < kernel) throw ShapeError("conv: kernel larger than padded input");
    return (in + 2 * padding - kernel) / stride + 1;
  }
  std::size_t out_h(std::size_t in) const { return out_extent(in, kernel_h); }
  std::size_t out_w(std::size_t in) const { return out_extent(in, kernel_w); }

  /// Output extent of the transposed convolution that is the adjoint of this one.
  std::size_t transposed_extent(std::size_t in, std::size_t kernel) const {
    const std::size_t full = (in - 1) * stride + kernel;
    if (full <= 2 * padding) throw ShapeError("conv_transpose: output extent would be empty");
    return full - 2 * padding;
  }

  Shape weight_shape() const { return Shape{out_channels, kernel_h, kernel_w, in_channels}; }
  std::size_t patch_size() const { return kernel_h * kernel_w * in_channels; }
};

/// Result of a convolution backward pass.
template <class T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  BasicTensor<T> bias;
};

namespace detail {

struct Nhwc {
  std::size_t batch, height, width, channels;
  bool batched;
};

template <class T>
Nhwc nhwc_of(const BasicTensor<T>& t, const char* op) {
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), true};
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2), false};
  throw ShapeError(std::string(op) + ": expected (H,W,C) or (B,H,W,C), got " + t.shape().str());
}

inline Shape nhwc_shape(const Nhwc& g, std::size_t h, std::size_t w, std::size_t c) {
  return g.batched ? Shape{g.batch, h, w, c} : Shape{h, w, c};
}

/// Patch matrix with one row per output location and one column per
/// (ky, kx, channel) kernel tap; taps falling into the padding are zero.
template <class T>
DMat im2col(const T* in, const Nhwc& g, const ConvSpec& spec, std::size_t out_h, std::size_t out_w) {
  const std::size_t k = spec.patch_size();
  DMat cols = DMat::Zero(static_cast<Eigen::Index>(g.batch * out_h * out_w), static_cast<Eigen::Index>(k));
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        double* row = cols.data() + ((b * out_h + oy) * out_w + ox) * k;
        for (std::size_t ky = 0; ky < spec.kernel_h; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * spec.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t kx = 0; kx < spec.kernel_w; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * spec.stride + kx) - pad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            const T* src = in + ((b * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix)) *
                                    g.channels;
            double* dst = row + (ky * spec.kernel_w + kx) * g.channels;
            for (std::size_t c = 0; c < g.channels; ++c) dst[c] = static_cast<double>(src[c]);
          }
        }
      }
  return cols;
}

/// Scatter-add of a patch matrix back onto an NHWC image (adjoint of im2col).
inline void col2im(const DMat& cols, const Nhwc& g, const ConvSpec& spec, std::size_t out_h, std::size_t out_w,
                   double* img) {
  const std::size_t k = spec.patch_size();
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const double* row = cols.data() + ((b * out_h + oy) * out_w + ox) * k;
        for (std::size_t ky = 0; ky < spec.kernel_h; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * spec.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t kx = 0; kx < spec.kernel_w; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * spec.stride + kx) - pad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            double* dst = img + ((b * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix)) *
                                    g.channels;
            const double* src = row + (ky * spec.kernel_w + kx) * g.channels;
            for (std::size_t c = 0; c < g.channels; ++c) dst[c] += src[c];
          }
        }
      }
}

template <class T>
void check_conv_params(const BasicTensor<T>& weights, const BasicTensor<T>& bias, const ConvSpec& spec,
                       const char* op) {
  if (!(weights.shape() == spec.weight_shape()))
    throw ShapeError(std::string(op) + ": weights " + weights.shape().str() + " do not match spec " +
                     spec.weight_shape().str());
  if (!(bias.shape() == Shape{spec.out_channels}))
    throw ShapeError(std::string(op) + ": bias must have out_channels entries");
}

}  // namespace detail

/// Cross-correlation with zero padding. Accepts (H,W,C) or (B,H,W,C) input.
template <class T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                              const ConvSpec& spec) {
  const auto g = detail::nhwc_of(input, "conv2d_forward");
  if (g.channels != spec.in_channels) throw ShapeError("conv2d_forward: input channels do not match spec");
  detail::check_conv_params(weights, bias, spec, "conv2d_forward");
  const std::size_t oh = spec.out_h(g.height), ow = spec.out_w(g.width);
  const detail::DMat cols = detail::im2col(input.data(), g, spec, oh, ow);
  const detail::DMat w = detail::to_dmat(weights.data(), spec.out_channels, spec.patch_size());
  detail::DMat out = cols * w.transpose();
  const Eigen::RowVectorXd b = detail::to_dmat(bias.data(), 1, spec.out_channels);
  out.rowwise() += b;
  return detail::from_dmat<T>(out, detail::nhwc_shape(g, oh, ow, spec.out_channels));
}

template <class T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights, const ConvSpec& spec,
                             const BasicTensor<T>& grad_out) {
  const auto g = detail::nhwc_of(input, "conv2d_backward");
  if (g.channels != spec.in_channels) throw ShapeError("conv2d_backward: input channels do not match spec");
  if (!(weights.shape() == spec.weight_shape())) throw ShapeError("conv2d_backward: weights do not match spec");
  const std::size_t oh = spec.out_h(g.height), ow = spec.out_w(g.width);
  if (!(grad_out.shape() == detail::nhwc_shape(g, oh, ow, spec.out_channels)))
    throw ShapeError("conv2d_backward: grad_out " + grad_out.shape().str() + " does not match forward output");

  const detail::DMat cols = detail::im2col(input.data(), g, spec, oh, ow);
  const detail::DMat w = detail::to_dmat(weights.data(), spec.out_channels, spec.patch_size());
  const detail::DMat gy = detail::to_dmat(grad_out.data(), g.batch * oh * ow, spec.out_channels);

  const detail::DMat gw = gy.transpose() * cols;
  const Eigen::RowVectorXd gb = gy.colwise().sum();
  const detail::DMat gcols = gy * w;
  detail::DMat gin = detail::DMat::Zero(static_cast<Eigen::Index>(g.batch * g.height * g.width),
                                        static_cast<Eigen::Index>(g.channels));
  detail::col2im(gcols, g, spec, oh, ow, gin.data());

  return {detail::from_dmat<T>(gin, input.shape()), detail::from_dmat<T>(gw, spec.weight_shape()),
          detail::from_dmat<T>(detail::DMat(gb), Shape{spec.out_channels})};
}

/// Transposed convolution: the adjoint of conv2d_forward(spec) with respect to
/// its input, plus a bias. `spec` describes the forward convolution, so the
/// transposed layer maps spec.out_channels -> spec.in_channels and its bias has
/// spec.in_channels entries.
template <class T>
BasicTensor<T> conv_transpose2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                        const BasicTensor<T>& bias, const ConvSpec& spec) {
  const auto g = detail::nhwc_of(input, "conv_transpose2d_forward");
  if (g.channels != spec.out_channels) throw ShapeError("conv_transpose2d_forward: input channels mismatch");
  if (!(weights.shape() == spec.weight_shape())) throw ShapeError("conv_transpose2d_forward: weights mismatch");
  if (!(bias.shape() == Shape{spec.in_channels})) throw ShapeError("conv_transpose2d_forward: bias mismatch");
  const std::size_t oh = spec.transposed_extent(g.height, spec.kernel_h);
  const std::size_t ow = spec.transposed_extent(g.width, spec.kernel_w);
  if (spec.out_h(oh) != g.height || spec.out_w(ow) != g.width)
    throw ShapeError("conv_transpose2d_forward: geometry is not invertible");

  const detail::DMat x = detail::to_dmat(input.data(), g.batch * g.height * g.width, g.channels);
  const detail::DMat w = detail::to_dmat(weights.data(), spec.out_channels, spec.patch_size());
  const detail::DMat cols = x * w;
  const detail::Nhwc og{g.batch, oh, ow, spec.in_channels, g.batched};
  detail::DMat out = detail::DMat::Zero(static_cast<Eigen::Index>(g.batch * oh * ow),
                                        static_cast<Eigen::Index>(spec.in_channels));
  detail::col2im(cols, og, spec, g.height, g.width, out.data());
  const Eigen::RowVectorXd b = detail::to_dmat(bias.data(), 1, spec.in_channels);
  out.rowwise() += b;
  return detail::from_dmat<T>(out, detail::nhwc_shape(g, oh, ow, spec.in_channels));
}

template <class T>
ConvGrads<T> conv_transpose2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                       const ConvSpec& spec, const BasicTensor<T>& grad_out) {
  const auto g = detail::nhwc_of(input, "conv_transpose2d_backward");
  if (g.channels != spec.out_channels) throw ShapeError("conv_transpose2d_backward: input channels mismatch");
  if (!(weights.shape() == spec.weight_shape())) throw ShapeError("conv_transpose2d_backward: weights mismatch");
  const std::size_t oh = spec.transposed_extent(g.height, spec.kernel_h);
  const std::size_t ow = spec.transposed_extent(g.width, spec.kernel_w);
  const detail::Nhwc og{g.batch, oh, ow, spec.in_channels, g.batched};
  if (!(grad_out.shape() == detail::nhwc_shape(g, oh, ow, spec.in_channels)))
    throw ShapeError("conv_transpose2d_backward: grad_out does not match forward output");

  const detail::DMat gcols = detail::im2col(grad_out.data(), og, spec, g.height, g.width);
  const detail::DMat x = detail::to_dmat(input.data(), g.batch * g.height * g.width, g.channels);
  const detail::DMat w = detail::to_dmat(weights.data(), spec.out_channels, spec.patch_size());
  const detail::DMat gx = gcols * w.transpose();
  const detail::DMat gw = x.transpose() * gcols;
  const detail::DMat gy = detail::to_dmat(grad_out.data(), g.batch * oh * ow, spec.in_channels);
  const Eigen::RowVectorXd gb = gy.colwise().sum();
  return {detail::from_dmat<T>(gx, input.shape()), detail::from_dmat<T>(gw, spec.weight_shape()),
          detail::from_dmat<T>(detail::DMat(gb), Shape{spec.in_channels})};
}

}  // namespace psrnn
