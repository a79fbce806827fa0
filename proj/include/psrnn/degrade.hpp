#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>

#include "psrnn/image.hpp"

namespace psrnn {

struct DegradeConfig {
  int qp = 32;
  std::size_t block = 8;

  void validate() const {
    if (qp < 0) throw ConfigError("qp must be non-negative");
    if (block == 0) throw ConfigError("degrade block size must be positive");
  }
};

/// Quantizer step size on the 0-255 scale.
inline double qstep_for_qp(int qp) { return std::pow(2.0, (qp - 4) / 6.0); }

namespace detail {

/// Orthonormal DCT-II basis, rows indexed by frequency.
inline std::vector<double> dct_basis(std::size_t n) {
  std::vector<double> c(n * n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      c[k * n + i] = (k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n)) *
                     std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * n));
  return c;
}

/// out = A * X * B^T style separable transform on an n x n block: forward
/// computes C X C^T, inverse C^T X C.
inline void separable(const std::vector<double>& c, std::size_t n, const double* x, double* out, bool inverse) {
  std::vector<double> tmp(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < n; ++k) s += (inverse ? c[k * n + i] : c[i * n + k]) * x[k * n + j];
      tmp[i * n + j] = s;
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < n; ++k) s += tmp[i * n + k] * (inverse ? c[k * n + j] : c[j * n + k]);
      out[i * n + j] = s;
    }
}

}  // namespace detail

/// Forward 2-D DCT of the block at (x0, y0) on the 0-255 scale, with edge
/// replication past the image border.
inline std::vector<double> block_dct(const GrayImage& img, std::size_t x0, std::size_t y0, std::size_t n) {
  const auto c = detail::dct_basis(n);
  std::vector<double> x(n * n), out(n * n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t xx = 0; xx < n; ++xx)
      x[y * n + xx] = 255.0 * img.at(std::min(x0 + xx, img.width - 1), std::min(y0 + y, img.height - 1));
  detail::separable(c, n, x.data(), out.data(), false);
  return out;
}

/// Simulated reconstruction: per-block DCT, uniform quantization with the
/// QP-derived step, inverse DCT, rounding to 8 bits.
inline GrayImage degrade(const GrayImage& img, const DegradeConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.block;
  const double q = qstep_for_qp(cfg.qp);
  const auto c = detail::dct_basis(n);
  GrayImage out(img.width, img.height);
  std::vector<double> rec(n * n);
  for (std::size_t y0 = 0; y0 < img.height; y0 += n)
    for (std::size_t x0 = 0; x0 < img.width; x0 += n) {
      auto coef = block_dct(img, x0, y0, n);
      for (auto& v : coef) v = std::nearbyint(v / q) * q;
      detail::separable(c, n, coef.data(), rec.data(), true);
      for (std::size_t y = 0; y < n && y0 + y < img.height; ++y)
        for (std::size_t x = 0; x < n && x0 + x < img.width; ++x)
          out.at(x0 + x, y0 + y) = static_cast<float>(std::clamp(std::nearbyint(rec[y * n + x]), 0.0, 255.0) / 255.0);
    }
  return out;
}

}  // namespace psrnn
