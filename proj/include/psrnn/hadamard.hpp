#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "psrnn/tensor.hpp"

namespace psrnn {

/// Sylvester Hadamard matrix with entries in {-1, +1}; symmetric, and
/// H * H^T = order * I.
class HadamardMatrix {
 public:
  explicit HadamardMatrix(std::size_t order) : order_(order), entries_(order * order) {
    if (order == 0 || (order & (order - 1)) != 0)
      throw InvalidOrderError("hadamard order must be a power of two, got " + std::to_string(order));
    entries_[0] = 1;
    for (std::size_t n = 1; n < order; n *= 2)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const int v = entries_[i * order + j];
          entries_[i * order + j + n] = v;
          entries_[(i + n) * order + j] = v;
          entries_[(i + n) * order + j + n] = -v;
        }
  }

  std::size_t order() const noexcept { return order_; }
  int operator()(std::size_t i, std::size_t j) const { return entries_[i * order_ + j]; }

 private:
  std::size_t order_;
  std::vector<int> entries_;
};

inline HadamardMatrix hadamard_matrix(std::size_t order) { return HadamardMatrix(order); }

/// Tile size and gradient smoothing for the SATD loss. The loss is the plain
/// sum over tiles, not normalised by pixel count.
struct SatdConfig {
  std::size_t partition = 4;
  double epsilon = 1e-8;
};

namespace detail {

inline void check_satd_args(std::size_t rows, std::size_t cols, const SatdConfig& cfg) {
  if (cfg.partition == 0 || (cfg.partition & (cfg.partition - 1)) != 0)
    throw InvalidOrderError("satd partition must be a power of two");
  if (!(cfg.epsilon > 0.0)) throw UsageError("satd epsilon must be positive");
  if (rows % cfg.partition != 0 || cols % cfg.partition != 0)
    throw PartitionError("residue " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " is not divisible by partition " + std::to_string(cfg.partition));
}

/// D' = H D H on one p x p tile, with D read from a row-major buffer of the given stride.
template <class T>
void transform_tile(const HadamardMatrix& h, const T* d, std::size_t stride, double* out) {
  const std::size_t p = h.order();
  std::vector<double> tmp(p * p, 0.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t k = 0; k < p; ++k) {
      const double hik = h(i, k);
      const T* row = d + k * stride;
      for (std::size_t j = 0; j < p; ++j) tmp[i * p + j] += hik * static_cast<double>(row[j]);
    }
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < p; ++k) s += tmp[i * p + k] * h(k, j);
      out[i * p + j] = s;
    }
}

template <class T>
void require_rank2(const BasicTensor<T>& d, const char* op) {
  if (d.rank() != 2) throw ShapeError(std::string(op) + ": residue must be rank 2, got " + d.shape().str());
}

}  // namespace detail

/// D' = H * D * H for a square residue whose side equals the Hadamard order.
template <class T>
BasicTensor<T> hadamard_transform(const BasicTensor<T>& d, const HadamardMatrix& h) {
  detail::require_rank2(d, "hadamard_transform");
  if (d.dim(0) != h.order() || d.dim(1) != h.order())
    throw ShapeError("hadamard_transform: residue " + d.shape().str() + " does not match order " +
                     std::to_string(h.order()));
  std::vector<double> out(h.order() * h.order());
  detail::transform_tile(h, d.data(), h.order(), out.data());
  BasicTensor<T> t(d.shape());
  for (std::size_t i = 0; i < out.size(); ++i) t[i] = static_cast<T>(out[i]);
  return t;
}

/// Sum over non-overlapping raster-order tiles of the l1 norm of H * tile * H.
template <class T>
double satd(const BasicTensor<T>& d, const SatdConfig& cfg = {}) {
  detail::require_rank2(d, "satd");
  const std::size_t rows = d.dim(0), cols = d.dim(1), p = cfg.partition;
  detail::check_satd_args(rows, cols, cfg);
  const HadamardMatrix h(p);
  std::vector<double> tile(p * p);
  double total = 0.0;
  for (std::size_t ty = 0; ty < rows; ty += p)
    for (std::size_t tx = 0; tx < cols; tx += p) {
      detail::transform_tile(h, d.data() + ty * cols + tx, cols, tile.data());
      for (double v : tile) total += std::abs(v);
    }
  return total;
}

/// Gradient of the smoothed SATD, sum over tiles of sum_ij sqrt(D'_ij^2 + eps):
///   dS/dD_kl = sum_ij D'_ij / sqrt(D'_ij^2 + eps) * H_ik * H_jl
template <class T>
BasicTensor<T> satd_loss_grad(const BasicTensor<T>& d, const SatdConfig& cfg = {}) {
  detail::require_rank2(d, "satd_loss_grad");
  const std::size_t rows = d.dim(0), cols = d.dim(1), p = cfg.partition;
  detail::check_satd_args(rows, cols, cfg);
  const HadamardMatrix h(p);
  std::vector<double> tile(p * p), tmp(p * p);
  BasicTensor<T> grad(d.shape());
  for (std::size_t ty = 0; ty < rows; ty += p)
    for (std::size_t tx = 0; tx < cols; tx += p) {
      detail::transform_tile(h, d.data() + ty * cols + tx, cols, tile.data());
      for (double& v : tile) v = v / std::sqrt(v * v + cfg.epsilon);
      // grad = H^T * S * H; H is symmetric so this is another H . H sandwich.
      detail::transform_tile(h, tile.data(), p, tmp.data());
      for (std::size_t k = 0; k < p; ++k)
        for (std::size_t l = 0; l < p; ++l) grad[(ty + k) * cols + tx + l] = static_cast<T>(tmp[k * p + l]);
    }
  return grad;
}

/// The smoothed objective whose exact gradient satd_loss_grad returns.
template <class T>
double smoothed_satd(const BasicTensor<T>& d, const SatdConfig& cfg = {}) {
  detail::require_rank2(d, "smoothed_satd");
  const std::size_t rows = d.dim(0), cols = d.dim(1), p = cfg.partition;
  detail::check_satd_args(rows, cols, cfg);
  const HadamardMatrix h(p);
  std::vector<double> tile(p * p);
  double total = 0.0;
  for (std::size_t ty = 0; ty < rows; ty += p)
    for (std::size_t tx = 0; tx < cols; tx += p) {
      detail::transform_tile(h, d.data() + ty * cols + tx, cols, tile.data());
      for (double v : tile) total += std::sqrt(v * v + cfg.epsilon);
    }
  return total;
}

}  // namespace psrnn
