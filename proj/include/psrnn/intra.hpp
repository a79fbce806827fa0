#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

#include "psrnn/hadamard.hpp"
#include "psrnn/image.hpp"

namespace psrnn {

inline constexpr int kPlanar = 0;
inline constexpr int kDc = 1;
inline constexpr int kHorizontal = 10;
inline constexpr int kVertical = 26;
inline constexpr int kNumModes = 35;
/// Mode index used in cost records for the network predictor.
inline constexpr int kNetworkMode = -1;

/// Which reference segments hold reconstructed samples.
struct ReferenceAvailability {
  bool corner = false;
  bool above = false;
  bool above_right = false;
  bool left = false;
  bool below_left = false;

  static ReferenceAvailability all() { return {true, true, true, true, true}; }
  static ReferenceAvailability none() { return {}; }
  bool any() const { return corner || above || above_right || left || below_left; }
};

/// Single-line references of an N x N block. top[0] is the corner sample at
/// (-1, -1) and top[1 + i] the sample at (i, -1) for i < 2N; left[j] is the
/// sample at (-1, j) for j < 2N.
struct ReferenceSamples {
  std::size_t n = 0;
  std::vector<double> top;
  std::vector<double> left;
  ReferenceAvailability available;
  double fill_value = 0.5;
};

struct IntraConfig {
  bool smoothing = true;
  double mode_bits = 6.0;
  double network_flag_bits = 1.0;
  /// SATD in the RD cost is measured on this sample scale (255 for 8-bit).
  double sample_scale = 255.0;
  SatdConfig satd{};
};

/// HM intra lambda.
inline double lambda_for_qp(int qp) { return 0.57 * std::pow(2.0, (qp - 12) / 3.0); }

struct RdCost {
  double satd = 0.0;
  double bits_proxy = 0.0;
  double lambda = 0.0;
  double total() const { return satd + lambda * bits_proxy; }
};

struct ModeCost {
  int mode = kPlanar;
  RdCost cost;
  double total() const { return cost.total(); }
};

/// Availability of each segment from the image bounds alone: everything that
/// lies inside the image counts as reconstructed.
inline ReferenceAvailability availability_in_bounds(std::size_t width, std::size_t height, std::size_t x0,
                                                    std::size_t y0, std::size_t n) {
  ReferenceAvailability a;
  a.corner = x0 > 0 && y0 > 0;
  a.above = y0 > 0;
  a.above_right = y0 > 0 && x0 + 2 * n <= width;
  a.left = x0 > 0;
  a.below_left = x0 > 0 && y0 + 2 * n <= height;
  return a;
}

/// Reads the reference line of the block at (x0, y0) from `image` and fills
/// unavailable segments by extending the nearest available sample in scan
/// order (below-left upwards, corner, then above left to right), or with
/// `fill_value` when nothing is available.
inline ReferenceSamples build_reference_samples(const GrayImage& image, std::size_t x0, std::size_t y0, std::size_t n,
                                                ReferenceAvailability avail, double fill_value = 0.5) {
  if (n == 0 || x0 + n > image.width || y0 + n > image.height)
    throw BoundsError("block (" + std::to_string(x0) + "," + std::to_string(y0) + ") of size " + std::to_string(n) +
                      " lies outside the " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                      " image");
  auto readable = [&](long x, long y) {
    return x >= 0 && y >= 0 && x < static_cast<long>(image.width) && y < static_cast<long>(image.height);
  };
  const long bx = static_cast<long>(x0), by = static_cast<long>(y0), nn = static_cast<long>(n);

  // Scan order: left[2N-1] .. left[0], corner, top[1] .. top[2N].
  const std::size_t total = 4 * n + 1;
  std::vector<double> line(total, 0.0);
  std::vector<char> ok(total, 0);
  for (long j = 0; j < 2 * nn; ++j) {
    const bool seg = j < nn ? avail.left : avail.below_left;
    const std::size_t k = static_cast<std::size_t>(2 * nn - 1 - j);
    if (seg && readable(bx - 1, by + j)) ok[k] = 1, line[k] = image.at(x0 - 1, y0 + j);
  }
  if (avail.corner && readable(bx - 1, by - 1)) ok[2 * n] = 1, line[2 * n] = image.at(x0 - 1, y0 - 1);
  for (long i = 0; i < 2 * nn; ++i) {
    const bool seg = i < nn ? avail.above : avail.above_right;
    const std::size_t k = 2 * n + 1 + static_cast<std::size_t>(i);
    if (seg && readable(bx + i, by - 1)) ok[k] = 1, line[k] = image.at(x0 + i, y0 - 1);
  }

  std::size_t first = 0;
  while (first < total && !ok[first]) ++first;
  if (first == total) {
    std::fill(line.begin(), line.end(), fill_value);
  } else {
    for (std::size_t k = 0; k < first; ++k) line[k] = line[first];
    for (std::size_t k = first + 1; k < total; ++k)
      if (!ok[k]) line[k] = line[k - 1];
  }

  ReferenceSamples r;
  r.n = n;
  r.available = avail;
  r.fill_value = fill_value;
  r.left.resize(2 * n);
  r.top.resize(2 * n + 1);
  for (std::size_t j = 0; j < 2 * n; ++j) r.left[j] = line[2 * n - 1 - j];
  for (std::size_t i = 0; i <= 2 * n; ++i) r.top[i] = line[2 * n + i];
  return r;
}

namespace detail {

inline constexpr std::array<int, 35> kIntraAngle = {0,   0,   32,  26,  21,  17,  13,  9,   5,   2,   0,   -2,
                                                    -5,  -9,  -13, -17, -21, -26, -32, -26, -21, -17, -13, -9,
                                                    -5,  -2,  0,   2,   5,   9,   13,  17,  21,  26,  32};

inline int inverse_angle(int angle) {
  switch (angle) {
    case -2: return -4096;
    case -5: return -1638;
    case -9: return -910;
    case -13: return -630;
    case -17: return -482;
    case -21: return -390;
    case -26: return -315;
    case -32: return -256;
  }
  return 0;
}

inline void check_refs(const ReferenceSamples& r, std::size_t n) {
  if (n == 0 || r.n != n || r.top.size() != 2 * n + 1 || r.left.size() != 2 * n)
    throw ShapeError("reference samples do not match block size " + std::to_string(n));
}

/// Whether the [1 2 1] reference filter applies to `mode` at size n.
inline bool smoothing_applies(int mode, std::size_t n) {
  if (mode == kDc) return false;
  const int dist = std::min(std::abs(mode - kVertical), std::abs(mode - kHorizontal));
  switch (n) {
    case 8: return dist > 7;
    case 16: return dist > 1;
    case 32: return dist > 0;
    default: return false;
  }
}

inline ReferenceSamples smoothed(const ReferenceSamples& r) {
  const std::size_t n = r.n;
  std::vector<double> line;
  line.reserve(4 * n + 1);
  for (std::size_t j = 2 * n; j-- > 0;) line.push_back(r.left[j]);
  for (double v : r.top) line.push_back(v);
  std::vector<double> f = line;
  for (std::size_t k = 1; k + 1 < line.size(); ++k) f[k] = (line[k - 1] + 2.0 * line[k] + line[k + 1]) / 4.0;
  ReferenceSamples out = r;
  for (std::size_t j = 0; j < 2 * n; ++j) out.left[j] = f[2 * n - 1 - j];
  for (std::size_t i = 0; i <= 2 * n; ++i) out.top[i] = f[2 * n + i];
  return out;
}

}  // namespace detail

/// N x N prediction for one of the 35 modes.
inline Tensor predict_mode(const ReferenceSamples& refs, int mode, std::size_t n, const IntraConfig& cfg = {}) {
  if (mode < 0 || mode >= kNumModes) throw ModeError("invalid intra mode " + std::to_string(mode));
  detail::check_refs(refs, n);
  const ReferenceSamples r = cfg.smoothing && detail::smoothing_applies(mode, n) ? detail::smoothed(refs) : refs;
  Tensor pred(Shape{n, n});
  const int N = static_cast<int>(n);

  if (mode == kDc) {
    double s = 0;
    for (std::size_t i = 1; i <= 2 * n; ++i) s += r.top[i];
    for (std::size_t j = 0; j < 2 * n; ++j) s += r.left[j];
    pred.fill(static_cast<float>(s / (4.0 * n)));
    return pred;
  }
  if (mode == kPlanar) {
    const double top_right = r.top[n + 1], bottom_left = r.left[n];
    for (int y = 0; y < N; ++y)
      for (int x = 0; x < N; ++x)
        pred.at(y, x) = static_cast<float>(((N - 1 - x) * r.left[y] + (x + 1) * top_right + (N - 1 - y) * r.top[x + 1] +
                                            (y + 1) * bottom_left) /
                                           (2.0 * N));
    return pred;
  }

  const bool vertical = mode >= 18;
  const int angle = detail::kIntraAngle[mode];
  // main[k + N] holds reference index k, for k in [-N, 2N].
  std::vector<double> main(3 * n + 1, 0.0);
  auto at = [&](int k) -> double& { return main[static_cast<std::size_t>(k + N)]; };
  const std::vector<double>& side = vertical ? r.left : r.top;
  at(0) = r.top[0];
  for (int k = 1; k <= 2 * N; ++k) at(k) = vertical ? r.top[k] : r.left[k - 1];
  if (angle < 0) {
    const int last = (N * angle) >> 5;
    const int inv = detail::inverse_angle(angle);
    for (int k = last; k <= -1; ++k) {
      const int p = (k * inv + 128) >> 8;  // 1-based position along the side line
      at(k) = vertical ? side[static_cast<std::size_t>(p - 1)] : side[static_cast<std::size_t>(p)];
    }
  }
  for (int j = 0; j < N; ++j) {
    const int idx = ((j + 1) * angle) >> 5;
    const int fact = ((j + 1) * angle) & 31;
    for (int i = 0; i < N; ++i) {
      const double v = fact == 0 ? at(i + idx + 1) : ((32 - fact) * at(i + idx + 1) + fact * at(i + idx + 2)) / 32.0;
      if (vertical)
        pred.at(j, i) = static_cast<float>(v);
      else
        pred.at(i, j) = static_cast<float>(v);
    }
  }
  return pred;
}

/// RD cost of predicting `target` with `prediction`.
inline RdCost rd_cost(const Tensor& target, const Tensor& prediction, double bits, double lambda,
                      const IntraConfig& cfg = {}) {
  detail::require_same_shape(target, prediction, "rd_cost");
  Tensor d(target.shape());
  for (std::size_t i = 0; i < d.size(); ++i)
    d[i] = static_cast<float>(cfg.sample_scale * (static_cast<double>(target[i]) - prediction[i]));
  return {satd(d, cfg.satd), bits, lambda};
}

/// Exhaustive search over all 35 modes; the lowest index wins ties.
inline ModeCost best_mode_search(const ReferenceSamples& refs, const Tensor& target, std::size_t n, double lambda,
                                 const IntraConfig& cfg = {}) {
  if (!(target.shape() == Shape{n, n})) throw ShapeError("best_mode_search: target must be " + Shape{n, n}.str());
  ModeCost best{kPlanar, {std::numeric_limits<double>::infinity(), 0, lambda}};
  for (int m = 0; m < kNumModes; ++m) {
    const ModeCost c{m, rd_cost(target, predict_mode(refs, m, n, cfg), cfg.mode_bits, lambda, cfg)};
    if (c.total() < best.total()) best = c;
  }
  return best;
}

}  // namespace psrnn
