#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "psrnn/common.hpp"
#include "psrnn/degrade.hpp"
#include "psrnn/image.hpp"
#include "psrnn/rng.hpp"
#include "psrnn/synth.hpp"

namespace psrnn {

inline constexpr float kDefaultFill = 0.5f;

/// A 2N x 2N network input and its N x N ground truth. The window's top-left
/// corner is (x, y); the block to predict sits at (x + N, y + N).
struct ContextBlock {
  Tensor context;
  Tensor target;
  AvailabilityMode mode = AvailabilityMode::FourBlock;
  std::size_t x = 0, y = 0, n = 0;
};

/// Blanks the masked quadrants of a 2N x 2N window in place: always the
/// bottom-right, and in three-block mode the bottom-left as well.
inline void mask_context(Tensor& window, std::size_t n, AvailabilityMode mode, float fill = kDefaultFill) {
  if (window.rank() != 2 || window.dim(0) != 2 * n || window.dim(1) != 2 * n)
    throw ShapeError("mask_context: expected a " + std::to_string(2 * n) + "x" + std::to_string(2 * n) + " window");
  const std::size_t x_from = mode == AvailabilityMode::FourBlock ? n : 0;
  for (std::size_t y = n; y < 2 * n; ++y)
    for (std::size_t x = x_from; x < 2 * n; ++x) window.at(y, x) = fill;
}

inline ContextBlock make_context(const GrayImage& clean, const GrayImage& degraded, std::size_t x, std::size_t y,
                                 std::size_t n, AvailabilityMode mode, float fill = kDefaultFill) {
  ContextBlock b;
  b.context = degraded.window(x, y, 2 * n, 2 * n);
  mask_context(b.context, n, mode, fill);
  b.target = clean.window(x + n, y + n, n, n);
  b.mode = mode;
  b.x = x;
  b.y = y;
  b.n = n;
  return b;
}

/// `count` windows at uniformly random origins. `four_block_fraction` of them
/// (in expectation) use four-block availability, the rest three-block.
inline std::vector<ContextBlock> sample_contexts(const GrayImage& clean, const GrayImage& degraded, std::size_t n,
                                                 std::size_t count, double four_block_fraction, std::uint64_t seed,
                                                 float fill = kDefaultFill) {
  if (clean.width != degraded.width || clean.height != degraded.height)
    throw ShapeError("sample_contexts: clean and degraded images differ in size");
  if (!(four_block_fraction >= 0.0 && four_block_fraction <= 1.0))
    throw ConfigError("availability mix must lie in [0,1]");
  std::vector<ContextBlock> out;
  if (count == 0) return out;
  if (clean.width < 2 * n || clean.height < 2 * n)
    throw SizeError("image " + std::to_string(clean.width) + "x" + std::to_string(clean.height) + " too small for " +
                    std::to_string(2 * n) + "x" + std::to_string(2 * n) + " contexts");
  Rng rng(seed);
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t x = rng.below(clean.width - 2 * n + 1);
    const std::size_t y = rng.below(clean.height - 2 * n + 1);
    const auto mode = rng.uniform() < four_block_fraction ? AvailabilityMode::FourBlock : AvailabilityMode::ThreeBlock;
    out.push_back(make_context(clean, degraded, x, y, n, mode, fill));
  }
  return out;
}

/// Synthetic training material: random directional and sinusoid textures,
/// each degraded at a QP drawn uniformly from `qps`.
struct SyntheticCorpusConfig {
  std::size_t samples = 50000;
  std::size_t images = 200;
  std::size_t image_size = 96;
  std::vector<int> qps{22, 27, 32, 37};
  double noise_sigma = 0.0;
  double four_block_fraction = 1.0;
  float fill = kDefaultFill;
};

struct ImagePair {
  GrayImage clean, degraded;
  int qp = 0;
};

inline std::vector<ImagePair> synthetic_images(std::size_t count, std::size_t size, const std::vector<int>& qps,
                                               double noise_sigma, std::uint64_t seed) {
  if (qps.empty()) throw ConfigError("at least one qp is required");
  const SeedSplitter seeds(seed);
  Rng rng(seeds.derive("textures"));
  std::vector<ImagePair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto spec = random_texture(rng, noise_sigma);
    const int qp = qps[rng.below(qps.size())];
    auto clean = synth_texture(spec, size, size, seeds.derive("noise." + std::to_string(i)));
    auto degraded = degrade(clean, DegradeConfig{qp, 8});
    out.push_back({std::move(clean), std::move(degraded), qp});
  }
  return out;
}

/// Spreads `total` samples evenly over image pairs (earlier images take the
/// remainder), each image with its own derived seed.
inline std::vector<ContextBlock> sample_corpus(const std::vector<ImagePair>& images, std::size_t n, std::size_t total,
                                               double four_block_fraction, std::uint64_t seed,
                                               float fill = kDefaultFill) {
  if (images.empty()) throw UsageError("no images to sample from");
  const SeedSplitter seeds(seed);
  std::vector<ContextBlock> out;
  out.reserve(total);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::size_t k = total / images.size() + (i < total % images.size() ? 1 : 0);
    auto part = sample_contexts(images[i].clean, images[i].degraded, n, k, four_block_fraction,
                                seeds.derive("image." + std::to_string(i)), fill);
    for (auto& b : part) out.push_back(std::move(b));
  }
  return out;
}

inline std::vector<ContextBlock> synthetic_corpus(const SyntheticCorpusConfig& cfg, std::size_t n, std::uint64_t seed) {
  const SeedSplitter seeds(seed);
  const auto images = synthetic_images(cfg.images, cfg.image_size, cfg.qps, cfg.noise_sigma, seeds.derive("images"));
  return sample_corpus(images, n, cfg.samples, cfg.four_block_fraction, seeds.derive("windows"), cfg.fill);
}

}  // namespace psrnn
