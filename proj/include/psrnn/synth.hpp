#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "psrnn/image.hpp"
#include "psrnn/rng.hpp"

namespace psrnn {

enum class TextureKind { Directional, Sinusoid, Rings, Flat };

inline const char* to_string(TextureKind k) {
  switch (k) {
    case TextureKind::Directional: return "directional";
    case TextureKind::Sinusoid: return "sinusoid";
    case TextureKind::Rings: return "rings";
    case TextureKind::Flat: return "flat";
  }
  return "?";
}

inline TextureKind parse_texture(std::string_view s) {
  if (s == "directional") return TextureKind::Directional;
  if (s == "sinusoid") return TextureKind::Sinusoid;
  if (s == "rings") return TextureKind::Rings;
  if (s == "flat") return TextureKind::Flat;
  throw ConfigError("unknown texture kind '" + std::string(s) + "'");
}

/// Parameters of an analytic test pattern. Angles are in degrees; `angle` 0
/// makes directional ramps and sinusoid stripes vary along y only.
struct TextureSpec {
  TextureKind kind = TextureKind::Flat;
  double angle = 0.0;
  double frequency = 0.1;  // cycles per pixel
  double phase = 0.0;      // radians
  double center_x = 0.0, center_y = 0.0;
  double period = 8.0;
  double value = 0.5;
  double noise_sigma = 0.0;

  void validate() const {
    if (!std::isfinite(angle) || !std::isfinite(phase)) throw UsageError("texture angle and phase must be finite");
    if (kind == TextureKind::Sinusoid && !(frequency > 0 && std::isfinite(frequency)))
      throw UsageError("sinusoid frequency must be positive");
    if (kind == TextureKind::Rings && !(period > 0 && std::isfinite(period)))
      throw UsageError("rings period must be positive");
    if (kind == TextureKind::Flat && !(value >= 0.0 && value <= 1.0)) throw UsageError("flat value must lie in [0,1]");
    if (!(noise_sigma >= 0.0)) throw UsageError("noise sigma must be non-negative");
  }
};

inline GrayImage synth_texture(const TextureSpec& spec, std::size_t width, std::size_t height, std::uint64_t seed) {
  if (width < 8 || height < 8) throw UsageError("synthetic textures need a size of at least 8");
  spec.validate();
  const double th = spec.angle * std::numbers::pi / 180.0;
  const double s = std::sin(th), c = std::cos(th);
  auto coord = [&](double x, double y) { return -x * s + y * c; };
  double lo = 0, hi = 0;
  if (spec.kind == TextureKind::Directional) {
    const double w = static_cast<double>(width - 1), h = static_cast<double>(height - 1);
    const double corners[] = {coord(0, 0), coord(w, 0), coord(0, h), coord(w, h)};
    lo = *std::min_element(std::begin(corners), std::end(corners));
    hi = *std::max_element(std::begin(corners), std::end(corners));
  }
  GrayImage img(width, height);
  Rng rng(seed);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = static_cast<double>(x), fy = static_cast<double>(y);
      double v = 0;
      switch (spec.kind) {
        case TextureKind::Directional: v = hi > lo ? (coord(fx, fy) - lo) / (hi - lo) : 0.5; break;
        case TextureKind::Sinusoid:
          v = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * spec.frequency * coord(fx, fy) + spec.phase);
          break;
        case TextureKind::Rings:
          v = 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * std::hypot(fx - spec.center_x, fy - spec.center_y) /
                                   spec.period);
          break;
        case TextureKind::Flat: v = spec.value; break;
      }
      if (spec.noise_sigma > 0) v += spec.noise_sigma * rng.normal();
      img.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  return img;
}

/// Random directional or sinusoid texture used for the synthetic corpus.
inline TextureSpec random_texture(Rng& rng, double noise_sigma = 0.0) {
  TextureSpec t;
  t.kind = rng.below(2) == 0 ? TextureKind::Directional : TextureKind::Sinusoid;
  t.angle = rng.uniform(0.0, 180.0);
  t.frequency = 1.0 / rng.uniform(6.0, 32.0);
  t.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  t.noise_sigma = noise_sigma;
  return t;
}

}  // namespace psrnn
