#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <cctype>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "psrnn/common.hpp"
#include "psrnn/tensor.hpp"

namespace psrnn {

/// Single-channel luma image, values in [0, 1], row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, float fill = 0.0f) : width(w), height(h), pixels(w * h, fill) {
    if (w == 0 || h == 0) throw ShapeError("image extents must be positive");
  }

  float& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  float at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

  /// Copy of the w x h window at (x0, y0) as a (h, w) tensor.
  Tensor window(std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) const {
    if (x0 + w > width || y0 + h > height) throw BoundsError("window outside image");
    Tensor t(Shape{h, w});
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(pixels.data() + (y0 + y) * width + x0, w, t.data() + y * w);
    return t;
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

namespace detail {

class PnmParser {
 public:
  explicit PnmParser(const std::vector<std::uint8_t>& b) : b_(b) {}

  std::size_t header_int() {
    skip_space_and_comments();
    std::size_t v = 0;
    bool any = false;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_++] - '0');
      any = true;
    }
    if (!any) throw FormatError("malformed PNM header");
    return v;
  }

  std::size_t ascii_int() {
    skip_space_and_comments();
    if (pos_ >= b_.size()) throw FormatError("PNM payload truncated");
    return header_int();
  }

  /// Consumes the single whitespace byte that ends a binary header.
  void end_header() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) throw FormatError("malformed PNM header");
    ++pos_;
  }

  std::size_t binary_sample(bool wide) {
    const std::size_t need = wide ? 2 : 1;
    if (pos_ + need > b_.size()) throw FormatError("PNM payload truncated");
    std::size_t v = b_[pos_++];
    if (wide) v = (v << 8) | b_[pos_++];
    return v;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(b_[pos_]))
        ++pos_;
      else if (b_[pos_] == '#')
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      else
        break;
    }
  }

  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 2;
};

inline std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open image '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline GrayImage decode_pnm(const std::vector<std::uint8_t>& bytes) {
  const char kind = static_cast<char>(bytes[1]);
  PnmParser p(bytes);
  const std::size_t w = p.header_int(), h = p.header_int(), maxval = p.header_int();
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw FormatError("invalid PNM dimensions or maxval");
  const bool binary = kind == '5' || kind == '6';
  const bool color = kind == '3' || kind == '6';
  if (binary) p.end_header();
  const bool wide = maxval > 255;
  auto sample = [&] { return binary ? p.binary_sample(wide) : p.ascii_int(); };
  GrayImage img(w, h);
  const double inv = 1.0 / static_cast<double>(maxval);
  for (auto& px : img.pixels) {
    double v;
    if (color) {
      const double r = static_cast<double>(sample()), g = static_cast<double>(sample()),
                   b = static_cast<double>(sample());
      v = 0.299 * r + 0.587 * g + 0.114 * b;
    } else {
      v = static_cast<double>(sample());
    }
    px = static_cast<float>(std::clamp(v * inv, 0.0, 1.0));
  }
  return img;
}

}  // namespace detail

/// Reads a PGM (P2/P5) or PPM (P3/P6, converted with BT.601 luma weights), or
/// a raw 8-bit luma plane whose "width height" is given in a sidecar file
/// `<path>.dims`.
inline GrayImage load_image(const std::filesystem::path& path) {
  const auto bytes = detail::slurp(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && std::string("2356").find(static_cast<char>(bytes[1])) != std::string::npos)
    return detail::decode_pnm(bytes);
  auto dims_path = path;
  dims_path += ".dims";
  if (std::filesystem::exists(dims_path)) {
    const auto dims = detail::slurp(dims_path);
    const auto parts = split(trim(std::string(dims.begin(), dims.end())), ' ');
    if (parts.size() != 2) throw FormatError("sidecar '" + dims_path.string() + "' must hold 'width height'");
    const std::size_t w = parse_size("width", parts[0]), h = parse_size("height", parts[1]);
    if (w == 0 || h == 0) throw FormatError("sidecar dimensions must be positive");
    if (bytes.size() != w * h) throw FormatError("raw plane size does not match " + trim(std::string(dims.begin(), dims.end())));
    GrayImage img(w, h);
    for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = static_cast<float>(bytes[i] / 255.0);
    return img;
  }
  throw FormatError("unsupported image format: '" + path.string() + "'");
}

inline std::uint8_t to_u8(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0));
}

/// Writes a binary (P5) PGM with maxval 255.
inline void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path.string() + "' for writing");
  f << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<char> row(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), row.begin(), [](float v) { return static_cast<char>(to_u8(v)); });
  f.write(row.data(), static_cast<std::streamsize>(row.size()));
  if (!f) throw FormatError("write to '" + path.string() + "' failed");
}

inline GrayImage from_tensor(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("from_tensor: expected a rank-2 tensor");
  GrayImage img(t.dim(1), t.dim(0));
  std::copy(t.values().begin(), t.values().end(), img.pixels.begin());
  return img;
}

inline GrayImage crop(const GrayImage& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  return from_tensor(img.window(x0, y0, w, h));
}

namespace detail {

/// Weights of each source sample inside each output cell when an axis of
/// length `in` is resampled to `out` by area averaging.
inline std::vector<std::vector<std::pair<std::size_t, double>>> area_weights(std::size_t in, std::size_t out) {
  std::vector<std::vector<std::pair<std::size_t, double>>> w(out);
  const double s = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double a = o * s, b = (o + 1) * s;
    for (auto i = static_cast<std::size_t>(std::floor(a)); i < in && static_cast<double>(i) < b; ++i) {
      const double overlap = std::min(b, i + 1.0) - std::max(a, static_cast<double>(i));
      if (overlap > 0) w[o].emplace_back(i, overlap / s);
    }
  }
  return w;
}

}  // namespace detail

/// Area-averaging (box filter) resample.
inline GrayImage resample_area(const GrayImage& img, std::size_t w, std::size_t h) {
  if (w == 0 || h == 0) throw SizeError("resample target must be non-empty");
  if (w == img.width && h == img.height) return img;
  const auto wx = detail::area_weights(img.width, w), wy = detail::area_weights(img.height, h);
  std::vector<double> tmp(img.height * w);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0;
      for (auto [i, a] : wx[x]) s += a * img.at(i, y);
      tmp[y * w + x] = s;
    }
  GrayImage out(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0;
      for (auto [j, a] : wy[y]) s += a * tmp[j * w + x];
      out.at(x, y) = static_cast<float>(std::clamp(s, 0.0, 1.0));
    }
  return out;
}

/// Largest-area 7:4 centre crop followed by area downsampling to three scales.
/// Inputs holding a 1792x1024 crop give 1792x1024, 1344x768 and 896x512;
/// smaller inputs give the 1 : 0.75 : 0.5 triplet of their own largest crop
/// (unit rounded down to a multiple of 4).
inline std::array<GrayImage, 3> multi_scale(const GrayImage& img) {
  std::size_t unit = std::min(img.width / 7, img.height / 4);
  const std::size_t full = std::min<std::size_t>(unit, 256);
  const std::size_t k = full - full % 4;
  if (k < 8)
    throw SizeError("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                    " is too small for multi-scale preparation (needs at least 56x32)");
  const std::size_t cw = 7 * unit, ch = 4 * unit;
  const GrayImage c = crop(img, (img.width - cw) / 2, (img.height - ch) / 2, cw, ch);
  return {resample_area(c, 7 * k, 4 * k), resample_area(c, 7 * (3 * k / 4), 4 * (3 * k / 4)),
          resample_area(c, 7 * (k / 2), 4 * (k / 2))};
}

inline double psnr(const GrayImage& a, const GrayImage& b) {
  if (a.width != b.width || a.height != b.height) throw ShapeError("psnr: image sizes differ");
  double se = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = (static_cast<double>(a.pixels[i]) - b.pixels[i]) * 255.0;
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.pixels.size());
  return mse == 0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace psrnn
