#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "psrnn/sampling.hpp"

using namespace psrnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "psrnn_data";
  fs::create_directories(dir);
  return dir / name;
}

fs::path write_file(const std::string& name, const std::string& bytes) {
  const auto p = scratch(name);
  std::ofstream(p, std::ios::binary) << bytes;
  return p;
}

GrayImage noise_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  GrayImage img(w, h);
  for (auto& v : img.pixels) v = static_cast<float>(rng.below(256)) / 255.0f;
  return img;
}

}  // namespace

// ---- image I/O ----

TEST(LoadImage, AsciiPgmNormalisesBy255) {
  const auto img = load_image(write_file("a.pgm", "P2\n# comment\n2 2\n255\n0 255\n128 64\n"));
  ASSERT_EQ(img.width, 2u);
  ASSERT_EQ(img.height, 2u);
  EXPECT_FLOAT_EQ(img.at(0, 0), 0.0f);
  EXPECT_FLOAT_EQ(img.at(1, 0), 1.0f);
  EXPECT_NEAR(img.at(0, 1), 0.50196, 1e-5);
  EXPECT_NEAR(img.at(1, 1), 0.25098, 1e-5);
}

TEST(LoadImage, BinaryAndAsciiDecodeIdentically) {
  const auto a = load_image(write_file("b2.pgm", "P2\n2 2\n255\n0 255\n128 64\n"));
  const auto b = load_image(write_file("b5.pgm", std::string("P5\n2 2\n255\n") + '\0' + '\xff' + '\x80' + '\x40'));
  EXPECT_EQ(a, b);
}

TEST(LoadImage, SixteenBitAndColour) {
  const auto wide = load_image(write_file("w.pgm", std::string("P5 1 1 65535\n") + '\x80' + '\x00'));
  EXPECT_NEAR(wide.at(0, 0), 32768.0 / 65535.0, 1e-6);
  const auto col = load_image(write_file("c.ppm", "P3\n1 1\n255\n255 0 0\n"));
  EXPECT_NEAR(col.at(0, 0), 0.299, 1e-6);
  const auto col6 = load_image(write_file("c6.ppm", std::string("P6\n1 1\n255\n") + '\0' + '\xff' + '\0'));
  EXPECT_NEAR(col6.at(0, 0), 0.587, 1e-6);
}

TEST(LoadImage, RawPlaneWithSidecar) {
  const auto p = write_file("plane.y", std::string("\x00\x10\x20\xff\x80\x40", 6));
  write_file("plane.y.dims", "3 2\n");
  const auto img = load_image(p);
  EXPECT_EQ(img.width, 3u);
  EXPECT_EQ(img.height, 2u);
  EXPECT_FLOAT_EQ(img.at(0, 1), 1.0f);
  write_file("plane.y.dims", "4 2\n");
  EXPECT_THROW(load_image(p), FormatError);
}

TEST(LoadImage, Errors) {
  EXPECT_THROW(load_image(write_file("t.pgm", std::string("P5\n4 4\n255\n") + "abc")), FormatError);
  EXPECT_THROW(load_image(write_file("t2.pgm", "P2\n2 2\n255\n1 2 3\n")), FormatError);
  EXPECT_THROW(load_image(write_file("bad.pgm", "P5\nx y\n255\n")), FormatError);
  EXPECT_THROW(load_image(write_file("z.pgm", "P2\n0 2\n255\n")), FormatError);
  EXPECT_THROW(load_image(write_file("x.png", "\x89PNG....")), FormatError);
  EXPECT_THROW(load_image(scratch("missing.pgm")), FormatError);
}

TEST(SavePgm, RoundTripsEightBitImages) {
  const auto img = noise_image(13, 7, 1);
  save_pgm(img, scratch("rt.pgm"));
  EXPECT_EQ(load_image(scratch("rt.pgm")), img);
}

// ---- scales ----

TEST(MultiScale, ReferenceSizes) {
  const auto s = multi_scale(GrayImage(1792, 1024, 0.25f));
  EXPECT_EQ(s[0].width, 1792u);
  EXPECT_EQ(s[0].height, 1024u);
  EXPECT_EQ(s[1].width, 1344u);
  EXPECT_EQ(s[1].height, 768u);
  EXPECT_EQ(s[2].width, 896u);
  EXPECT_EQ(s[2].height, 512u);
  for (const auto& im : s)
    for (float v : im.pixels) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(MultiScale, SmallerInputsKeepProportions) {
  const auto s = multi_scale(GrayImage(300, 200, 0.5f));
  // Largest 7:4 crop is 294x168 (unit 42); unit rounds to 40.
  EXPECT_EQ(s[0].width, 280u);
  EXPECT_EQ(s[0].height, 160u);
  EXPECT_EQ(s[1].width, 210u);
  EXPECT_EQ(s[2].width, 140u);
  EXPECT_EQ(s[2].height, 80u);
  EXPECT_THROW(multi_scale(GrayImage(40, 40)), SizeError);
}

TEST(Resample, CheckerboardHalvesToGrey) {
  GrayImage c(16, 16);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) c.at(x, y) = static_cast<float>((x + y) % 2);
  const auto h = resample_area(c, 8, 8);
  for (float v : h.pixels) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(Resample, PreservesTheMean) {
  const auto img = noise_image(40, 24, 2);
  const auto small = resample_area(img, 30, 18);
  double a = 0, b = 0;
  for (float v : img.pixels) a += v;
  for (float v : small.pixels) b += v;
  EXPECT_NEAR(a / img.pixels.size(), b / small.pixels.size(), 1e-5);
}

// ---- degradation ----

TEST(Degrade, QstepRelation) {
  EXPECT_DOUBLE_EQ(qstep_for_qp(22), 8.0);
  EXPECT_DOUBLE_EQ(qstep_for_qp(4), 1.0);
  EXPECT_DOUBLE_EQ(qstep_for_qp(28), 16.0);
}

TEST(Degrade, LowQpIsNearLossless) {
  const auto img = noise_image(64, 48, 3);
  EXPECT_GT(psnr(img, degrade(img, {4, 8})), 50.0);
}

TEST(Degrade, PsnrFallsWithQp) {
  const auto img = synth_texture(TextureSpec{TextureKind::Rings, 0, 0.1, 0, 20, 20, 9.0}, 64, 64, 1);
  double prev = 1e9;
  for (int qp : {22, 27, 32, 37}) {
    const double p = psnr(img, degrade(img, {qp, 8}));
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Degrade, ConstantImageWithinOneStep) {
  for (int qp : {22, 32, 37}) {
    const GrayImage img(24, 24, 0.4f);
    const auto d = degrade(img, {qp, 8});
    for (float v : d.pixels) EXPECT_LE(std::abs(v - 0.4f) * 255.0, qstep_for_qp(qp) / 8.0 + 0.5);
  }
}

TEST(Degrade, HandlesSizesThatAreNotBlockMultiples) {
  const auto img = noise_image(21, 13, 4);
  const auto d = degrade(img, {27, 8});
  EXPECT_EQ(d.width, 21u);
  EXPECT_EQ(d.height, 13u);
  for (float v : d.pixels) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

// Requantizing a reconstruction moves each coefficient by at most one step.
TEST(Degrade, IdempotentUpToOneStep) {
  const auto img = noise_image(32, 32, 5);
  for (int qp : {22, 32}) {
    const auto once = degrade(img, {qp, 8});
    const auto twice = degrade(once, {qp, 8});
    const double q = qstep_for_qp(qp);
    for (std::size_t y = 0; y < 32; y += 8)
      for (std::size_t x = 0; x < 32; x += 8) {
        const auto a = block_dct(once, x, y, 8), b = block_dct(twice, x, y, 8);
        for (std::size_t k = 0; k < 64; ++k) EXPECT_LE(std::abs(a[k] - b[k]), q + 1e-6);
      }
  }
}

// ---- synthetic textures ----

TEST(Synth, FlatIsConstant) {
  TextureSpec t;
  t.value = 0.3;
  const auto img = synth_texture(t, 16, 8, 0);
  for (float v : img.pixels) EXPECT_FLOAT_EQ(v, 0.3f);
}

TEST(Synth, DirectionalZeroDegreesHasConstantRows) {
  TextureSpec t;
  t.kind = TextureKind::Directional;
  const auto img = synth_texture(t, 16, 16, 0);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 1; x < 16; ++x) EXPECT_EQ(img.at(x, y), img.at(0, y));
  for (std::size_t y = 1; y < 16; ++y) EXPECT_GT(img.at(0, y), img.at(0, y - 1));
}

TEST(Synth, RingsArePeriodic) {
  TextureSpec t;
  t.kind = TextureKind::Rings;
  t.period = 8.0;
  const auto img = synth_texture(t, 32, 32, 0);
  EXPECT_NEAR(img.at(8, 0), img.at(16, 0), 1e-6);
  EXPECT_NEAR(img.at(0, 8), img.at(0, 0), 1e-6);
}

TEST(Synth, InvalidParameters) {
  TextureSpec t;
  EXPECT_THROW(synth_texture(t, 4, 16, 0), UsageError);
  t.kind = TextureKind::Sinusoid;
  t.frequency = 0;
  EXPECT_THROW(synth_texture(t, 16, 16, 0), UsageError);
  t = TextureSpec{};
  t.value = 1.5;
  EXPECT_THROW(synth_texture(t, 16, 16, 0), UsageError);
  EXPECT_THROW(parse_texture("plaid"), ConfigError);
  EXPECT_EQ(parse_texture("rings"), TextureKind::Rings);
}

TEST(Synth, NoiseIsSeeded) {
  TextureSpec t;
  t.noise_sigma = 0.05;
  EXPECT_EQ(synth_texture(t, 16, 16, 3), synth_texture(t, 16, 16, 3));
  EXPECT_NE(synth_texture(t, 16, 16, 3), synth_texture(t, 16, 16, 4));
}

// ---- context sampling ----

TEST(Sampling, ZeroCountIsEmpty) {
  const GrayImage img(32, 32);
  EXPECT_TRUE(sample_contexts(img, img, 8, 0, 1.0, 1).empty());
}

TEST(Sampling, SameSeedSameSamples) {
  const auto c = noise_image(64, 64, 6), d = degrade(c, {32, 8});
  const auto a = sample_contexts(c, d, 8, 50, 0.5, 9), b = sample_contexts(c, d, 8, 50, 0.5, 9);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].context, b[i].context);
    EXPECT_EQ(a[i].target, b[i].target);
    EXPECT_EQ(a[i].mode, b[i].mode);
  }
}

// Over 1000 samples: the masked quadrants hold the fill value exactly, the
// visible ones are the degraded image, and the target is the clean block at
// the bottom-right of the window.
TEST(Sampling, MaskingAndAlignmentAudit) {
  const auto c = noise_image(80, 72, 7), d = degrade(c, {37, 8});
  const std::size_t n = 8;
  const auto s = sample_contexts(c, d, n, 1000, 0.25, 11);
  std::size_t four = 0;
  for (const auto& b : s) {
    ASSERT_EQ(b.context.shape(), (Shape{2 * n, 2 * n}));
    ASSERT_EQ(b.target.shape(), (Shape{n, n}));
    four += b.mode == AvailabilityMode::FourBlock;
    for (std::size_t y = 0; y < 2 * n; ++y)
      for (std::size_t x = 0; x < 2 * n; ++x) {
        const bool masked = y >= n && (x >= n || b.mode == AvailabilityMode::ThreeBlock);
        const float v = b.context.at(y, x);
        if (masked) {
          ASSERT_EQ(v, kDefaultFill);
        } else {
          ASSERT_EQ(v, d.at(b.x + x, b.y + y));
        }
      }
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) ASSERT_EQ(b.target.at(y, x), c.at(b.x + n + x, b.y + n + y));
  }
  EXPECT_NEAR(static_cast<double>(four) / 1000.0, 0.25, 0.05);
}

TEST(Sampling, DisjointSeedsGiveDistinctOrigins) {
  const auto c = noise_image(512, 512, 8);
  const auto a = sample_contexts(c, c, 8, 500, 1.0, 1), b = sample_contexts(c, c, 8, 500, 1.0, 2);
  std::set<std::pair<std::size_t, std::size_t>> oa;
  for (const auto& s : a) oa.emplace(s.x, s.y);
  std::size_t overlap = 0;
  for (const auto& s : b) overlap += oa.count({s.x, s.y});
  EXPECT_LE(overlap, 25u);
}

TEST(Sampling, ErrorsAndRange) {
  const GrayImage small(12, 12);
  EXPECT_THROW(sample_contexts(small, small, 8, 1, 1.0, 1), SizeError);
  EXPECT_THROW(sample_contexts(small, GrayImage(12, 13), 4, 1, 1.0, 1), ShapeError);
  EXPECT_THROW(sample_contexts(small, small, 4, 1, 1.5, 1), ConfigError);
  SyntheticCorpusConfig cfg;
  cfg.samples = 300;
  cfg.images = 6;
  cfg.image_size = 48;
  for (const auto& b : synthetic_corpus(cfg, 8, 3)) {
    for (float v : b.context.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    for (float v : b.target.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  }
}

TEST(Corpus, DeterministicAndSized) {
  SyntheticCorpusConfig cfg;
  cfg.samples = 257;
  cfg.images = 5;
  cfg.image_size = 40;
  const auto a = synthetic_corpus(cfg, 8, 42), b = synthetic_corpus(cfg, 8, 42), c = synthetic_corpus(cfg, 8, 43);
  ASSERT_EQ(a.size(), 257u);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].context, b[i].context);
    differs = differs || !(a[i].context == c[i].context);
  }
  EXPECT_TRUE(differs);
}

TEST(Corpus, ImagesMixQps) {
  const auto imgs = synthetic_images(40, 32, {22, 27, 32, 37}, 0.0, 5);
  std::set<int> seen;
  for (const auto& p : imgs) seen.insert(p.qp);
  EXPECT_EQ(seen.size(), 4u);
}
