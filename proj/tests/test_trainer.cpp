#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "psrnn/experiments.hpp"

using namespace psrnn;
namespace fs = std::filesystem;

namespace {

NetworkConfig tiny(std::size_t n = 4) {
  NetworkConfig c;
  c.pu_size = n;
  c.preproc_channels = 4;
  c.unit_cells = {2};
  c.downsample_channels = 4;
  c.recon_channels = 4;
  return c;
}

PsRnnNetwork<float> tiny_net(std::uint64_t seed, std::size_t n = 4) {
  Rng rng(seed);
  return PsRnnNetwork<float>::initialized(tiny(n), rng);
}

std::vector<ContextBlock> texture_data(std::size_t n, std::size_t count, std::uint64_t seed) {
  SyntheticCorpusConfig cfg;
  cfg.samples = count;
  cfg.images = 8;
  cfg.image_size = 48;
  return synthetic_corpus(cfg, n, seed);
}

std::vector<ContextBlock> constant_data(float v, std::size_t n, std::size_t count) {
  const GrayImage img(40, 40, v);
  return sample_contexts(img, img, n, count, 1.0, 3);
}

TrainConfig quick(std::size_t iters) {
  TrainConfig c;
  c.total_iters = iters;
  c.batch_size = 8;
  c.max_validation = 64;
  return c;
}

bool same_weights(const PsRnnNetwork<float>& a, const PsRnnNetwork<float>& b) {
  const auto pa = a.named_parameters(), pb = b.named_parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!(*pa[i].second == *pb[i].second)) return false;
  return true;
}

}  // namespace

// ---- loss_and_grad ----

TEST(LossAndGrad, PerfectPredictionIsZero) {
  Rng rng(1);
  Tensor p(Shape{8, 8});
  oracle::fill_uniform(p, rng, 0, 1);
  for (auto k : {LossKind::Satd, LossKind::Mse}) {
    const auto [l, g] = loss_and_grad(p, p, k);
    EXPECT_NEAR(l, 0.0, 1e-6);
    for (float v : g.values()) EXPECT_EQ(v, 0.0f);
  }
}

TEST(LossAndGrad, MseOfHalfAgainstZero) {
  const auto [l, g] = loss_and_grad(Tensor(Shape{4, 4}, 0.5f), Tensor(Shape{4, 4}, 0.0f), LossKind::Mse);
  EXPECT_DOUBLE_EQ(l, 0.25);
  for (float v : g.values()) EXPECT_FLOAT_EQ(v, 2.0f * 0.5f / 16.0f);
}

TEST(LossAndGrad, SatdDelegatesToHadamardGradient) {
  Rng rng(2);
  BasicTensor<double> p(Shape{8, 8}), t(Shape{8, 8});
  oracle::fill_uniform(p, rng, 0, 1);
  oracle::fill_uniform(t, rng, 0, 1);
  const auto [l, g] = loss_and_grad(p, t, LossKind::Satd);
  const auto d = sub(p, t);
  EXPECT_EQ(l, satd(d));
  EXPECT_EQ(g, satd_loss_grad(d));
}

TEST(LossAndGrad, ShapeMismatch) {
  EXPECT_THROW(loss_and_grad(Tensor(Shape{4, 4}), Tensor(Shape{4, 8}), LossKind::Mse), ShapeError);
}

TEST(LossAndGrad, MseMatchesFiniteDifferences) {
  Rng rng(3);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = std::size_t{4} << rng.below(3);
    BasicTensor<double> p(Shape{n, n}), t(Shape{n, n});
    oracle::fill_uniform(p, rng, 0, 1);
    oracle::fill_uniform(t, rng, 0, 1);
    const auto [l, g] = loss_and_grad(p, t, LossKind::Mse);
    const std::size_t k = rng.below(n * n);
    const double fd = oracle::central_difference(&p[k], 1e-5, [&] { return loss_and_grad(p, t, LossKind::Mse).first; });
    worst = std::max(worst, oracle::rel_err(g[k], fd));
  }
  EXPECT_LT(worst, 1e-4);
}

// The SATD difference is taken in long double over the single affected tile;
// a double-precision sum over the whole block would bury near-zero gradients
// in rounding noise.
TEST(LossAndGrad, SatdMatchesFiniteDifferences) {
  Rng rng(4);
  const SatdConfig cfg;
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = std::size_t{4} << rng.below(3);
    BasicTensor<double> p(Shape{n, n}), t(Shape{n, n});
    oracle::fill_uniform(p, rng, 0, 1);
    oracle::fill_uniform(t, rng, 0, 1);
    const auto [l, g] = loss_and_grad(p, t, LossKind::Satd, cfg);
    const std::size_t k = rng.below(n * n);
    const double fd =
        oracle::smoothed_satd_fd(oracle::to_mat(sub(p, t)), k / n, k % n, cfg.partition, cfg.epsilon, 1e-6);
    worst = std::max(worst, oracle::rel_err(g[k], fd));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(LossAndGrad, BatchGradientIsTheMeanOfPerSampleGradients) {
  Rng rng(5);
  Tensor p(Shape{3, 4, 4, 1}), t(Shape{3, 4, 4, 1});
  oracle::fill_uniform(p, rng, 0, 1);
  oracle::fill_uniform(t, rng, 0, 1);
  const auto [losses, g] = batch_loss_and_grad(p, t, LossKind::Satd);
  ASSERT_EQ(losses.size(), 3u);
  for (std::size_t b = 0; b < 3; ++b) {
    const Tensor pb(Shape{4, 4}, std::vector<float>(p.data() + b * 16, p.data() + (b + 1) * 16));
    const Tensor tb(Shape{4, 4}, std::vector<float>(t.data() + b * 16, t.data() + (b + 1) * 16));
    const auto [l, gb] = loss_and_grad(pb, tb, LossKind::Satd);
    EXPECT_DOUBLE_EQ(losses[b], l);
    for (std::size_t k = 0; k < 16; ++k) EXPECT_NEAR(g[b * 16 + k], gb[k] / 3.0, 1e-7);
  }
}

// ---- split ----

TEST(SplitSamples, DisjointCompleteAndCapped) {
  const auto s = split_samples(1000, 0.1, 64, 7);
  EXPECT_EQ(s.validation.size(), 64u);
  EXPECT_EQ(s.train.size(), 936u);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  for (auto v : s.validation) EXPECT_TRUE(all.insert(v).second);
  EXPECT_EQ(all.size(), 1000u);
  EXPECT_EQ(split_samples(1000, 0.1, 64, 7).validation, s.validation);
  EXPECT_EQ(split_samples(30, 0.1, 512, 1).validation.size(), 3u);
  EXPECT_EQ(split_samples(2, 0.01, 512, 1).validation.size(), 1u);
}

// ---- train ----

TEST(Train, ZeroIterationsReturnsTheInitialNet) {
  const auto net = tiny_net(1);
  const auto r = train(net, texture_data(4, 40, 1), quick(0));
  EXPECT_TRUE(same_weights(r.model, net));
  EXPECT_TRUE(r.log.empty());
}

TEST(Train, InputErrors) {
  const auto net = tiny_net(1);
  EXPECT_THROW(train(net, {}, quick(5)), UsageError);
  EXPECT_THROW(train(net, texture_data(8, 20, 1), quick(5)), ConfigError);
  auto bad = quick(5);
  bad.batch_size = 0;
  EXPECT_THROW(train(net, texture_data(4, 20, 1), bad), ConfigError);
  bad = quick(5);
  bad.selection_window = 0;
  EXPECT_THROW(train(net, texture_data(4, 20, 1), bad), ConfigError);
}

TEST(Train, NonFiniteLossRaisesDivergenceWithIteration) {
  auto data = texture_data(4, 40, 2);
  for (auto& s : data) s.target[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    train(tiny_net(2), data, quick(10));
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.iteration(), 0u);
  }
}

TEST(Train, IdenticalSeedsGiveIdenticalRuns) {
  const auto data = texture_data(4, 200, 3);
  const auto net = tiny_net(3);
  const auto a = train(net, data, quick(40)), b = train(net, data, quick(40));
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
    EXPECT_EQ(a.log[i].val_loss, b.log[i].val_loss);
  }
  EXPECT_TRUE(same_weights(a.model, b.model));
  auto other = quick(40);
  other.seed = 2;
  EXPECT_NE(train(net, data, other).log.back().train_loss, a.log.back().train_loss);
}

TEST(Train, LogCadenceAndSchedule) {
  auto cfg = quick(50);
  cfg.checkpoint_every = 7;
  const auto r = train(tiny_net(4), texture_data(4, 100, 4), cfg);
  std::vector<std::size_t> its;
  for (const auto& row : r.log) its.push_back(row.iteration);
  EXPECT_EQ(its, (std::vector<std::size_t>{7, 14, 21, 28, 35, 42, 49, 50}));
  const auto sched = cfg.schedule();
  for (const auto& row : r.log) EXPECT_DOUBLE_EQ(row.lr, lr_at(sched, row.iteration - 1));
  EXPECT_EQ(quick(5000).cadence(), 50u);
}

TEST(Train, BestCheckpointLiesInTheSelectionWindow) {
  auto cfg = quick(60);
  cfg.checkpoint_every = 5;
  cfg.selection_window = 0.25;
  const auto r = train(tiny_net(5), texture_data(4, 150, 5), cfg);
  EXPECT_GE(r.best_iteration, 45u);
  double min_in_window = 1e300;
  for (const auto& row : r.log)
    if (row.iteration >= 45) min_in_window = std::min(min_in_window, row.val_loss);
  EXPECT_EQ(r.best_val_loss, min_in_window);
  EXPECT_LE(r.best_val_loss, r.log.back().val_loss);
}

// Validation loss of the returned model equals the logged best.
TEST(Train, ReturnedModelMatchesTheLoggedBest) {
  const auto data = texture_data(4, 150, 6);
  auto cfg = quick(30);
  cfg.checkpoint_every = 3;
  const auto r = train(tiny_net(6), data, cfg);
  const auto split = split_samples(data.size(), cfg.validation_fraction, cfg.max_validation,
                                   SeedSplitter(cfg.seed).derive("split"));
  EXPECT_EQ(validate_model(r.model, data, split.validation, cfg.satd).satd, r.best_val_loss);
}

TEST(Train, LearnsAConstantImage) {
  const auto data = constant_data(0.3f, 4, 200);
  auto cfg = quick(500);
  cfg.checkpoint_every = 5;
  const auto r = train(tiny_net(7), data, cfg);
  // Validation SATD averaged over five consecutive windows of the log.
  std::vector<double> windows(5, 0.0);
  const std::size_t per = r.log.size() / 5;
  for (std::size_t w = 0; w < 5; ++w)
    for (std::size_t i = 0; i < per; ++i) windows[w] += r.log[w * per + i].val_satd / per;
  for (std::size_t w = 1; w < 5; ++w) EXPECT_LT(windows[w], windows[w - 1]) << "window " << w;
  const Tensor pred = r.model.forward(Tensor(Shape{1, 8, 8, 1}, 0.3f));
  for (float v : pred.values()) EXPECT_NEAR(v, 0.3f, 0.05f);
}

TEST(TrainLogs, CsvHeaders) {
  const auto r = train(tiny_net(8), texture_data(4, 40, 8), quick(4));
  const auto dir = fs::temp_directory_path() / "psrnn_trainer";
  write_train_log(r.log, dir / "log.csv");
  write_metrics_log(r.log, dir / "metrics.csv");
  std::ifstream a(dir / "log.csv"), b(dir / "metrics.csv");
  std::string line;
  std::getline(a, line);
  EXPECT_EQ(line, "iteration,lr,train_loss,val_loss");
  std::size_t rows = 0;
  while (std::getline(a, line)) ++rows;
  EXPECT_EQ(rows, r.log.size());
  std::getline(b, line);
  EXPECT_EQ(line, "iteration,val_satd,val_mse");
}

// ---- experiments ----

TEST(CompareLosses, NeedsThreeSeeds) {
  EXPECT_THROW(compare_losses(texture_data(4, 40, 1), tiny(), quick(2), {1, 2}), ConfigError);
}

TEST(CompareLosses, IdenticalArmsHaveZeroGap) {
  const auto c = compare_losses(texture_data(4, 60, 9), tiny(), quick(8), {1, 2, 3}, LossKind::Satd, LossKind::Satd);
  ASSERT_EQ(c.rows.size(), 3u);
  EXPECT_EQ(c.median_gap, 0.0);
  for (const auto& r : c.rows) EXPECT_EQ(r.first.satd, r.second.satd);
}

TEST(CompareLosses, RowsAreReproducible) {
  const auto data = texture_data(4, 60, 10);
  const auto a = compare_losses(data, tiny(), quick(8), {4, 5, 6});
  const auto b = compare_losses(data, tiny(), quick(8), {4, 5, 6});
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.rows[i].first.satd, b.rows[i].first.satd);
    EXPECT_EQ(a.rows[i].second.mse, b.rows[i].second.mse);
  }
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
}

TEST(AblateUnits, OneRowPerCountAndRejectsZero) {
  const auto data = texture_data(4, 60, 11);
  const auto rows = ablate_units(data, tiny(), quick(4), {1, 2, 3, 4});
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(rows[i].units, i + 1);
    if (i) EXPECT_GT(rows[i].parameters, rows[i - 1].parameters);
  }
  EXPECT_THROW(ablate_units(data, tiny(), quick(4), {0}), ConfigError);
}
