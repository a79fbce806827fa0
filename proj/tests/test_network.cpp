#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "psrnn/loss.hpp"
#include "psrnn/psrnn_plus.hpp"

using namespace psrnn;

namespace {

using D = BasicTensor<double>;
using gradcheck::random_context;

NetworkConfig config_for(std::size_t n) {
  NetworkConfig c;
  c.pu_size = n;
  return c;
}

// Runs the shared kink-aware check and reports every mismatch.
template <class Model>
double network_fd_worst(Model& net, const D& ctx, Rng& rng, std::size_t per_layer) {
  const auto r = gradcheck::network(net, ctx, rng, per_layer);
  for (const auto& msg : r.problems) ADD_FAILURE() << msg;
  EXPECT_EQ(r.checked, per_layer * net.named_parameters().size());
  return r.worst;
}

}  // namespace

TEST(Network, OutputShapesForEverySize) {
  for (std::size_t n : {4u, 8u, 16u, 32u}) {
    Rng rng(n);
    const auto net = PsRnnNetwork<float>::initialized(config_for(n), rng);
    Tensor ctx(Shape{2, 2 * n, 2 * n, 1}, 0.5f);
    const Tensor y = net.forward(ctx);
    EXPECT_EQ(y.shape(), (Shape{2, n, n, 1}));
    for (float v : y.values()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
    EXPECT_EQ(net.predict(Tensor(Shape{2 * n, 2 * n})).shape(), (Shape{n, n}));
  }
}

TEST(Network, RejectsWrongContext) {
  Rng rng(1);
  const auto net = PsRnnNetwork<float>::initialized(config_for(8), rng);
  EXPECT_THROW(net.forward(Tensor(Shape{1, 8, 8, 1})), ShapeError);
  EXPECT_THROW(net.forward(Tensor(Shape{1, 16, 16, 2})), ShapeError);
  EXPECT_THROW(net.predict(Tensor(Shape{8, 8})), ShapeError);
  EXPECT_THROW(PsRnnNetwork<float>(config_for(12)), ConfigError);
}

TEST(Network, BackwardWithoutForwardThrows) {
  Rng rng(1);
  const auto net = PsRnnNetwork<float>::initialized(config_for(4), rng);
  const PsRnnNetwork<float>::Cache empty;
  EXPECT_THROW(net.backward(empty, Tensor(Shape{1, 4, 4, 1})), UsageError);
}

TEST(Network, ZeroUpstreamGivesZeroGradients) {
  Rng rng(2);
  const auto net = PsRnnNetwork<float>::initialized(config_for(4), rng);
  PsRnnNetwork<float>::Cache cache;
  net.forward(Tensor(Shape{2, 8, 8, 1}, 0.3f), &cache);
  auto g = net.backward(cache, Tensor(Shape{2, 4, 4, 1}));
  for (auto& [name, t] : g.named_parameters())
    for (float v : t->values()) EXPECT_EQ(v, 0.0f) << name;
}

TEST(Network, ParameterCountAtDefaultWidths) {
  Rng rng(3);
  const auto net = PsRnnNetwork<float>::initialized(config_for(8), rng);
  // Preproc 80 + 584; unit 0 (n=16, c=8 -> k=8) 2 GRUs of 3*(128*128) + 3*(128*128) + 128 plus
  // fusion 16->8 3x3; downsample 8->8 stride 2; units 1..2 (n=8, k=4) and recon 4->8->1.
  auto gru = [](std::size_t in, std::size_t hid) { return 3 * hid * in + 3 * hid * hid + hid; };
  auto conv = [](std::size_t k, std::size_t in, std::size_t out, bool act) {
    return k * k * in * out + out + (act ? out : 0);
  };
  const std::size_t expected = conv(3, 1, 8, true) + conv(3, 8, 8, true) + 2 * gru(16 * 8, 16 * 8) +
                               conv(3, 16, 8, true) + conv(3, 8, 8, true) + 2 * gru(8 * 8, 8 * 4) +
                               conv(3, 8, 4, true) + 2 * gru(8 * 4, 8 * 4) + conv(3, 8, 4, true) +
                               conv(3, 4, 8, true) + conv(3, 8, 1, false);
  EXPECT_EQ(net.parameter_count(), expected);
  EXPECT_EQ(expected, 231121u);
}

TEST(Network, GradientsMatchFiniteDifferencesN4) {
  Rng rng(31);
  auto net = PsRnnNetwork<double>::initialized(config_for(4), rng);
  EXPECT_LT(network_fd_worst(net, random_context(rng, 2, 8), rng, 20), 1e-3);
}

TEST(Network, GradientsMatchFiniteDifferencesN8) {
  Rng rng(32);
  auto net = PsRnnNetwork<double>::initialized(config_for(8), rng);
  EXPECT_LT(network_fd_worst(net, random_context(rng, 1, 16), rng, 20), 1e-3);
}

TEST(Network, ForwardIsDeterministic) {
  Rng a(7), b(7);
  const auto n1 = PsRnnNetwork<float>::initialized(config_for(8), a);
  const auto n2 = PsRnnNetwork<float>::initialized(config_for(8), b);
  Rng data(9);
  Tensor ctx(Shape{3, 16, 16, 1});
  oracle::fill_uniform(ctx, data, 0.0, 1.0);
  EXPECT_EQ(n1.forward(ctx), n2.forward(ctx));
  EXPECT_EQ(n1.forward(ctx), n1.forward(ctx));
}

TEST(Network, BatchEntriesAreIndependent) {
  Rng rng(10);
  const auto net = PsRnnNetwork<float>::initialized(config_for(4), rng);
  Tensor ctx(Shape{2, 8, 8, 1});
  oracle::fill_uniform(ctx, rng, 0.0, 1.0);
  const Tensor both = net.forward(ctx);
  for (std::size_t b = 0; b < 2; ++b) {
    Tensor one(Shape{8, 8});
    for (std::size_t i = 0; i < 64; ++i) one[i] = ctx[b * 64 + i];
    const Tensor p = net.predict(one);
    for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(p[i], both[b * 16 + i], 1e-6);
  }
}

// A constant target is learned to within 0.05 in 500 Adam steps.
TEST(Network, LearnsAConstantTarget) {
  Rng rng(11);
  auto net = PsRnnNetwork<float>::initialized(config_for(4), rng);
  AdamState<float> st(net.parameters());
  const Tensor target(Shape{8, 4, 4, 1}, 0.3f);
  for (int it = 0; it < 500; ++it) {
    Tensor ctx(Shape{8, 8, 8, 1});
    oracle::fill_uniform(ctx, rng, 0.0, 1.0);
    PsRnnNetwork<float>::Cache cache;
    const Tensor y = net.forward(ctx, &cache);
    const auto [loss, g] = loss_and_grad(y, target, LossKind::Mse);
    auto grads = net.backward(cache, g);
    std::vector<const Tensor*> gp;
    for (auto* t : grads.parameters()) gp.push_back(t);
    adam_step(net.parameters(), gp, st, 1e-3);
  }
  Tensor ctx(Shape{4, 8, 8, 1});
  oracle::fill_uniform(ctx, rng, 0.0, 1.0);
  const Tensor y = net.forward(ctx);
  for (float v : y.values()) EXPECT_NEAR(v, 0.3f, 0.05f);
}

// ---- PS-RNN+ ----

TEST(PsRnnPlus, ShapesAndOverhead) {
  Rng rng(12);
  const auto base = PsRnnNetwork<float>::initialized(config_for(8), rng);
  for (std::size_t n : {16u, 32u}) {
    const auto plus = build_psrnn_plus(base, n, rng);
    EXPECT_EQ(plus.predict(Tensor(Shape{2 * n, 2 * n}, 0.4f)).shape(), (Shape{n, n}));
    const Tensor y = plus.forward(Tensor(Shape{2, 2 * n, 2 * n, 1}, 0.4f));
    EXPECT_EQ(y.shape(), (Shape{2, n, n, 1}));
    EXPECT_GT(plus.overhead_ratio(), 0.0);
    EXPECT_LE(plus.overhead_ratio(), 0.10);
    EXPECT_NEAR(plus.overhead_ratio(), 0.066, 0.01);
    EXPECT_EQ(plus.parameter_count(), base.parameter_count() + plus.overhead_parameters());
    EXPECT_EQ(plus.overhead_parameters(),
              detail::plus_overhead(n, plus.config().pre_channels, plus.config().post_channels));
  }
}

TEST(PsRnnPlus, RejectsSmallTargetsAndWrongBase) {
  Rng rng(13);
  const auto base = PsRnnNetwork<float>::initialized(config_for(8), rng);
  EXPECT_THROW(build_psrnn_plus(base, 4, rng), ConfigError);
  EXPECT_THROW(build_psrnn_plus(base, 8, rng), ConfigError);
  EXPECT_THROW(build_psrnn_plus(base, 24, rng), ConfigError);
  const auto base4 = PsRnnNetwork<float>::initialized(config_for(4), rng);
  EXPECT_THROW(build_psrnn_plus(base4, 16, rng), ConfigError);
}

TEST(PsRnnPlus, FrozenBaseExposesOnlyAdapters) {
  Rng rng(14);
  const auto base = PsRnnNetwork<float>::initialized(config_for(8), rng);
  auto plus = build_psrnn_plus(base, 16, rng);
  std::size_t trainable = 0;
  for (auto& [name, t] : plus.named_parameters()) {
    EXPECT_NE(name.rfind("base.", 0), 0u) << name;
    trainable += t->size();
  }
  EXPECT_EQ(trainable, plus.overhead_parameters());
  plus.set_frozen(false);
  EXPECT_EQ(plus.parameters().size(), plus.all_parameters().size());
}

// Adapter gradients, with the base frozen as it is during PS-RNN+ training.
// The base's own backward pass is the one checked by the N=8 test above.
TEST(PsRnnPlus, AdapterGradientsMatchFiniteDifferences) {
  Rng rng(33);
  const auto base = PsRnnNetwork<double>::initialized(config_for(8), rng);
  for (std::size_t n : {16u, 32u}) {
    auto plus = build_psrnn_plus(base, n, rng);
    EXPECT_LT(network_fd_worst(plus, random_context(rng, 1, 2 * n), rng, 20), 1e-3);
  }
}
