#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "psrnn/conv.hpp"
#include "psrnn/gru.hpp"
#include "psrnn/optim.hpp"
#include "psrnn/prelu.hpp"
#include "psrnn/tensor.hpp"

namespace psrnn {

template <class T>
using NamedParams = std::vector<std::pair<std::string, BasicTensor<T>*>>;
template <class T>
using ConstNamedParams = std::vector<std::pair<std::string, const BasicTensor<T>*>>;

/// Convolution followed by an optional per-channel PReLU.
template <class T>
struct ConvLayer {
  ConvSpec spec;
  bool activation = true;
  BasicTensor<T> weights, bias, alpha;

  struct Cache {
    BasicTensor<T> input, pre;
  };

  ConvLayer() = default;
  ConvLayer(ConvSpec s, bool act)
      : spec(s), activation(act), weights(s.weight_shape()), bias(Shape{s.out_channels}),
        alpha(Shape{s.out_channels}, T(0.25)) {}

  void initialize(Rng& rng) {
    xavier_uniform(weights, spec.patch_size(), spec.kernel_h * spec.kernel_w * spec.out_channels, rng);
    bias.fill(T(0));
    alpha.fill(T(0.25));
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, Cache* cache) const {
    BasicTensor<T> pre = conv2d_forward(x, weights, bias, spec);
    BasicTensor<T> y = activation ? prelu_forward(pre, alpha) : pre;
    if (cache) *cache = {x, std::move(pre)};
    return y;
  }

  /// Writes parameter gradients into `grads` and returns the input gradient.
  BasicTensor<T> backward(const Cache& cache, const BasicTensor<T>& gy, ConvLayer& grads) const {
    BasicTensor<T> gpre = gy;
    if (activation) {
      auto pg = prelu_backward(cache.pre, alpha, gy);
      gpre = std::move(pg.input);
      grads.alpha = std::move(pg.alpha);
    }
    auto cg = conv2d_backward(cache.input, weights, spec, gpre);
    grads.weights = std::move(cg.weights);
    grads.bias = std::move(cg.bias);
    return std::move(cg.input);
  }

  template <class P, class Self>
  static void collect(Self& self, const std::string& prefix, std::vector<std::pair<std::string, P*>>& out) {
    out.emplace_back(prefix + ".weight", &self.weights);
    out.emplace_back(prefix + ".bias", &self.bias);
    if (self.activation) out.emplace_back(prefix + ".alpha", &self.alpha);
  }
};

/// Transposed convolution (the adjoint of `spec`, mapping spec.out_channels to
/// spec.in_channels) followed by an optional PReLU.
template <class T>
struct ConvTransposeLayer {
  ConvSpec spec;
  bool activation = true;
  BasicTensor<T> weights, bias, alpha;

  struct Cache {
    BasicTensor<T> input, pre;
  };

  ConvTransposeLayer() = default;
  ConvTransposeLayer(ConvSpec s, bool act)
      : spec(s), activation(act), weights(s.weight_shape()), bias(Shape{s.in_channels}),
        alpha(Shape{s.in_channels}, T(0.25)) {}

  void initialize(Rng& rng) {
    xavier_uniform(weights, spec.kernel_h * spec.kernel_w * spec.out_channels, spec.patch_size(), rng);
    bias.fill(T(0));
    alpha.fill(T(0.25));
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, Cache* cache) const {
    BasicTensor<T> pre = conv_transpose2d_forward(x, weights, bias, spec);
    BasicTensor<T> y = activation ? prelu_forward(pre, alpha) : pre;
    if (cache) *cache = {x, std::move(pre)};
    return y;
  }

  BasicTensor<T> backward(const Cache& cache, const BasicTensor<T>& gy, ConvTransposeLayer& grads) const {
    BasicTensor<T> gpre = gy;
    if (activation) {
      auto pg = prelu_backward(cache.pre, alpha, gy);
      gpre = std::move(pg.input);
      grads.alpha = std::move(pg.alpha);
    }
    auto cg = conv_transpose2d_backward(cache.input, weights, spec, gpre);
    grads.weights = std::move(cg.weights);
    grads.bias = std::move(cg.bias);
    return std::move(cg.input);
  }

  template <class P, class Self>
  static void collect(Self& self, const std::string& prefix, std::vector<std::pair<std::string, P*>>& out) {
    out.emplace_back(prefix + ".weight", &self.weights);
    out.emplace_back(prefix + ".bias", &self.bias);
    if (self.activation) out.emplace_back(prefix + ".alpha", &self.alpha);
  }
};

/// One progressive spatial recurrent unit. A (n, n, c) feature map is swept by
/// one GRU over its rows (top to bottom) and by another over its columns (left
/// to right). Each plane is flattened to an n*c vector; each hidden state has
/// n*cells entries and is unflattened back into an (n, cells) plane. The two
/// directional maps are concatenated channel-wise and merged by a convolution.
template <class T>
struct PsRnnUnit {
  std::size_t extent = 0;
  std::size_t in_channels = 0;
  std::size_t cells = 0;
  GateActivation gate = GateActivation::Sigmoid;
  GruParams<T> gru_h, gru_v;
  ConvLayer<T> fusion;

  struct Cache {
    std::size_t batch = 0;
    std::vector<GruStep<T>> h_steps, v_steps;
    typename ConvLayer<T>::Cache fusion;
  };

  PsRnnUnit() = default;
  PsRnnUnit(std::size_t n, std::size_t c, std::size_t k, std::size_t fusion_kernel, GateActivation g)
      : extent(n), in_channels(c), cells(k), gate(g), gru_h(n * c, n * k), gru_v(n * c, n * k),
        fusion(ConvSpec{fusion_kernel, fusion_kernel, 1, fusion_kernel / 2, 2 * k, k}, true) {
    if (fusion_kernel % 2 == 0) throw ConfigError("fusion kernel must be odd");
  }

  std::size_t out_channels() const { return cells; }

  void initialize(Rng& rng) {
    auto init_gru = [&rng](GruParams<T>& p) {
      p.for_each([&rng, &p](const char* name, BasicTensor<T>& t) {
        if (t.rank() == 1)
          t.fill(T(0));
        else
          xavier_uniform(t, t.dim(1), p.hidden(), rng);
        (void)name;
      });
    };
    init_gru(gru_h);
    init_gru(gru_v);
    fusion.initialize(rng);
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, Cache* cache) const {
    const bool single = x.rank() == 3;
    if ((x.rank() != 3 && x.rank() != 4) || (single ? x.dim(0) : x.dim(1)) != extent ||
        (single ? x.dim(1) : x.dim(2)) != extent || (single ? x.dim(2) : x.dim(3)) != in_channels)
      throw ShapeError("psrnn unit: expected (" + std::to_string(extent) + "," + std::to_string(extent) + "," +
                       std::to_string(in_channels) + ") features, got " + x.shape().str());
    const std::size_t batch = single ? 1 : x.dim(0);
    const std::size_t n = extent, c = in_channels, k = cells;

    std::vector<BasicTensor<T>> rows(n, BasicTensor<T>(Shape{batch, n * c}));
    std::vector<BasicTensor<T>> cols(n, BasicTensor<T>(Shape{batch, n * c}));
    const T* src = x.data();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t xx = 0; xx < n; ++xx)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const T v = src[((b * n + y) * n + xx) * c + ch];
            rows[y][b * n * c + xx * c + ch] = v;
            cols[xx][b * n * c + y * c + ch] = v;
          }

    const BasicTensor<T> h0(Shape{batch, n * k});
    auto h_steps = gru_sequence_forward(gru_h, std::span<const BasicTensor<T>>(rows), h0, gate);
    auto v_steps = gru_sequence_forward(gru_v, std::span<const BasicTensor<T>>(cols), h0, gate);

    BasicTensor<T> merged(Shape{batch, n, n, 2 * k});
    for (std::size_t t = 0; t < n; ++t) {
      const auto& hh = h_steps[t].h;
      const auto& hv = v_steps[t].h;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < k; ++ch) {
            merged.at(b, t, i, ch) = hh[b * n * k + i * k + ch];
            merged.at(b, i, t, k + ch) = hv[b * n * k + i * k + ch];
          }
    }

    typename ConvLayer<T>::Cache fcache;
    BasicTensor<T> y = fusion.forward(merged, cache ? &fcache : nullptr);
    if (cache) *cache = {batch, std::move(h_steps), std::move(v_steps), std::move(fcache)};
    return single ? y.reshaped(Shape{n, n, k}) : y;
  }

  BasicTensor<T> backward(const Cache& cache, const BasicTensor<T>& gy, PsRnnUnit& grads) const {
    if (cache.batch == 0 || cache.h_steps.size() != extent) throw UsageError("psrnn unit: missing forward cache");
    const std::size_t batch = cache.batch, n = extent, c = in_channels, k = cells;
    const bool single = gy.rank() == 3;
    const BasicTensor<T> g4 = single ? gy.reshaped(Shape{1, n, n, k}) : gy;
    const BasicTensor<T> gmerged = fusion.backward(cache.fusion, g4, grads.fusion);

    std::vector<BasicTensor<T>> gh(n, BasicTensor<T>(Shape{batch, n * k}));
    std::vector<BasicTensor<T>> gv(n, BasicTensor<T>(Shape{batch, n * k}));
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < k; ++ch) {
            gh[t][b * n * k + i * k + ch] = gmerged.at(b, t, i, ch);
            gv[t][b * n * k + i * k + ch] = gmerged.at(b, i, t, k + ch);
          }

    const BasicTensor<T> zero(Shape{batch, n * k});
    auto rh = gru_backward(cache.h_steps, gru_h, zero, gh, gate);
    auto rv = gru_backward(cache.v_steps, gru_v, zero, gv, gate);
    grads.gru_h = std::move(rh.params);
    grads.gru_v = std::move(rv.params);

    BasicTensor<T> gx(Shape{batch, n, n, c});
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < c; ++ch) {
            gx.at(b, t, i, ch) += rh.x[t][b * n * c + i * c + ch];
            gx.at(b, i, t, ch) += rv.x[t][b * n * c + i * c + ch];
          }
    return single ? gx.reshaped(Shape{n, n, c}) : gx;
  }

  template <class P, class Self>
  static void collect(Self& self, const std::string& prefix, std::vector<std::pair<std::string, P*>>& out) {
    self.gru_h.for_each([&](const char* name, auto& t) { out.emplace_back(prefix + ".h." + name, &t); });
    self.gru_v.for_each([&](const char* name, auto& t) { out.emplace_back(prefix + ".v." + name, &t); });
    ConvLayer<T>::template collect<P>(self.fusion, prefix + ".fusion", out);
  }
};

}  // namespace psrnn
