#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "psrnn/network.hpp"

namespace psrnn {

struct PlusConfig {
  std::size_t target_n = 16;
  /// Hidden widths of the pre and post nets; 0 picks the width that puts the
  /// added parameters closest to `overhead_target` of the base.
  std::size_t pre_channels = 0;
  std::size_t post_channels = 0;
  double overhead_target = 0.066;
  bool freeze_base = true;

  void validate() const {
    if (target_n != 16 && target_n != 32)
      throw ConfigError("PS-RNN+ supports target sizes 16 and 32 only (got " + std::to_string(target_n) + ")");
    if (!(overhead_target > 0.0)) throw ConfigError("overhead_target must be positive");
  }
};

namespace detail {

struct PlusLayout {
  ConvSpec pre0, pre1, post0, post1;
};

/// Pre-net: two 3x3 stride convolutions taking 2N to 16. Post-net: two
/// transposed convolutions taking 8 to N (each given as the forward conv it is
/// the adjoint of, i.e. in_channels is the layer's output width).
inline PlusLayout plus_layout(std::size_t target_n, std::size_t p, std::size_t q) {
  if (target_n == 16)
    return {ConvSpec{3, 3, 1, 1, 1, p}, ConvSpec{3, 3, 2, 1, p, 1}, ConvSpec{3, 3, 1, 1, q, 1},
            ConvSpec{4, 4, 2, 1, 1, q}};
  return {ConvSpec{3, 3, 2, 1, 1, p}, ConvSpec{3, 3, 2, 1, p, 1}, ConvSpec{4, 4, 2, 1, q, 1},
          ConvSpec{4, 4, 2, 1, 1, q}};
}

/// Parameters added by a pre-net of width p and a post-net of width q.
inline std::size_t plus_overhead(std::size_t target_n, std::size_t p, std::size_t q) {
  const auto l = plus_layout(target_n, p, q);
  auto conv = [](const ConvSpec& s, std::size_t out, bool act) {
    return s.weight_shape().elements() + out + (act ? out : 0);
  };
  return conv(l.pre0, p, true) + conv(l.pre1, 1, false) + conv(l.post0, q, true) + conv(l.post1, 1, false);
}

}  // namespace detail

/// Unified variable-size predictor: a stride-conv pre-net reduces the 2N x 2N
/// context to the 16 x 16 input of an 8 x 8 base network, whose prediction is
/// upsampled back to N x N by two transposed convolutions.
template <class T>
class PsRnnPlus {
 public:
  struct Cache {
    typename ConvLayer<T>::Cache pre0, pre1;
    typename PsRnnNetwork<T>::Cache base;
    typename ConvTransposeLayer<T>::Cache post0, post1;
    BasicTensor<T> raw;
    bool recorded = false;
  };

  PsRnnPlus() = default;

  PsRnnPlus(PsRnnNetwork<T> base, PlusConfig cfg) : base_(std::move(base)), cfg_(cfg) {
    cfg_.validate();
    if (base_.pu_size() != 8)
      throw ConfigError("PS-RNN+ base network must be an 8x8 model (got " + std::to_string(base_.pu_size()) + ")");
    const std::size_t base_params = base_.parameter_count();
    if (cfg_.pre_channels == 0 || cfg_.post_channels == 0) {
      const std::size_t w = auto_width(cfg_.target_n, base_params, cfg_.overhead_target);
      if (cfg_.pre_channels == 0) cfg_.pre_channels = w;
      if (cfg_.post_channels == 0) cfg_.post_channels = w;
    }
    const auto l = detail::plus_layout(cfg_.target_n, cfg_.pre_channels, cfg_.post_channels);
    pre_[0] = ConvLayer<T>(l.pre0, true);
    pre_[1] = ConvLayer<T>(l.pre1, false);
    post_[0] = ConvTransposeLayer<T>(l.post0, true);
    post_[1] = ConvTransposeLayer<T>(l.post1, false);

    const std::size_t n2 = context_size();
    if (l.pre1.out_h(l.pre0.out_h(n2)) != base_.context_size() ||
        l.post1.transposed_extent(l.post0.transposed_extent(base_.pu_size(), l.post0.kernel_h), l.post1.kernel_h) !=
            cfg_.target_n)
      throw ShapeError("PS-RNN+ spatial flow does not map 2N -> 16 -> 8 -> N");
  }

  /// Width w minimising |overhead(w) / base - target|.
  static std::size_t auto_width(std::size_t target_n, std::size_t base_params, double target) {
    std::size_t best = 1;
    double best_err = 1e300;
    for (std::size_t w = 1; w <= 4096; ++w) {
      const double ratio =
          static_cast<double>(detail::plus_overhead(target_n, w, w)) / static_cast<double>(base_params);
      const double err = std::abs(ratio - target);
      if (err < best_err) best = w, best_err = err;
      if (ratio > target) break;
    }
    return best;
  }

  void initialize_adapters(Rng& rng) {
    for (auto& l : pre_) l.initialize(rng);
    for (auto& l : post_) l.initialize(rng);
    post_[1].bias.fill(T(0.5));
  }

  const PlusConfig& config() const { return cfg_; }
  const PsRnnNetwork<T>& base() const { return base_; }
  PsRnnNetwork<T>& base() { return base_; }
  std::size_t pu_size() const { return cfg_.target_n; }
  std::size_t context_size() const { return 2 * cfg_.target_n; }
  bool frozen() const { return cfg_.freeze_base; }
  void set_frozen(bool f) { cfg_.freeze_base = f; }

  std::size_t overhead_parameters() const {
    std::size_t n = 0;
    for (const auto& [name, t] : adapter_parameters()) n += t->size();
    return n;
  }
  double overhead_ratio() const {
    return static_cast<double>(overhead_parameters()) / static_cast<double>(base_.parameter_count());
  }

  PsRnnPlus zeros_like() const {
    PsRnnPlus g = *this;
    for (auto& [name, t] : g.all_parameters()) t->fill(T(0));
    return g;
  }

  BasicTensor<T> forward(const BasicTensor<T>& context, Cache* cache = nullptr) const {
    const std::size_t n2 = context_size();
    if (context.rank() != 4 || context.dim(1) != n2 || context.dim(2) != n2 || context.dim(3) != 1)
      throw ShapeError("PS-RNN+: expected (B," + std::to_string(n2) + "," + std::to_string(n2) + ",1) context, got " +
                       context.shape().str());
    BasicTensor<T> x = pre_[0].forward(context, cache ? &cache->pre0 : nullptr);
    x = pre_[1].forward(x, cache ? &cache->pre1 : nullptr);
    x = base_.forward(x, cache ? &cache->base : nullptr);
    x = post_[0].forward(x, cache ? &cache->post0 : nullptr);
    BasicTensor<T> raw = post_[1].forward(x, cache ? &cache->post1 : nullptr);
    BasicTensor<T> out = clip01(raw);
    if (cache) {
      cache->raw = std::move(raw);
      cache->recorded = true;
    }
    return out;
  }

  BasicTensor<T> predict(const BasicTensor<T>& context) const {
    const std::size_t n2 = context_size(), n = pu_size();
    if (context.rank() != 2 || context.dim(0) != n2 || context.dim(1) != n2)
      throw ShapeError("predict: expected " + std::to_string(n2) + "x" + std::to_string(n2) + " context, got " +
                       context.shape().str());
    return forward(context.reshaped(Shape{1, n2, n2, 1})).reshaped(Shape{n, n});
  }

  /// Gradients for every parameter (base gradients are still computed when
  /// frozen, since they are needed to reach the pre-net).
  BasicTensor<T> backward_into(const Cache& cache, const BasicTensor<T>& grad_prediction, PsRnnPlus& grads) const {
    if (!cache.recorded) throw UsageError("PS-RNN+ backward called without a recorded forward pass");
    detail::require_same_shape(cache.raw, grad_prediction, "PS-RNN+ backward");
    BasicTensor<T> g(grad_prediction.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double r = cache.raw[i];
      g[i] = (r >= 0.0 && r <= 1.0) ? grad_prediction[i] : T(0);
    }
    g = post_[1].backward(cache.post1, g, grads.post_[1]);
    g = post_[0].backward(cache.post0, g, grads.post_[0]);
    g = base_.backward_into(cache.base, g, grads.base_);
    g = pre_[1].backward(cache.pre1, g, grads.pre_[1]);
    return pre_[0].backward(cache.pre0, g, grads.pre_[0]);
  }

  PsRnnPlus backward(const Cache& cache, const BasicTensor<T>& grad_prediction) const {
    PsRnnPlus grads = zeros_like();
    backward_into(cache, grad_prediction, grads);
    return grads;
  }

  /// Trainable parameters: the adapters only while the base is frozen.
  NamedParams<T> named_parameters() {
    return cfg_.freeze_base ? collect<BasicTensor<T>>(*this, false) : collect<BasicTensor<T>>(*this, true);
  }
  ConstNamedParams<T> named_parameters() const {
    return cfg_.freeze_base ? collect<const BasicTensor<T>>(*this, false) : collect<const BasicTensor<T>>(*this, true);
  }
  NamedParams<T> all_parameters() { return collect<BasicTensor<T>>(*this, true); }
  ConstNamedParams<T> all_parameters() const { return collect<const BasicTensor<T>>(*this, true); }
  ConstNamedParams<T> adapter_parameters() const { return collect<const BasicTensor<T>>(*this, false); }

  std::vector<BasicTensor<T>*> parameters() {
    std::vector<BasicTensor<T>*> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : all_parameters()) n += t->size();
    return n;
  }

  std::map<std::string, std::string> to_kv() const {
    std::map<std::string, std::string> kv;
    for (const auto& [k, v] : base_.config().to_kv()) kv["base." + k] = v;
    kv["target_n"] = std::to_string(cfg_.target_n);
    kv["pre_channels"] = std::to_string(cfg_.pre_channels);
    kv["post_channels"] = std::to_string(cfg_.post_channels);
    kv["freeze_base"] = cfg_.freeze_base ? "true" : "false";
    return kv;
  }

  /// Zero-valued composite described by `kv` (as produced by to_kv).
  static PsRnnPlus from_kv(const std::map<std::string, std::string>& kv) {
    std::map<std::string, std::string> base_kv;
    for (const auto& [k, v] : kv)
      if (k.rfind("base.", 0) == 0) base_kv[k.substr(5)] = v;
    auto get = [&kv](const char* key) -> const std::string& {
      const auto it = kv.find(key);
      if (it == kv.end()) throw ConfigError(std::string("PS-RNN+ config missing key '") + key + "'");
      return it->second;
    };
    PlusConfig c;
    c.target_n = parse_size("target_n", get("target_n"));
    c.pre_channels = parse_size("pre_channels", get("pre_channels"));
    c.post_channels = parse_size("post_channels", get("post_channels"));
    c.freeze_base = parse_bool("freeze_base", get("freeze_base"));
    return PsRnnPlus(PsRnnNetwork<T>(NetworkConfig::from_kv(base_kv)), c);
  }

 private:
  template <class P, class Self>
  static std::vector<std::pair<std::string, P*>> collect(Self& self, bool with_base) {
    std::vector<std::pair<std::string, P*>> out;
    ConvLayer<T>::template collect<P>(self.pre_[0], "pre.0", out);
    ConvLayer<T>::template collect<P>(self.pre_[1], "pre.1", out);
    if (with_base)
      for (auto& [name, t] : self.base_.named_parameters()) out.emplace_back("base." + name, t);
    ConvTransposeLayer<T>::template collect<P>(self.post_[0], "post.0", out);
    ConvTransposeLayer<T>::template collect<P>(self.post_[1], "post.1", out);
    return out;
  }

  PsRnnNetwork<T> base_;
  PlusConfig cfg_;
  ConvLayer<T> pre_[2];
  ConvTransposeLayer<T> post_[2];
};

/// Wraps a trained 8x8 network into a composite for `target_n` with freshly
/// initialised adapters.
template <class T>
PsRnnPlus<T> build_psrnn_plus(const PsRnnNetwork<T>& base, std::size_t target_n, Rng& rng, PlusConfig cfg = {}) {
  if (target_n == 4 || target_n == 8)
    throw ConfigError("PS-RNN+ is not used for " + std::to_string(target_n) + "x" + std::to_string(target_n) +
                      " blocks; use the per-size network");
  cfg.target_n = target_n;
  PsRnnPlus<T> plus(base, cfg);
  plus.initialize_adapters(rng);
  return plus;
}

}  // namespace psrnn
