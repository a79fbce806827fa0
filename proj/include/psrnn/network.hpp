#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "psrnn/common.hpp"
#include "psrnn/layers.hpp"

namespace psrnn {

/// Architecture of a per-block-size network. Channel widths other than the
/// recurrent cell counts are free choices.
struct NetworkConfig {
  std::size_t pu_size = 8;
  std::size_t preproc_channels = 8;
  /// Per-position hidden channels of each unit's GRUs (8 for the first unit, 4
  /// afterwards); the length of this list is the unit count.
  std::vector<std::size_t> unit_cells{8, 4, 4};
  std::size_t downsample_channels = 8;
  std::size_t recon_channels = 8;
  std::size_t fusion_kernel = 3;
  GateActivation gate = GateActivation::Sigmoid;
  AvailabilityMode availability = AvailabilityMode::FourBlock;

  std::size_t context_size() const { return 2 * pu_size; }

  void validate() const {
    if (pu_size != 4 && pu_size != 8 && pu_size != 16 && pu_size != 32)
      throw ConfigError("pu_size must be one of 4, 8, 16, 32");
    if (unit_cells.empty()) throw ConfigError("network must contain at least one PS-RNN unit");
    for (auto k : unit_cells)
      if (k == 0) throw ConfigError("unit cell counts must be positive");
    if (preproc_channels == 0 || downsample_channels == 0 || recon_channels == 0)
      throw ConfigError("channel widths must be positive");
    if (fusion_kernel == 0 || fusion_kernel % 2 == 0) throw ConfigError("fusion_kernel must be odd");
  }

  std::map<std::string, std::string> to_kv() const {
    return {{"pu_size", std::to_string(pu_size)},
            {"preproc_channels", std::to_string(preproc_channels)},
            {"unit_cells", join(unit_cells)},
            {"downsample_channels", std::to_string(downsample_channels)},
            {"recon_channels", std::to_string(recon_channels)},
            {"fusion_kernel", std::to_string(fusion_kernel)},
            {"gate_activation", to_string(gate)},
            {"availability_mode", to_string(availability)}};
  }

  static NetworkConfig from_kv(const std::map<std::string, std::string>& kv) {
    NetworkConfig c;
    auto get = [&kv](const char* key) -> const std::string& {
      const auto it = kv.find(key);
      if (it == kv.end()) throw ConfigError(std::string("network config missing key '") + key + "'");
      return it->second;
    };
    c.pu_size = parse_size("pu_size", get("pu_size"));
    c.preproc_channels = parse_size("preproc_channels", get("preproc_channels"));
    c.unit_cells = parse_size_list("unit_cells", get("unit_cells"));
    c.downsample_channels = parse_size("downsample_channels", get("downsample_channels"));
    c.recon_channels = parse_size("recon_channels", get("recon_channels"));
    c.fusion_kernel = parse_size("fusion_kernel", get("fusion_kernel"));
    c.gate = parse_gate(get("gate_activation"));
    c.availability = parse_availability(get("availability_mode"));
    c.validate();
    return c;
  }

  static GateActivation parse_gate(std::string_view s) {
    if (s == "sigmoid") return GateActivation::Sigmoid;
    if (s == "tanh") return GateActivation::Tanh;
    throw ConfigError("unknown gate activation '" + std::string(s) + "'");
  }
};

/// Preprocessing convolutions, stacked PS-RNN units with a stride-2
/// downsampling after the first, and reconstruction convolutions. Maps a
/// (B, 2N, 2N, 1) context to a (B, N, N, 1) prediction clipped to [0, 1].
template <class T>
class PsRnnNetwork {
 public:
  struct FeatureCache {
    typename ConvLayer<T>::Cache pre0, pre1, down;
    std::vector<typename PsRnnUnit<T>::Cache> units;
  };
  struct Cache {
    FeatureCache features;
    typename ConvLayer<T>::Cache rec0, rec1;
    BasicTensor<T> raw;  // reconstruction output before clipping
    bool recorded = false;
  };

  PsRnnNetwork() = default;

  /// Zero-valued parameters of the configured shapes.
  explicit PsRnnNetwork(NetworkConfig config) : config_(std::move(config)) {
    config_.validate();
    const std::size_t n2 = config_.context_size(), n = config_.pu_size;
    preproc_[0] = ConvLayer<T>(ConvSpec{3, 3, 1, 1, 1, config_.preproc_channels}, true);
    preproc_[1] = ConvLayer<T>(ConvSpec{3, 3, 1, 1, config_.preproc_channels, config_.preproc_channels}, true);
    units_.emplace_back(n2, config_.preproc_channels, config_.unit_cells[0], config_.fusion_kernel, config_.gate);
    downsample_ = ConvLayer<T>(ConvSpec{3, 3, 2, 1, config_.unit_cells[0], config_.downsample_channels}, true);
    std::size_t c = config_.downsample_channels;
    for (std::size_t i = 1; i < config_.unit_cells.size(); ++i) {
      units_.emplace_back(n, c, config_.unit_cells[i], config_.fusion_kernel, config_.gate);
      c = config_.unit_cells[i];
    }
    recon_[0] = ConvLayer<T>(ConvSpec{3, 3, 1, 1, c, config_.recon_channels}, true);
    recon_[1] = ConvLayer<T>(ConvSpec{3, 3, 1, 1, config_.recon_channels, 1}, false);

    if (preproc_[1].spec.out_h(preproc_[0].spec.out_h(n2)) != n2 || downsample_.spec.out_h(n2) != n ||
        recon_[1].spec.out_h(recon_[0].spec.out_h(n)) != n)
      throw ShapeError("network spatial flow does not map 2N -> N");
  }

  static PsRnnNetwork initialized(NetworkConfig config, Rng& rng) {
    PsRnnNetwork net(std::move(config));
    net.initialize(rng);
    return net;
  }

  void initialize(Rng& rng) {
    for (auto& l : preproc_) l.initialize(rng);
    for (auto& u : units_) u.initialize(rng);
    downsample_.initialize(rng);
    for (auto& l : recon_) l.initialize(rng);
    // Start predictions mid-range; a zero bias leaves most outputs clipped at 0
    // where the clip passes no gradient.
    recon_[1].bias.fill(T(0.5));
  }

  const NetworkConfig& config() const { return config_; }
  std::size_t pu_size() const { return config_.pu_size; }
  std::size_t context_size() const { return config_.context_size(); }
  std::size_t feature_channels() const { return units_.back().out_channels(); }
  const std::vector<PsRnnUnit<T>>& units() const { return units_; }

  PsRnnNetwork zeros_like() const { return PsRnnNetwork(config_); }

  /// Context (B, 2N, 2N, 1) to the last unit's (B, N, N, cells) features.
  BasicTensor<T> features(const BasicTensor<T>& context, FeatureCache* cache) const {
    const std::size_t n2 = context_size();
    if (context.rank() != 4 || context.dim(1) != n2 || context.dim(2) != n2 || context.dim(3) != 1)
      throw ShapeError("network: expected (B," + std::to_string(n2) + "," + std::to_string(n2) +
                       ",1) context, got " + context.shape().str());
    if (cache) cache->units.resize(units_.size());
    BasicTensor<T> x = preproc_[0].forward(context, cache ? &cache->pre0 : nullptr);
    x = preproc_[1].forward(x, cache ? &cache->pre1 : nullptr);
    x = units_[0].forward(x, cache ? &cache->units[0] : nullptr);
    x = downsample_.forward(x, cache ? &cache->down : nullptr);
    for (std::size_t i = 1; i < units_.size(); ++i) x = units_[i].forward(x, cache ? &cache->units[i] : nullptr);
    return x;
  }

  BasicTensor<T> forward(const BasicTensor<T>& context, Cache* cache = nullptr) const {
    BasicTensor<T> f = features(context, cache ? &cache->features : nullptr);
    f = recon_[0].forward(f, cache ? &cache->rec0 : nullptr);
    BasicTensor<T> raw = recon_[1].forward(f, cache ? &cache->rec1 : nullptr);
    BasicTensor<T> out = clip01(raw);
    if (cache) {
      cache->raw = std::move(raw);
      cache->recorded = true;
    }
    return out;
  }

  /// Single 2N x 2N context to an N x N prediction.
  BasicTensor<T> predict(const BasicTensor<T>& context) const {
    const std::size_t n2 = context_size(), n = pu_size();
    if (context.rank() != 2 || context.dim(0) != n2 || context.dim(1) != n2)
      throw ShapeError("predict: expected " + std::to_string(n2) + "x" + std::to_string(n2) + " context, got " +
                       context.shape().str());
    return forward(context.reshaped(Shape{1, n2, n2, 1})).reshaped(Shape{n, n});
  }

  /// Gradient of the features with respect to every parameter it depends on;
  /// returns the gradient with respect to the context.
  BasicTensor<T> backward_features(const FeatureCache& cache, const BasicTensor<T>& grad_features,
                                   PsRnnNetwork& grads) const {
    if (cache.units.size() != units_.size()) throw UsageError("network: missing forward cache");
    BasicTensor<T> g = grad_features;
    for (std::size_t i = units_.size(); i-- > 1;) g = units_[i].backward(cache.units[i], g, grads.units_[i]);
    g = downsample_.backward(cache.down, g, grads.downsample_);
    g = units_[0].backward(cache.units[0], g, grads.units_[0]);
    g = preproc_[1].backward(cache.pre1, g, grads.preproc_[1]);
    return preproc_[0].backward(cache.pre0, g, grads.preproc_[0]);
  }

  /// Parameter gradients for a loss whose gradient with respect to the clipped
  /// prediction is `grad_prediction`.
  PsRnnNetwork backward(const Cache& cache, const BasicTensor<T>& grad_prediction) const {
    PsRnnNetwork grads = zeros_like();
    backward_into(cache, grad_prediction, grads);
    return grads;
  }

  BasicTensor<T> backward_into(const Cache& cache, const BasicTensor<T>& grad_prediction, PsRnnNetwork& grads) const {
    if (!cache.recorded) throw UsageError("network backward called without a recorded forward pass");
    detail::require_same_shape(cache.raw, grad_prediction, "network backward");
    BasicTensor<T> g(grad_prediction.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double r = cache.raw[i];
      g[i] = (r >= 0.0 && r <= 1.0) ? grad_prediction[i] : T(0);
    }
    g = recon_[1].backward(cache.rec1, g, grads.recon_[1]);
    g = recon_[0].backward(cache.rec0, g, grads.recon_[0]);
    return backward_features(cache.features, g, grads);
  }

  NamedParams<T> named_parameters() { return collect<BasicTensor<T>>(*this); }
  ConstNamedParams<T> named_parameters() const { return collect<const BasicTensor<T>>(*this); }

  std::vector<BasicTensor<T>*> parameters() {
    std::vector<BasicTensor<T>*> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : named_parameters()) n += t->size();
    return n;
  }

 private:
  template <class P, class Self>
  static std::vector<std::pair<std::string, P*>> collect(Self& self) {
    std::vector<std::pair<std::string, P*>> out;
    ConvLayer<T>::template collect<P>(self.preproc_[0], "preproc.0", out);
    ConvLayer<T>::template collect<P>(self.preproc_[1], "preproc.1", out);
    for (std::size_t i = 0; i < self.units_.size(); ++i) {
      PsRnnUnit<T>::template collect<P>(self.units_[i], "unit." + std::to_string(i), out);
      if (i == 0) ConvLayer<T>::template collect<P>(self.downsample_, "downsample", out);
    }
    ConvLayer<T>::template collect<P>(self.recon_[0], "recon.0", out);
    ConvLayer<T>::template collect<P>(self.recon_[1], "recon.1", out);
    return out;
  }

  NetworkConfig config_;
  ConvLayer<T> preproc_[2];
  std::vector<PsRnnUnit<T>> units_;
  ConvLayer<T> downsample_;
  ConvLayer<T> recon_[2];
};

/// Packs single-channel square images into a (B, side, side, 1) batch.
template <class T>
BasicTensor<T> stack_batch(std::span<const BasicTensor<T>> images) {
  if (images.empty()) throw ShapeError("stack_batch: empty batch");
  const std::size_t side = images.front().dim(0);
  BasicTensor<T> out(Shape{images.size(), side, side, 1});
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (!(images[b].shape() == Shape{side, side})) throw ShapeError("stack_batch: inconsistent image shapes");
    std::copy(images[b].values().begin(), images[b].values().end(), out.data() + b * side * side);
  }
  return out;
}

}  // namespace psrnn
