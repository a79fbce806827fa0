#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "psrnn/rng.hpp"
#include "psrnn/tensor.hpp"

namespace psrnn {

/// Piecewise-constant learning rate: base_lr * decay_ratio^(milestones passed).
struct LrSchedule {
  double base_lr = 1e-3;
  double decay_ratio = 0.1;
  std::vector<std::size_t> milestones;
  std::size_t total_iters = 0;

  void validate() const {
    for (std::size_t i = 0; i < milestones.size(); ++i) {
      if (i > 0 && milestones[i] <= milestones[i - 1]) throw ConfigError("lr milestones must be strictly increasing");
      if (milestones[i] >= total_iters) throw ConfigError("lr milestones must be below total_iters");
    }
  }

  /// The milestones scaled from a reference run length to `total_iters`.
  static LrSchedule scaled(double base_lr, double decay_ratio, const std::vector<std::size_t>& reference_milestones,
                           std::size_t reference_total, std::size_t total_iters) {
    LrSchedule s{base_lr, decay_ratio, {}, total_iters};
    for (std::size_t m : reference_milestones) {
      const auto v = static_cast<std::size_t>(static_cast<double>(m) * static_cast<double>(total_iters) /
                                              static_cast<double>(reference_total));
      if (v > 0 && v < total_iters && (s.milestones.empty() || v > s.milestones.back())) s.milestones.push_back(v);
    }
    return s;
  }
};

/// Milestones {50000, 75000, 85000} over 100000 iterations.
inline LrSchedule reference_schedule() { return LrSchedule{1e-3, 0.1, {50000, 75000, 85000}, 100000}; }

inline double lr_at(const LrSchedule& schedule, std::size_t iteration) {
  if (iteration >= schedule.total_iters)
    throw UsageError("lr_at: iteration " + std::to_string(iteration) + " outside [0, " +
                     std::to_string(schedule.total_iters) + ")");
  const auto passed = std::count_if(schedule.milestones.begin(), schedule.milestones.end(),
                                    [iteration](std::size_t m) { return m <= iteration; });
  return schedule.base_lr * std::pow(schedule.decay_ratio, static_cast<double>(passed));
}

template <class T>
struct AdamState {
  std::vector<BasicTensor<T>> m, v;
  std::size_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;

  AdamState() = default;

  explicit AdamState(const std::vector<BasicTensor<T>*>& params) {
    for (const auto* p : params) {
      m.emplace_back(p->shape());
      v.emplace_back(p->shape());
    }
  }
};

/// One bias-corrected Adam update, applied in place.
template <class T>
void adam_step(const std::vector<BasicTensor<T>*>& params, const std::vector<const BasicTensor<T>*>& grads,
               AdamState<T>& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  if (!(state.beta1 > 0 && state.beta1 < 1 && state.beta2 > 0 && state.beta2 < 1))
    throw UsageError("adam_step: betas must lie in (0,1)");
  ++state.step_count;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t k = 0; k < params.size(); ++k) {
    BasicTensor<T>& p = *params[k];
    const BasicTensor<T>& g = *grads[k];
    if (!(p.shape() == g.shape()) || !(p.shape() == state.m[k].shape()))
      throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(k));
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = state.beta1 * static_cast<double>(m[i]) + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * static_cast<double>(v[i]) + (1.0 - state.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + state.eps_adam);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
    }
  }
}

/// Rescales gradients in place so their joint l2 norm is at most max_norm.
/// Returns the norm before clipping.
template <class T>
double clip_global_norm(const std::vector<BasicTensor<T>*>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto* g : grads) sq += squared_norm(*g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto* g : grads)
      for (auto& v : g->values()) v = static_cast<T>(static_cast<double>(v) * s);
  }
  return norm;
}

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <class T>
void xavier_uniform(BasicTensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace psrnn
