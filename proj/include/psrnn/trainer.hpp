#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "psrnn/common.hpp"
#include "psrnn/loss.hpp"
#include "psrnn/optim.hpp"
#include "psrnn/rng.hpp"
#include "psrnn/sampling.hpp"

namespace psrnn {

struct TrainConfig {
  LossKind loss = LossKind::Satd;
  std::size_t total_iters = 5000;
  /// Empty means the reference milestones scaled to total_iters.
  std::vector<std::size_t> milestones;
  double base_lr = 1e-3;
  double decay_ratio = 0.1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  double validation_fraction = 0.1;
  std::size_t max_validation = 512;
  double selection_window = 0.2;
  /// 0 means max(1, total_iters / 100).
  std::size_t checkpoint_every = 0;
  bool clip_gradients = true;
  double clip_norm = 5.0;
  SatdConfig satd{};

  void validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw ConfigError("validation_fraction must lie in (0,1)");
    if (!(selection_window > 0.0 && selection_window <= 1.0)) throw ConfigError("selection_window must lie in (0,1]");
    if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
    if (!(decay_ratio > 0.0)) throw ConfigError("decay_ratio must be positive");
    if (clip_gradients && !(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
    if (total_iters > 0) schedule().validate();
  }

  LrSchedule schedule() const {
    if (!milestones.empty()) return LrSchedule{base_lr, decay_ratio, milestones, total_iters};
    const auto ref = reference_schedule();
    return LrSchedule::scaled(base_lr, decay_ratio, ref.milestones, ref.total_iters, total_iters);
  }

  std::size_t cadence() const {
    return checkpoint_every ? checkpoint_every : std::max<std::size_t>(1, total_iters / 100);
  }
};

struct TrainLogRow {
  std::size_t iteration = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_satd = 0.0;
  double val_mse = 0.0;
};

struct ValidationMetrics {
  double satd = 0.0;  // mean per-sample SATD on the [0,1] scale
  double mse = 0.0;   // mean per-pixel squared error
  double loss(LossKind k) const { return k == LossKind::Satd ? satd : mse; }
};

template <class Model>
struct TrainResult {
  Model model;
  std::vector<TrainLogRow> log;
  std::size_t best_iteration = 0;
  double best_val_loss = 0.0;
  ValidationMetrics initial;
  ValidationMetrics best;
};

/// Deterministic train/validation partition of a sample set.
struct DataSplit {
  std::vector<std::size_t> train, validation;
};

inline DataSplit split_samples(std::size_t count, double validation_fraction, std::size_t max_validation,
                               std::uint64_t seed) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = count; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  std::size_t nv = static_cast<std::size_t>(std::ceil(validation_fraction * static_cast<double>(count)));
  nv = std::min({nv, max_validation, count > 0 ? count - 1 : 0});
  if (count >= 2) nv = std::max<std::size_t>(nv, 1);
  DataSplit s;
  s.validation.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(nv));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(nv), idx.end());
  return s;
}

/// Stacks the contexts and targets of the chosen samples into batches.
inline std::pair<Tensor, Tensor> make_batch(const std::vector<ContextBlock>& data,
                                            const std::vector<std::size_t>& which) {
  const std::size_t n = data[which.front()].n, side = 2 * n;
  Tensor ctx(Shape{which.size(), side, side, 1}), tgt(Shape{which.size(), n, n, 1});
  for (std::size_t b = 0; b < which.size(); ++b) {
    const auto& s = data[which[b]];
    if (s.n != n || !(s.context.shape() == Shape{side, side}) || !(s.target.shape() == Shape{n, n}))
      throw ShapeError("make_batch: samples of different block sizes");
    std::copy(s.context.values().begin(), s.context.values().end(), ctx.data() + b * side * side);
    std::copy(s.target.values().begin(), s.target.values().end(), tgt.data() + b * n * n);
  }
  return {std::move(ctx), std::move(tgt)};
}

/// Mean SATD and MSE of `model` over the selected samples.
template <class Model>
ValidationMetrics validate_model(const Model& model, const std::vector<ContextBlock>& data,
                                 const std::vector<std::size_t>& which, const SatdConfig& satd_cfg,
                                 std::size_t chunk = 64) {
  ValidationMetrics m;
  if (which.empty()) return m;
  for (std::size_t start = 0; start < which.size(); start += chunk) {
    const std::vector<std::size_t> part(which.begin() + static_cast<std::ptrdiff_t>(start),
                                        which.begin() + static_cast<std::ptrdiff_t>(std::min(which.size(), start + chunk)));
    const auto [ctx, tgt] = make_batch(data, part);
    const Tensor pred = model.forward(ctx);
    const auto [ls, gs] = batch_loss_and_grad(pred, tgt, LossKind::Satd, satd_cfg);
    const auto [lm, gm] = batch_loss_and_grad(pred, tgt, LossKind::Mse, satd_cfg);
    for (double v : ls) m.satd += v;
    for (double v : lm) m.mse += v;
  }
  m.satd /= static_cast<double>(which.size());
  m.mse /= static_cast<double>(which.size());
  return m;
}

/// Adam training with step decay and checkpoint selection by validation loss
/// inside the final `selection_window` of the run. Works with any model type
/// exposing forward/backward_into/zeros_like/parameters.
template <class Model>
TrainResult<Model> train(const Model& initial, const std::vector<ContextBlock>& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw UsageError("train: empty data stream");
  for (const auto& s : data)
    if (s.n != initial.pu_size())
      throw ConfigError("train: sample block size " + std::to_string(s.n) + " does not match model size " +
                        std::to_string(initial.pu_size()));
  if (data.size() < 2) throw UsageError("train: need at least two samples for a validation split");

  const SeedSplitter seeds(cfg.seed);
  const DataSplit split = split_samples(data.size(), cfg.validation_fraction, cfg.max_validation, seeds.derive("split"));
  Rng batch_rng(seeds.derive("batches"));

  TrainResult<Model> result{initial, {}, 0, 0.0, {}, {}};
  Model model = initial;
  result.initial = validate_model(model, data, split.validation, cfg.satd);
  result.best = result.initial;
  result.best_val_loss = result.initial.loss(cfg.loss);
  if (cfg.total_iters == 0) return result;

  const LrSchedule schedule = cfg.schedule();
  const std::size_t k = cfg.cadence();
  const std::size_t window_start =
      cfg.total_iters - static_cast<std::size_t>(std::floor(cfg.selection_window * static_cast<double>(cfg.total_iters)));
  bool have_best = false;

  std::vector<BasicTensor<float>*> params = model.parameters();
  AdamState<float> adam(params);
  Model grads = model.zeros_like();
  double loss_acc = 0.0;
  std::size_t loss_count = 0;
  std::vector<std::size_t> pick(cfg.batch_size);

  for (std::size_t it = 0; it < cfg.total_iters; ++it) {
    for (auto& p : pick) p = split.train[batch_rng.below(split.train.size())];
    const auto [ctx, tgt] = make_batch(data, pick);
    typename Model::Cache cache;
    const Tensor pred = model.forward(ctx, &cache);
    const auto [losses, grad] = batch_loss_and_grad(pred, tgt, cfg.loss, cfg.satd);
    const double loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
    if (!std::isfinite(loss))
      throw DivergenceError(it, "training loss became non-finite at iteration " + std::to_string(it));

    model.backward_into(cache, grad, grads);
    std::vector<BasicTensor<float>*> g = grads.parameters();
    if (cfg.clip_gradients) clip_global_norm(g, cfg.clip_norm);
    const std::vector<const BasicTensor<float>*> cg(g.begin(), g.end());
    const double lr = lr_at(schedule, it);
    adam_step(params, cg, adam, lr);
    loss_acc += loss;
    ++loss_count;

    const std::size_t done = it + 1;
    if (done % k == 0 || done == cfg.total_iters) {
      const ValidationMetrics vm = validate_model(model, data, split.validation, cfg.satd);
      const double vl = vm.loss(cfg.loss);
      if (!std::isfinite(vl))
        throw DivergenceError(it, "validation loss became non-finite at iteration " + std::to_string(it));
      result.log.push_back({done, lr, loss_acc / static_cast<double>(loss_count), vl, vm.satd, vm.mse});
      loss_acc = 0.0;
      loss_count = 0;
      if (done >= window_start && (!have_best || vl < result.best_val_loss)) {
        have_best = true;
        result.model = model;
        result.best_iteration = done;
        result.best_val_loss = vl;
        result.best = vm;
      }
    }
  }
  return result;
}

inline void write_train_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write '" + path.string() + "'");
  f << "iteration,lr,train_loss,val_loss\n";
  for (const auto& r : log)
    f << r.iteration << ',' << format_double(r.lr) << ',' << format_double(r.train_loss) << ','
      << format_double(r.val_loss) << '\n';
}

/// Validation SATD and MSE at every checkpoint, logged regardless of the
/// training loss kind.
inline void write_metrics_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write '" + path.string() + "'");
  f << "iteration,val_satd,val_mse\n";
  for (const auto& r : log) f << r.iteration << ',' << format_double(r.val_satd) << ',' << format_double(r.val_mse) << '\n';
}

}  // namespace psrnn
