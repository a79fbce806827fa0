#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include "psrnn/evaluate.hpp"
#include "psrnn/network.hpp"
#include "psrnn/trainer.hpp"

namespace psrnn {

inline double median(std::vector<double> v) {
  if (v.empty()) throw UsageError("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct LossComparisonRow {
  std::uint64_t seed = 0;
  ValidationMetrics first;   // arm trained with `first_loss`
  ValidationMetrics second;  // arm trained with `second_loss`
};

struct LossComparison {
  LossKind first_loss = LossKind::Satd;
  LossKind second_loss = LossKind::Mse;
  std::vector<LossComparisonRow> rows;
  double median_satd_first = 0.0;
  double median_satd_second = 0.0;
  /// Median over seeds of (second arm SATD - first arm SATD).
  double median_gap = 0.0;
};

/// Trains paired models per seed, identical in initialisation, data split and
/// batch order, differing only in the training loss; reports validation SATD
/// and MSE of each selected checkpoint.
inline LossComparison compare_losses(const std::vector<ContextBlock>& data, const NetworkConfig& net_cfg,
                                     const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                                     LossKind first = LossKind::Satd, LossKind second = LossKind::Mse) {
  if (seeds.size() < 3) throw ConfigError("compare_losses needs at least 3 seeds");
  LossComparison out;
  out.first_loss = first;
  out.second_loss = second;
  std::vector<double> gaps, s1, s2;
  for (auto seed : seeds) {
    Rng init(SeedSplitter(seed).derive("init"));
    const auto net = PsRnnNetwork<float>::initialized(net_cfg, init);
    TrainConfig a = base, b = base;
    a.seed = b.seed = seed;
    a.loss = first;
    b.loss = second;
    const auto ra = train(net, data, a);
    const auto rb = train(net, data, b);
    out.rows.push_back({seed, ra.best, rb.best});
    s1.push_back(ra.best.satd);
    s2.push_back(rb.best.satd);
    gaps.push_back(rb.best.satd - ra.best.satd);
  }
  out.median_satd_first = median(s1);
  out.median_satd_second = median(s2);
  out.median_gap = median(gaps);
  return out;
}

inline void write_loss_comparison(const LossComparison& c, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write '" + path.string() + "'");
  const std::string a = to_string(c.first_loss), b = to_string(c.second_loss);
  f << "seed," << a << "_trained_val_satd," << a << "_trained_val_mse," << b << "_trained_val_satd," << b
    << "_trained_val_mse,satd_gap\n";
  for (const auto& r : c.rows)
    f << r.seed << ',' << format_double(r.first.satd) << ',' << format_double(r.first.mse) << ','
      << format_double(r.second.satd) << ',' << format_double(r.second.mse) << ','
      << format_double(r.second.satd - r.first.satd) << '\n';
  f << "median," << format_double(c.median_satd_first) << ",," << format_double(c.median_satd_second) << ",,"
    << format_double(c.median_gap) << '\n';
}

struct AblationRow {
  std::size_t units = 0;
  std::size_t parameters = 0;
  ValidationMetrics validation;
  std::optional<double> cost_reduction_pct;
  std::optional<double> selection_rate_pct;
};

/// One model per unit count at a fixed budget. Unit 1 keeps the first cell
/// width; further units reuse the last configured width.
inline std::vector<AblationRow> ablate_units(const std::vector<ContextBlock>& data, const NetworkConfig& net_cfg,
                                             const TrainConfig& train_cfg, const std::vector<std::size_t>& counts,
                                             const std::vector<GrayImage>* eval_images = nullptr,
                                             const EvalConfig* eval_cfg = nullptr) {
  std::vector<AblationRow> rows;
  for (auto count : counts) {
    if (count == 0) throw ConfigError("unit count must be at least 1");
    NetworkConfig c = net_cfg;
    std::vector<std::size_t> cells;
    for (std::size_t i = 0; i < count; ++i)
      cells.push_back(i < net_cfg.unit_cells.size() ? net_cfg.unit_cells[i] : net_cfg.unit_cells.back());
    c.unit_cells = cells;
    Rng init(SeedSplitter(train_cfg.seed).derive("init"));
    const auto net = PsRnnNetwork<float>::initialized(c, init);
    const auto r = train(net, data, train_cfg);
    AblationRow row{count, net.parameter_count(), r.best, std::nullopt, std::nullopt};
    if (eval_images && eval_cfg) {
      ModelSet set;
      set.add(r.model);
      EvalConfig ec = *eval_cfg;
      ec.block_sizes = {c.pu_size};
      const auto rep = evaluate(set, *eval_images, ec);
      row.cost_reduction_pct = rep.summary.cost_reduction_pct;
      row.selection_rate_pct = rep.summary.selection_rate_pct;
    }
    rows.push_back(row);
  }
  return rows;
}

inline void write_ablation(const std::vector<AblationRow>& rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write '" + path.string() + "'");
  f << "units,parameters,val_satd,val_mse,cost_reduction_pct,selection_rate_pct\n";
  for (const auto& r : rows)
    f << r.units << ',' << r.parameters << ',' << format_double(r.validation.satd) << ','
      << format_double(r.validation.mse) << ','
      << (r.cost_reduction_pct ? format_double(*r.cost_reduction_pct) : "") << ','
      << (r.selection_rate_pct ? format_double(*r.selection_rate_pct) : "") << '\n';
}

}  // namespace psrnn
