#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "psrnn/degrade.hpp"
#include "psrnn/intra.hpp"
#include "psrnn/loss.hpp"
#include "psrnn/network.hpp"
#include "psrnn/psrnn_plus.hpp"
#include "psrnn/sampling.hpp"

namespace psrnn {

enum class BlockPolicy { Fixed, GreedySplit };

inline const char* to_string(BlockPolicy p) { return p == BlockPolicy::Fixed ? "fixed" : "greedy-split"; }

inline BlockPolicy parse_block_policy(std::string_view s) {
  if (s == "fixed") return BlockPolicy::Fixed;
  if (s == "greedy-split" || s == "greedy") return BlockPolicy::GreedySplit;
  throw ConfigError("unknown block policy '" + std::string(s) + "'");
}

struct EvalConfig {
  int qp = 32;
  /// Fixed policy: each size is tiled independently. Greedy split: the largest
  /// size is the root block, split recursively while the half size is listed.
  std::vector<std::size_t> block_sizes{8};
  BlockPolicy policy = BlockPolicy::Fixed;
  IntraConfig intra{};
  double split_flag_bits = 1.0;
  float fill = kDefaultFill;
  std::size_t threads = 1;
  std::size_t batch = 64;

  void validate() const {
    if (block_sizes.empty()) throw ConfigError("at least one evaluation block size is required");
    for (auto n : block_sizes)
      if (n != 4 && n != 8 && n != 16 && n != 32) throw ConfigError("block sizes must be 4, 8, 16 or 32");
    if (threads == 0) throw ConfigError("threads must be positive");
    if (batch == 0) throw ConfigError("batch must be positive");
    DegradeConfig{qp, 8}.validate();
  }
};

/// The network side of the RDO comparison: per-size networks (one per
/// availability mode at most), PS-RNN+ composites, or the ground-truth oracle.
struct ModelSet {
  std::map<std::size_t, std::vector<PsRnnNetwork<float>>> networks;
  std::map<std::size_t, PsRnnPlus<float>> plus;
  bool oracle = false;

  void add(PsRnnNetwork<float> net) { networks[net.pu_size()].push_back(std::move(net)); }
  void add(PsRnnPlus<float> net) { plus.insert_or_assign(net.pu_size(), std::move(net)); }

  bool empty() const { return !oracle && networks.empty() && plus.empty(); }
  bool covers(std::size_t n) const { return oracle || networks.count(n) || plus.count(n); }

  /// The network for size n whose availability mode matches `preferred`,
  /// else any network for n.
  const PsRnnNetwork<float>* network_for(std::size_t n, AvailabilityMode preferred) const {
    const auto it = networks.find(n);
    if (it == networks.end() || it->second.empty()) return nullptr;
    for (const auto& net : it->second)
      if (net.config().availability == preferred) return &net;
    return &it->second.front();
  }
};

struct BlockRecord {
  std::size_t image = 0, x = 0, y = 0, n = 0;
  AvailabilityMode availability = AvailabilityMode::FourBlock;
  ModeCost baseline;
  bool has_network = false;
  ModeCost network{kNetworkMode, {}};
  bool network_wins = false;
  double baseline_mse = 0.0;
  double network_mse = 0.0;

  double chosen_total() const { return network_wins ? network.total() : baseline.total(); }
};

struct EvalSummary {
  int qp = 0;
  double lambda = 0.0;
  std::size_t blocks = 0;
  std::size_t network_selected = 0;
  double selection_rate_pct = 0.0;
  double baseline_total = 0.0;
  double chosen_total = 0.0;
  double cost_reduction_pct = 0.0;
  double mean_satd_baseline = 0.0;
  double mean_satd_network = 0.0;
  double mean_satd_chosen = 0.0;
  double mean_mse_baseline = 0.0;
  double mean_mse_network = 0.0;
  std::map<std::size_t, std::size_t> blocks_per_size;
};

struct EvalReport {
  std::vector<BlockRecord> records;
  EvalSummary summary;
};

/// Aggregates recomputed from the per-block records.
inline EvalSummary summarize(const std::vector<BlockRecord>& records, int qp, double lambda) {
  EvalSummary s;
  s.qp = qp;
  s.lambda = lambda;
  s.blocks = records.size();
  std::size_t with_net = 0;
  for (const auto& r : records) {
    s.baseline_total += r.baseline.total();
    s.chosen_total += r.chosen_total();
    s.mean_satd_baseline += r.baseline.cost.satd;
    s.mean_mse_baseline += r.baseline_mse;
    s.mean_satd_chosen += r.network_wins ? r.network.cost.satd : r.baseline.cost.satd;
    if (r.has_network) {
      ++with_net;
      s.mean_satd_network += r.network.cost.satd;
      s.mean_mse_network += r.network_mse;
    }
    if (r.network_wins) ++s.network_selected;
    ++s.blocks_per_size[r.n];
  }
  if (s.blocks) {
    const double b = static_cast<double>(s.blocks);
    s.selection_rate_pct = 100.0 * static_cast<double>(s.network_selected) / b;
    s.mean_satd_baseline /= b;
    s.mean_mse_baseline /= b;
    s.mean_satd_chosen /= b;
  }
  if (with_net) {
    s.mean_satd_network /= static_cast<double>(with_net);
    s.mean_mse_network /= static_cast<double>(with_net);
  }
  if (s.baseline_total > 0) s.cost_reduction_pct = 100.0 * (s.baseline_total - s.chosen_total) / s.baseline_total;
  return s;
}

namespace detail {

/// Coding order: root blocks of side `root` in raster order, and z-order
/// inside each root block.
struct CodingOrder {
  std::size_t width, height, root;

  std::uint64_t morton(std::size_t x, std::size_t y) const {
    std::uint64_t m = 0;
    for (unsigned b = 0; b < 32; ++b) {
      m |= static_cast<std::uint64_t>((x >> b) & 1u) << (2 * b);
      m |= static_cast<std::uint64_t>((y >> b) & 1u) << (2 * b + 1);
    }
    return m;
  }
  /// Position of pixel (x, y) in coding order.
  std::pair<std::size_t, std::uint64_t> key(std::size_t x, std::size_t y) const {
    const std::size_t per_row = (width + root - 1) / root;
    return {(y / root) * per_row + x / root, morton(x % root, y % root)};
  }
  /// Whether pixel (px, py) is reconstructed before the block whose top-left is (x, y).
  bool coded_before(long px, long py, std::size_t x, std::size_t y) const {
    if (px < 0 || py < 0 || px >= static_cast<long>(width) || py >= static_cast<long>(height)) return false;
    return key(static_cast<std::size_t>(px), static_cast<std::size_t>(py)) < key(x, y);
  }
  bool region_coded(long x0, long y0, long w, long h, std::size_t bx, std::size_t by) const {
    for (long y = y0; y < y0 + h; ++y)
      for (long x = x0; x < x0 + w; ++x)
        if (!coded_before(x, y, bx, by)) return false;
    return true;
  }
};

struct Candidate {
  std::size_t x, y, n;
  ReferenceAvailability refs;
  AvailabilityMode availability;
};

inline Candidate make_candidate(const CodingOrder& order, std::size_t x, std::size_t y, std::size_t n) {
  const long lx = static_cast<long>(x), ly = static_cast<long>(y), ln = static_cast<long>(n);
  Candidate c{x, y, n, {}, AvailabilityMode::ThreeBlock};
  c.refs.corner = order.coded_before(lx - 1, ly - 1, x, y);
  c.refs.above = order.region_coded(lx, ly - 1, ln, 1, x, y);
  c.refs.above_right = order.region_coded(lx + ln, ly - 1, ln, 1, x, y);
  c.refs.left = order.region_coded(lx - 1, ly, 1, ln, x, y);
  c.refs.below_left = order.region_coded(lx - 1, ly + ln, 1, ln, x, y);
  if (x >= n && order.region_coded(lx - ln, ly, ln, ln, x, y)) c.availability = AvailabilityMode::FourBlock;
  return c;
}

/// Network input for a block: the 2N x 2N window ending at the block, with
/// pixels not yet coded replaced by the fill value.
inline Tensor block_context(const GrayImage& recon, const CodingOrder& order, const Candidate& c, float fill) {
  const std::size_t n = c.n;
  Tensor w = recon.window(c.x - n, c.y - n, 2 * n, 2 * n);
  for (std::size_t j = 0; j < 2 * n; ++j)
    for (std::size_t i = 0; i < 2 * n; ++i)
      if (!order.coded_before(static_cast<long>(c.x - n + i), static_cast<long>(c.y - n + j), c.x, c.y))
        w.at(j, i) = fill;
  return w;
}

inline double mse(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& f) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < count; i += threads) f(i);
    });
  for (auto& th : pool) th.join();
}

/// Runs every network prediction needed for `cands`, batching blocks that
/// share a model. Returns one prediction per candidate (empty when no network
/// covers it).
inline std::vector<std::optional<Tensor>> predict_blocks(const ModelSet& models, const GrayImage& clean,
                                                         const GrayImage& recon, const CodingOrder& order,
                                                         const std::vector<Candidate>& cands, const EvalConfig& cfg) {
  std::vector<std::optional<Tensor>> out(cands.size());
  std::map<const void*, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const auto& c = cands[i];
    if (models.oracle) {
      out[i] = clean.window(c.x, c.y, c.n, c.n);
    } else if (const auto* net = models.network_for(c.n, c.availability)) {
      groups[net].push_back(i);
    } else if (const auto it = models.plus.find(c.n); it != models.plus.end()) {
      groups[&it->second].push_back(i);
    }
  }
  for (const auto& [key, idx] : groups) {
    const std::size_t n = cands[idx.front()].n;
    const PsRnnNetwork<float>* net = nullptr;
    const PsRnnPlus<float>* plus = nullptr;
    AvailabilityMode mode = AvailabilityMode::FourBlock;
    if (const auto it = models.plus.find(n); it != models.plus.end() && key == &it->second) {
      plus = &it->second;
    } else {
      net = static_cast<const PsRnnNetwork<float>*>(key);
      mode = net->config().availability;
    }
    for (std::size_t start = 0; start < idx.size(); start += cfg.batch) {
      const std::size_t end = std::min(idx.size(), start + cfg.batch);
      Tensor ctx(Shape{end - start, 2 * n, 2 * n, 1});
      for (std::size_t b = start; b < end; ++b) {
        Tensor w = block_context(recon, order, cands[idx[b]], cfg.fill);
        mask_context(w, n, mode, cfg.fill);
        std::copy(w.values().begin(), w.values().end(), ctx.data() + (b - start) * 4 * n * n);
      }
      const Tensor pred = net ? net->forward(ctx) : plus->forward(ctx);
      for (std::size_t b = start; b < end; ++b)
        out[idx[b]] = Tensor(Shape{n, n}, std::vector<float>(pred.data() + (b - start) * n * n,
                                                             pred.data() + (b - start + 1) * n * n));
    }
  }
  return out;
}

}  // namespace detail

/// RDO-lite comparison of the network predictor against the best of the 35
/// baseline modes on every block of every image. References and network
/// contexts come from the image degraded at cfg.qp; targets from the clean
/// image. Blocks too close to the top or left border for a full 2N x 2N
/// context are not evaluated.
inline EvalReport evaluate(const ModelSet& models, const std::vector<GrayImage>& images, const EvalConfig& cfg) {
  cfg.validate();
  for (auto n : cfg.block_sizes)
    if (!models.empty() && !models.covers(n))
      throw ConfigError("no model loaded for " + std::to_string(n) + "x" + std::to_string(n) + " blocks");
  const double lambda = lambda_for_qp(cfg.qp);
  std::vector<std::size_t> sizes = cfg.block_sizes;
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());

  EvalReport report;
  for (std::size_t img = 0; img < images.size(); ++img) {
    const GrayImage& clean = images[img];
    const GrayImage recon = degrade(clean, DegradeConfig{cfg.qp, 8});

    // Each pass is (root size, sizes allowed in the quadtree below it).
    std::vector<std::pair<std::size_t, std::vector<std::size_t>>> passes;
    if (cfg.policy == BlockPolicy::Fixed)
      for (auto it = sizes.rbegin(); it != sizes.rend(); ++it) passes.push_back({*it, {*it}});
    else
      passes.push_back({sizes.front(), sizes});

    for (const auto& [root, allowed] : passes) {
      const detail::CodingOrder order{clean.width, clean.height, root};
      std::vector<detail::Candidate> cands;
      std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::size_t> where;
      std::vector<std::pair<std::size_t, std::size_t>> roots;
      for (std::size_t y = root; y + root <= clean.height; y += root)
        for (std::size_t x = root; x + root <= clean.width; x += root) {
          roots.emplace_back(x, y);
          std::function<void(std::size_t, std::size_t, std::size_t)> add = [&](std::size_t bx, std::size_t by,
                                                                                std::size_t n) {
            where[{bx, by, n}] = cands.size();
            cands.push_back(detail::make_candidate(order, bx, by, n));
            if (std::find(allowed.begin(), allowed.end(), n / 2) != allowed.end())
              for (std::size_t q = 0; q < 4; ++q) add(bx + (q % 2) * n / 2, by + (q / 2) * n / 2, n / 2);
          };
          add(x, y, root);
        }

      const auto preds = detail::predict_blocks(models, clean, recon, order, cands, cfg);
      std::vector<BlockRecord> recs(cands.size());
      detail::parallel_for(cands.size(), cfg.threads, [&](std::size_t i) {
        const auto& c = cands[i];
        const Tensor target = clean.window(c.x, c.y, c.n, c.n);
        const auto refs = build_reference_samples(recon, c.x, c.y, c.n, c.refs, cfg.fill);
        BlockRecord r;
        r.image = img;
        r.x = c.x;
        r.y = c.y;
        r.n = c.n;
        r.availability = c.availability;
        r.baseline = best_mode_search(refs, target, c.n, lambda, cfg.intra);
        r.baseline_mse = detail::mse(target, predict_mode(refs, r.baseline.mode, c.n, cfg.intra));
        if (preds[i]) {
          r.has_network = true;
          r.network = {kNetworkMode, rd_cost(target, *preds[i], cfg.intra.network_flag_bits, lambda, cfg.intra)};
          r.network_mse = detail::mse(target, *preds[i]);
          r.network_wins = r.network.total() < r.baseline.total();
        }
        recs[i] = r;
      });

      // Greedy split: keep a block whole unless its four children (plus the
      // split flag) are cheaper.
      std::function<double(std::size_t, std::size_t, std::size_t, std::vector<BlockRecord>&)> decide =
          [&](std::size_t bx, std::size_t by, std::size_t n, std::vector<BlockRecord>& leaves) -> double {
        const BlockRecord& whole = recs[where.at({bx, by, n})];
        if (!where.count({bx, by, n / 2})) {
          leaves.push_back(whole);
          return whole.chosen_total();
        }
        std::vector<BlockRecord> sub;
        double split = lambda * cfg.split_flag_bits;
        for (std::size_t q = 0; q < 4; ++q) split += decide(bx + (q % 2) * n / 2, by + (q / 2) * n / 2, n / 2, sub);
        if (split < whole.chosen_total()) {
          leaves.insert(leaves.end(), sub.begin(), sub.end());
          return split;
        }
        leaves.push_back(whole);
        return whole.chosen_total();
      };
      for (const auto& [x, y] : roots) decide(x, y, root, report.records);
    }
  }
  report.summary = summarize(report.records, cfg.qp, lambda);
  return report;
}

inline void write_eval_csv(const EvalReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write '" + path.string() + "'");
  f << "image,x,y,n,availability,lambda,baseline_mode,baseline_satd,baseline_bits,baseline_total,baseline_mse,"
       "network,network_satd,network_bits,network_total,network_mse,winner\n";
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : report.records) {
    f << r.image << ',' << r.x << ',' << r.y << ',' << r.n << ',' << to_string(r.availability) << ','
      << num(r.baseline.cost.lambda) << ',' << r.baseline.mode << ',' << num(r.baseline.cost.satd) << ','
      << num(r.baseline.cost.bits_proxy) << ',' << num(r.baseline.total()) << ',' << num(r.baseline_mse) << ','
      << (r.has_network ? 1 : 0) << ',' << num(r.network.cost.satd) << ',' << num(r.network.cost.bits_proxy) << ','
      << num(r.has_network ? r.network.total() : 0.0) << ',' << num(r.network_mse) << ','
      << (r.network_wins ? "network" : "baseline") << '\n';
  }
}

inline nlohmann::json summary_json(const EvalSummary& s) {
  nlohmann::json j;
  j["qp"] = s.qp;
  j["lambda"] = s.lambda;
  j["blocks"] = s.blocks;
  j["network_selected"] = s.network_selected;
  j["selection_rate_pct"] = s.selection_rate_pct;
  j["baseline_total"] = s.baseline_total;
  j["chosen_total"] = s.chosen_total;
  j["cost_reduction_pct"] = s.cost_reduction_pct;
  j["mean_satd_baseline"] = s.mean_satd_baseline;
  j["mean_satd_network"] = s.mean_satd_network;
  j["mean_satd_chosen"] = s.mean_satd_chosen;
  j["mean_mse_baseline"] = s.mean_mse_baseline;
  j["mean_mse_network"] = s.mean_mse_network;
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [n, c] : s.blocks_per_size) per[std::to_string(n)] = c;
  j["blocks_per_size"] = per;
  return j;
}

inline void write_eval_summary(const EvalSummary& s, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write '" + path.string() + "'");
  f << summary_json(s).dump(2) << '\n';
}

}  // namespace psrnn
