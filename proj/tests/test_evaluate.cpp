#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "psrnn/evaluate.hpp"

using namespace psrnn;
namespace fs = std::filesystem;

namespace {

std::vector<GrayImage> test_images(std::size_t count, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GrayImage> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth_texture(random_texture(rng, 0.02), size, size, seed + i));
  return out;
}

ModelSet oracle_set() {
  ModelSet m;
  m.oracle = true;
  return m;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

TEST(Evaluate, OracleSelectsEveryBlockWithZeroSatd) {
  EvalConfig cfg;
  cfg.block_sizes = {4, 8};
  const auto rep = evaluate(oracle_set(), test_images(2, 48, 1), cfg);
  ASSERT_GT(rep.records.size(), 0u);
  for (const auto& r : rep.records) {
    EXPECT_TRUE(r.network_wins);
    EXPECT_EQ(r.network.cost.satd, 0.0);
  }
  EXPECT_DOUBLE_EQ(rep.summary.selection_rate_pct, 100.0);
  EXPECT_GT(rep.summary.cost_reduction_pct, 0.0);
}

TEST(Evaluate, WithoutModelsTheBaselineAlwaysWins) {
  const auto rep = evaluate(ModelSet{}, test_images(2, 48, 2), EvalConfig{});
  for (const auto& r : rep.records) EXPECT_FALSE(r.has_network);
  EXPECT_EQ(rep.summary.selection_rate_pct, 0.0);
  EXPECT_EQ(rep.summary.cost_reduction_pct, 0.0);
}

TEST(Evaluate, UntrainedNetworkRarelyWins) {
  Rng rng(3);
  ModelSet set;
  set.add(PsRnnNetwork<float>::initialized(NetworkConfig{}, rng));
  const auto rep = evaluate(set, test_images(3, 64, 3), EvalConfig{});
  EXPECT_LT(rep.summary.selection_rate_pct, 10.0);
  EXPECT_LT(rep.summary.cost_reduction_pct, 2.0);
  EXPECT_GE(rep.summary.cost_reduction_pct, 0.0);
}

TEST(Evaluate, MissingModelIsAConfigError) {
  Rng rng(4);
  ModelSet set;
  set.add(PsRnnNetwork<float>::initialized(NetworkConfig{}, rng));
  EvalConfig cfg;
  cfg.block_sizes = {8, 16};
  EXPECT_THROW(evaluate(set, test_images(1, 48, 4), cfg), ConfigError);
  cfg.block_sizes = {12};
  EXPECT_THROW(evaluate(set, test_images(1, 48, 4), cfg), ConfigError);
  cfg = EvalConfig{};
  cfg.qp = -3;
  EXPECT_THROW(evaluate(set, test_images(1, 48, 4), cfg), ConfigError);
}

TEST(Evaluate, FixedTilingCountsBlocksPerSize) {
  EvalConfig cfg;
  cfg.block_sizes = {8, 16};
  const auto rep = evaluate(oracle_set(), {GrayImage(64, 64, 0.5f)}, cfg);
  // The first row and column of each tiling lack a full context window.
  EXPECT_EQ(rep.summary.blocks_per_size.at(8), 49u);
  EXPECT_EQ(rep.summary.blocks_per_size.at(16), 9u);
}

// Double-entry audit: the CSV written for a report is re-read, every winner
// is checked against the cheaper scheme, the chosen baseline mode is
// re-costed with the independent SATD oracle, and the summary is recomputed.
TEST(Evaluate, CsvAuditMatchesAnIndependentRecount) {
  Rng rng(5);
  ModelSet set;
  set.add(PsRnnNetwork<float>::initialized(NetworkConfig{}, rng));
  EvalConfig cfg;
  const auto images = test_images(2, 56, 5);
  const auto rep = evaluate(set, images, cfg);
  const auto path = fs::temp_directory_path() / "psrnn_eval" / "blocks.csv";
  write_eval_csv(rep, path);

  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  const auto header = split_csv(line);
  auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  const double lambda = lambda_for_qp(cfg.qp);
  double base_sum = 0, chosen_sum = 0;
  std::size_t rows = 0, wins = 0;
  while (std::getline(f, line)) {
    const auto c = split_csv(line);
    const double bt = std::stod(c[col("baseline_total")]), nt = std::stod(c[col("network_total")]);
    const bool net_wins = c[col("winner")] == "network";
    EXPECT_EQ(net_wins, nt < bt);
    EXPECT_DOUBLE_EQ(std::stod(c[col("baseline_satd")]) + lambda * cfg.intra.mode_bits, bt);
    EXPECT_DOUBLE_EQ(std::stod(c[col("network_satd")]) + lambda * cfg.intra.network_flag_bits, nt);
    base_sum += bt;
    chosen_sum += std::min(bt, nt);
    wins += net_wins;

    const auto& r = rep.records[rows++];
    const GrayImage recon = degrade(images[r.image], {cfg.qp, 8});
    const detail::CodingOrder order{recon.width, recon.height, r.n};
    const auto cand = detail::make_candidate(order, r.x, r.y, r.n);
    const auto refs = build_reference_samples(recon, r.x, r.y, r.n, cand.refs, cfg.fill);
    const Tensor pred = predict_mode(refs, std::stoi(c[col("baseline_mode")]), r.n, cfg.intra);
    const Tensor target = images[r.image].window(r.x, r.y, r.n, r.n);
    oracle::Mat d = oracle::zeros(r.n, r.n);
    for (std::size_t i = 0; i < r.n; ++i)
      for (std::size_t j = 0; j < r.n; ++j)
        d[i][j] = static_cast<float>(255.0 * (static_cast<double>(target.at(i, j)) - pred.at(i, j)));
    EXPECT_NEAR(oracle::satd(d, 4), std::stod(c[col("baseline_satd")]), 1e-3 * (1 + oracle::satd(d, 4)));
  }
  EXPECT_EQ(rows, rep.records.size());
  EXPECT_EQ(wins, rep.summary.network_selected);
  EXPECT_NEAR(base_sum, rep.summary.baseline_total, 1e-6 * base_sum);
  EXPECT_NEAR(chosen_sum, rep.summary.chosen_total, 1e-6 * base_sum);
}

TEST(Evaluate, DeterministicAndThreadIndependent) {
  Rng rng(6);
  ModelSet set;
  set.add(PsRnnNetwork<float>::initialized(NetworkConfig{}, rng));
  const auto images = test_images(2, 48, 6);
  EvalConfig one, three;
  three.threads = 3;
  const auto a = evaluate(set, images, one), b = evaluate(set, images, three);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].baseline.total(), b.records[i].baseline.total());
    EXPECT_EQ(a.records[i].network.total(), b.records[i].network.total());
  }
  EXPECT_EQ(summary_json(a.summary), summary_json(b.summary));
}

TEST(Evaluate, CandidateAvailabilityFollowsCodingOrder) {
  const detail::CodingOrder raster{64, 64, 8};
  const auto c = detail::make_candidate(raster, 16, 16, 8);
  EXPECT_TRUE(c.refs.corner && c.refs.above && c.refs.above_right && c.refs.left);
  EXPECT_FALSE(c.refs.below_left);
  EXPECT_EQ(c.availability, AvailabilityMode::FourBlock);
  // Inside a 16x16 root in z-order: the top-right 8x8 sees the root row above
  // but not its bottom-left sibling; the bottom-right 8x8 has no above-right.
  const detail::CodingOrder z{64, 64, 16};
  const auto tr = detail::make_candidate(z, 24, 16, 8);
  EXPECT_TRUE(tr.refs.above_right && tr.refs.left);
  EXPECT_FALSE(tr.refs.below_left);
  const auto bl = detail::make_candidate(z, 16, 24, 8);
  EXPECT_TRUE(bl.refs.above_right);
  const auto br = detail::make_candidate(z, 24, 24, 8);
  EXPECT_FALSE(br.refs.above_right);
  EXPECT_TRUE(br.refs.left && br.refs.above && br.refs.corner);
}

TEST(Evaluate, ContextMasksEverythingNotYetCoded) {
  GrayImage recon(32, 32, 0.9f);
  const detail::CodingOrder order{32, 32, 8};
  const auto c = detail::make_candidate(order, 8, 8, 8);
  const Tensor w = detail::block_context(recon, order, c, 0.5f);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) EXPECT_EQ(w.at(y, x), (y >= 8 && x >= 8) ? 0.5f : 0.9f);
}

TEST(Evaluate, GreedySplitLeavesTileEachRoot) {
  EvalConfig cfg;
  cfg.block_sizes = {8, 16};
  cfg.policy = BlockPolicy::GreedySplit;
  const auto images = test_images(1, 64, 7);
  const auto rep = evaluate(ModelSet{}, images, cfg);
  std::set<std::pair<std::size_t, std::size_t>> covered;
  for (const auto& r : rep.records)
    for (std::size_t y = r.y; y < r.y + r.n; ++y)
      for (std::size_t x = r.x; x < r.x + r.n; ++x) EXPECT_TRUE(covered.insert({x, y}).second);
  EXPECT_EQ(covered.size(), 9u * 256u);
  EXPECT_GT(rep.summary.blocks_per_size.count(8) + rep.summary.blocks_per_size.count(16), 0u);

  // With the oracle each whole block costs one flag, so splitting never pays.
  const auto orc = evaluate(oracle_set(), images, cfg);
  EXPECT_EQ(orc.records.size(), 9u);
  for (const auto& r : orc.records) EXPECT_EQ(r.n, 16u);
}

TEST(Evaluate, GreedySplitNeverCostsMoreThanTheRootAlone) {
  EvalConfig greedy, root;
  greedy.block_sizes = {8, 16};
  greedy.policy = BlockPolicy::GreedySplit;
  root.block_sizes = {16};
  const auto images = test_images(2, 64, 8);
  const auto g = evaluate(ModelSet{}, images, greedy), r = evaluate(ModelSet{}, images, root);
  EXPECT_LE(g.summary.chosen_total, r.summary.chosen_total + 1e-9);
}

TEST(Summarize, HandBuiltRecords) {
  BlockRecord a, b;
  a.n = b.n = 8;
  a.baseline = {0, {100, 6, 2}};
  a.has_network = true;
  a.network = {kNetworkMode, {50, 1, 2}};
  a.network_wins = true;
  b.baseline = {10, {40, 6, 2}};
  b.has_network = true;
  b.network = {kNetworkMode, {80, 1, 2}};
  const auto s = summarize({a, b}, 32, 2.0);
  EXPECT_DOUBLE_EQ(s.baseline_total, 112 + 52);
  EXPECT_DOUBLE_EQ(s.chosen_total, 52 + 52);
  EXPECT_DOUBLE_EQ(s.cost_reduction_pct, 100.0 * 60 / 164);
  EXPECT_DOUBLE_EQ(s.selection_rate_pct, 50.0);
  EXPECT_DOUBLE_EQ(s.mean_satd_network, 65.0);
  EXPECT_DOUBLE_EQ(s.mean_satd_chosen, 45.0);
}

TEST(Summarize, JsonFileHasTheHeadlineFields) {
  const auto rep = evaluate(oracle_set(), test_images(1, 32, 9), EvalConfig{});
  const auto path = fs::temp_directory_path() / "psrnn_eval" / "summary.json";
  write_eval_summary(rep.summary, path);
  std::ifstream f(path);
  const auto j = nlohmann::json::parse(f);
  EXPECT_EQ(j.at("qp"), 32);
  EXPECT_DOUBLE_EQ(j.at("selection_rate_pct").get<double>(), 100.0);
  EXPECT_EQ(j.at("blocks").get<std::size_t>(), rep.records.size());
}

TEST(BlockPolicy, Parsing) {
  EXPECT_EQ(parse_block_policy("fixed"), BlockPolicy::Fixed);
  EXPECT_EQ(parse_block_policy("greedy-split"), BlockPolicy::GreedySplit);
  EXPECT_THROW(parse_block_policy("quadtree"), ConfigError);
}
