#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "psrnn/config.hpp"
#include "psrnn/degrade.hpp"
#include "psrnn/evaluate.hpp"
#include "psrnn/experiments.hpp"
#include "psrnn/image.hpp"
#include "psrnn/intra.hpp"
#include "psrnn/model_io.hpp"
#include "psrnn/synth.hpp"
#include "psrnn/trainer.hpp"

namespace psrnn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Command-line state shared by all verbs. Precedence: defaults, then the
/// config file, then --set assignments, then the dedicated flags.
struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> out;
  bool oracle = false;
  std::vector<std::string> models;
  std::vector<std::string> assignments;
  /// Verb-specific positional arguments (manifest for prepare, kinds for demo).
  std::vector<std::string> args;
};

inline RunConfig resolve_config(const Options& o) {
  RunConfig c;
  if (!o.config_path.empty()) c.merge_file(o.config_path);
  for (const auto& a : o.assignments) c.set_assignment(a);
  if (o.seed) c.set("seed", std::to_string(*o.seed));
  if (o.threads) c.set("threads", std::to_string(*o.threads));
  if (o.out) c.set("out", *o.out);
  return c;
}

namespace detail {

/// Non-empty, non-comment lines of a manifest; relative entries resolve
/// against the manifest's directory.
inline std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot read manifest '" + path.string() + "'");
  std::vector<std::filesystem::path> out;
  std::string line;
  while (std::getline(f, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::filesystem::path p(line);
    out.push_back(p.is_relative() ? path.parent_path() / p : p);
  }
  return out;
}

inline std::vector<GrayImage> load_manifest_images(const std::filesystem::path& manifest, std::ostream& err) {
  std::vector<GrayImage> out;
  for (const auto& p : read_manifest(manifest)) {
    try {
      out.push_back(load_image(p));
    } catch (const Error& e) {
      err << "skipping " << p.string() << ": " << e.what() << '\n';
    }
  }
  if (out.empty()) throw UsageError("manifest '" + manifest.string() + "' yields no readable images");
  return out;
}

inline std::vector<std::string> csv_fields(const std::string& line) { return split(line, ','); }

/// Image pairs listed in a prepared archive's images.csv.
inline std::vector<ImagePair> load_archive(const std::filesystem::path& dir) {
  std::ifstream f(dir / "images.csv");
  if (!f) throw UsageError("archive '" + dir.string() + "' has no images.csv");
  std::string line;
  std::getline(f, line);
  std::vector<ImagePair> out;
  std::map<std::string, GrayImage> clean_cache;
  while (std::getline(f, line)) {
    if (trim(line).empty()) continue;
    const auto c = csv_fields(line);
    if (c.size() < 4) throw FormatError("malformed images.csv row '" + line + "'");
    if (!clean_cache.count(c[0])) clean_cache[c[0]] = load_image(dir / c[0]);
    out.push_back({clean_cache[c[0]], load_image(dir / c[1]), static_cast<int>(parse_int("qp", c[3]))});
  }
  if (out.empty()) throw UsageError("archive '" + dir.string() + "' lists no images");
  return out;
}

/// Samples recorded in samples.csv for block size n, or nothing if the
/// archive was prepared for another size.
inline std::vector<ContextBlock> archive_samples(const std::filesystem::path& dir, const std::vector<ImagePair>& pairs,
                                                 std::size_t n, float fill) {
  std::vector<ContextBlock> out;
  std::ifstream f(dir / "samples.csv");
  if (!f) return out;
  std::string line;
  std::getline(f, line);
  while (std::getline(f, line)) {
    if (trim(line).empty()) continue;
    const auto c = csv_fields(line);
    if (c.size() < 5) throw FormatError("malformed samples.csv row '" + line + "'");
    if (parse_size("n", c[3]) != n) continue;
    const std::size_t idx = parse_size("image", c[0]);
    if (idx >= pairs.size()) throw FormatError("samples.csv references image " + c[0] + " beyond images.csv");
    out.push_back(make_context(pairs[idx].clean, pairs[idx].degraded, parse_size("x", c[1]), parse_size("y", c[2]), n,
                               parse_availability(c[4]), fill));
  }
  return out;
}

/// Training samples for block size n from the configured source: a prepared
/// archive, a manifest of clean images degraded at every qp, or the synthetic
/// corpus.
inline std::vector<ContextBlock> training_data(const RunConfig& c, std::size_t n, std::ostream& err) {
  const SeedSplitter seeds(c.u64("seed"));
  const auto fill = static_cast<float>(c.real("fill_value"));
  if (!c.str("data.archive").empty()) {
    const std::filesystem::path dir = c.str("data.archive");
    const auto pairs = load_archive(dir);
    auto recorded = archive_samples(dir, pairs, n, fill);
    if (!recorded.empty()) return recorded;
    return sample_corpus(pairs, n, c.size("samples"), c.four_block_fraction(), seeds.derive("windows"), fill);
  }
  if (!c.str("data.manifest").empty()) {
    std::vector<ImagePair> pairs;
    for (auto& img : load_manifest_images(c.str("data.manifest"), err))
      for (int qp : c.ints("qps")) pairs.push_back({img, degrade(img, DegradeConfig{qp, 8}), qp});
    return sample_corpus(pairs, n, c.size("samples"), c.four_block_fraction(), seeds.derive("windows"), fill);
  }
  return synthetic_corpus(c.synthetic(), n, seeds.derive("data"));
}

/// Clean evaluation images: a manifest, or synthetic textures drawn from a
/// seed stream disjoint from the training corpus.
inline std::vector<GrayImage> eval_images(const RunConfig& c, std::ostream& err) {
  if (!c.str("eval.manifest").empty()) return load_manifest_images(c.str("eval.manifest"), err);
  const auto pairs = synthetic_images(c.size("eval.synth_images"), c.size("eval.synth_size"), {c.integer("eval.qp")},
                                      c.real("eval.synth_noise"), SeedSplitter(c.u64("seed")).derive("eval"));
  std::vector<GrayImage> out;
  for (const auto& p : pairs) out.push_back(p.clean);
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write '" + path.string() + "'");
  f << text;
}

/// A loaded predictor of either kind, reduced to what demos need.
struct Predictor {
  std::size_t n = 0;
  AvailabilityMode mode = AvailabilityMode::FourBlock;
  std::function<Tensor(const Tensor&)> predict;
};

inline Predictor load_predictor(const std::filesystem::path& path) {
  const ModelFile m = read_model_file(path);
  if (m.kind() == "psrnn_plus") {
    auto net = std::make_shared<PsRnnPlus<float>>(plus_from_file(m));
    return {net->pu_size(), net->base().config().availability, [net](const Tensor& t) { return net->predict(t); }};
  }
  auto net = std::make_shared<PsRnnNetwork<float>>(network_from_file(m));
  return {net->pu_size(), net->config().availability, [net](const Tensor& t) { return net->predict(t); }};
}

inline TextureSpec demo_texture(TextureKind kind) {
  TextureSpec t;
  t.kind = kind;
  t.angle = 30.0;
  t.frequency = 1.0 / 12.0;
  t.period = 10.0;
  t.value = 0.5;
  return t;
}

}  // namespace detail

/// Writes clean and degraded PGMs for every input (optionally at three
/// scales) and qp, plus images.csv and a samples.csv window index.
inline int cmd_prepare(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig c = resolve_config(o);
  std::string manifest = o.args.empty() ? c.str("data.manifest") : o.args.front();
  if (manifest.empty()) throw UsageError("prepare needs a manifest (positional argument or data.manifest)");
  const auto inputs = detail::read_manifest(manifest);
  if (inputs.empty()) {
    err << "no inputs\n";
    return kExitUsage;
  }
  const std::filesystem::path dir = c.str("out");
  std::filesystem::create_directories(dir);
  const auto qps = c.ints("qps");
  const bool multi = c.flag("prepare.multi_scale");
  const std::size_t n = c.size("pu_size");
  const auto fill = static_cast<float>(c.real("fill_value"));
  const SeedSplitter seeds(c.u64("seed"));

  std::vector<ImagePair> pairs;
  std::string images_csv = "clean,degraded,scale,qp,width,height\n";
  std::map<std::pair<std::size_t, int>, std::size_t> counts;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<GrayImage> scales;
    try {
      const GrayImage img = load_image(inputs[i]);
      if (multi) {
        auto s = multi_scale(img);
        scales.assign(s.begin(), s.end());
      } else {
        scales.push_back(img);
      }
    } catch (const Error& e) {
      err << "error: " << inputs[i].string() << ": " << e.what() << '\n';
      continue;
    }
    ++ok;
    for (std::size_t s = 0; s < scales.size(); ++s) {
      const std::string stem = "img" + std::to_string(i) + "_s" + std::to_string(s);
      const std::string clean_name = stem + "_clean.pgm";
      save_pgm(scales[s], dir / clean_name);
      for (int qp : qps) {
        const std::string deg_name = stem + "_qp" + std::to_string(qp) + ".pgm";
        GrayImage deg = degrade(scales[s], DegradeConfig{qp, 8});
        save_pgm(deg, dir / deg_name);
        images_csv += clean_name + "," + deg_name + "," + std::to_string(s) + "," + std::to_string(qp) + "," +
                      std::to_string(deg.width) + "," + std::to_string(deg.height) + "\n";
        // Round-trip through 8 bits so samples match what a reload sees.
        pairs.push_back({load_image(dir / clean_name), load_image(dir / deg_name), qp});
        ++counts[{s, qp}];
      }
    }
  }
  if (ok == 0) {
    err << "all " << inputs.size() << " inputs failed\n";
    return kExitRuntime;
  }
  detail::write_text(dir / "images.csv", images_csv);

  const auto samples = sample_corpus(pairs, n, c.size("samples"), c.four_block_fraction(), seeds.derive("windows"), fill);
  std::string samples_csv = "image,x,y,n,availability\n";
  {
    // sample_corpus spreads samples over images in order; recover the image index.
    std::size_t img = 0, taken = 0;
    const std::size_t total = samples.size();
    for (const auto& s : samples) {
      while (taken >= total / pairs.size() + (img < total % pairs.size() ? 1 : 0)) {
        ++img;
        taken = 0;
      }
      samples_csv += std::to_string(img) + "," + std::to_string(s.x) + "," + std::to_string(s.y) + "," +
                     std::to_string(s.n) + "," + to_string(s.mode) + "\n";
      ++taken;
    }
  }
  detail::write_text(dir / "samples.csv", samples_csv);
  c.write_resolved(dir / "resolved.cfg");

  for (const auto& [key, count] : counts)
    out << "scale " << key.first << " qp " << key.second << ": " << count << " image(s)\n";
  out << "samples: " << samples.size() << " (" << n << "x" << n << ")\n";
  return kExitOk;
}

/// Trains a per-size network, or a PS-RNN+ composite when plus.base_model is
/// set, and writes the selected checkpoint with its logs.
inline int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig c = resolve_config(o);
  const TrainConfig tc = c.train();
  const std::filesystem::path dir = c.str("out");
  std::filesystem::create_directories(dir);
  c.write_resolved(dir / "resolved.cfg");
  const SeedSplitter seeds(c.u64("seed"));
  Rng init(seeds.derive("init"));

  auto report = [&](const auto& r, std::size_t params) {
    write_train_log(r.log, dir / "train_log.csv");
    write_metrics_log(r.log, dir / "metrics.csv");
    nlohmann::json j;
    j["parameters"] = params;
    j["best_iteration"] = r.best_iteration;
    j["initial_val_satd"] = r.initial.satd;
    j["best_val_satd"] = r.best.satd;
    j["initial_val_mse"] = r.initial.mse;
    j["best_val_mse"] = r.best.mse;
    j["satd_reduction_pct"] = r.initial.satd > 0 ? 100.0 * (1.0 - r.best.satd / r.initial.satd) : 0.0;
    detail::write_text(dir / "train_summary.json", j.dump(2) + "\n");
    out << "best_iteration=" << r.best_iteration << " val_satd " << format_double(r.initial.satd) << " -> "
        << format_double(r.best.satd) << " (" << format_double(j["satd_reduction_pct"].get<double>()) << "% lower)\n";
  };

  if (!c.str("plus.base_model").empty()) {
    const PlusConfig pc = c.plus();
    const auto base = load_model(c.str("plus.base_model"), 8);
    const auto plus = build_psrnn_plus(base, pc.target_n, init, pc);
    const auto data = detail::training_data(c, pc.target_n, err);
    const auto r = train(plus, data, tc);
    save_model(r.model, dir / "model.psrnn");
    report(r, r.model.parameter_count());
    return kExitOk;
  }
  const NetworkConfig nc = c.network();
  const auto net = PsRnnNetwork<float>::initialized(nc, init);
  const auto data = detail::training_data(c, nc.pu_size, err);
  const auto r = train(net, data, tc);
  save_model(r.model, dir / "model.psrnn");
  report(r, net.parameter_count());
  return kExitOk;
}

/// RDO comparison of the loaded models (or the oracle, or nothing) against
/// the directional baseline.
inline int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig c = resolve_config(o);
  const EvalConfig ec = c.eval();
  ModelSet models;
  models.oracle = o.oracle;
  for (const auto& path : o.models) {
    const ModelFile m = read_model_file(path);
    if (m.kind() == "psrnn_plus")
      models.add(plus_from_file(m));
    else
      models.add(network_from_file(m));
  }
  const auto images = detail::eval_images(c, err);
  const std::filesystem::path dir = c.str("out");
  std::filesystem::create_directories(dir);
  c.write_resolved(dir / "resolved.cfg");
  const EvalReport rep = evaluate(models, images, ec);
  write_eval_csv(rep, dir / "eval_blocks.csv");
  write_eval_summary(rep.summary, dir / "eval_summary.json");
  out << "blocks=" << rep.summary.blocks << " cost_reduction_pct=" << format_double(rep.summary.cost_reduction_pct)
      << " selection_rate_pct=" << format_double(rep.summary.selection_rate_pct) << '\n';
  return kExitOk;
}

/// Context / network / baseline / ground-truth PGM quads for synthetic
/// textures and, with demo.manifest, the centre block of natural images.
inline int cmd_demo(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig c = resolve_config(o);
  if (o.models.empty()) throw UsageError("demo needs a trained model (--model PATH)");
  if (!std::filesystem::exists(o.models.front())) throw UsageError("model '" + o.models.front() + "' does not exist");
  const auto pred = detail::load_predictor(o.models.front());
  const std::size_t n = pred.n;
  const int qp = c.integer("eval.qp");
  const double lambda = lambda_for_qp(qp);
  const auto fill = static_cast<float>(c.real("fill_value"));
  IntraConfig ic = c.eval().intra;
  const std::filesystem::path dir = c.str("out");
  std::filesystem::create_directories(dir);
  c.write_resolved(dir / "resolved.cfg");

  ReferenceAvailability avail = ReferenceAvailability::all();
  avail.below_left = pred.mode == AvailabilityMode::FourBlock;

  auto emit = [&](const std::string& name, const GrayImage& clean, std::size_t wx, std::size_t wy) {
    const GrayImage deg = degrade(clean, DegradeConfig{qp, 8});
    const ContextBlock b = make_context(clean, deg, wx, wy, n, pred.mode, fill);
    const Tensor net_pred = pred.predict(b.context);
    const auto refs = build_reference_samples(deg, wx + n, wy + n, n, avail, fill);
    const ModeCost best = best_mode_search(refs, b.target, n, lambda, ic);
    save_pgm(from_tensor(b.context), dir / (name + "_context.pgm"));
    save_pgm(from_tensor(net_pred), dir / (name + "_psrnn.pgm"));
    save_pgm(from_tensor(predict_mode(refs, best.mode, n, ic)), dir / (name + "_baseline.pgm"));
    save_pgm(from_tensor(b.target), dir / (name + "_truth.pgm"));
    out << name << ": baseline mode " << best.mode << ", satd network "
        << format_double(rd_cost(b.target, net_pred, 0, lambda, ic).satd) << " baseline "
        << format_double(best.cost.satd) << '\n';
  };

  const std::vector<std::string> kinds =
      o.args.empty() ? split(c.str("demo.kinds"), ',') : o.args;
  for (const auto& k : kinds) {
    const TextureKind kind = parse_texture(trim(k));
    const GrayImage img = synth_texture(detail::demo_texture(kind), 4 * n, 4 * n, SeedSplitter(c.u64("seed")).derive("demo"));
    emit(to_string(kind), img, n, n);
  }
  if (!c.str("demo.manifest").empty()) {
    const auto images = detail::load_manifest_images(c.str("demo.manifest"), err);
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto& img = images[i];
      if (img.width < 2 * n || img.height < 2 * n) {
        err << "natural image " << i << " is smaller than the " << 2 * n << "x" << 2 * n << " context\n";
        continue;
      }
      emit("natural" + std::to_string(i), img, (img.width - 2 * n) / 2, (img.height - 2 * n) / 2);
    }
  }
  return kExitOk;
}

inline int cmd_compare_losses(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig c = resolve_config(o);
  const TrainConfig tc = c.train();
  const NetworkConfig nc = c.network();
  const auto data = detail::training_data(c, nc.pu_size, err);
  const std::filesystem::path dir = c.str("out");
  std::filesystem::create_directories(dir);
  c.write_resolved(dir / "resolved.cfg");
  const auto cmp = compare_losses(data, nc, tc, c.u64s("seeds"));
  write_loss_comparison(cmp, dir / "loss_comparison.csv");
  out << "median val_satd: satd-trained " << format_double(cmp.median_satd_first) << ", mse-trained "
      << format_double(cmp.median_satd_second) << ", gap " << format_double(cmp.median_gap) << '\n';
  return kExitOk;
}

inline int cmd_ablate_units(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig c = resolve_config(o);
  const TrainConfig tc = c.train();
  const NetworkConfig nc = c.network();
  const auto data = detail::training_data(c, nc.pu_size, err);
  const std::filesystem::path dir = c.str("out");
  std::filesystem::create_directories(dir);
  c.write_resolved(dir / "resolved.cfg");
  std::vector<GrayImage> images;
  EvalConfig ec;
  const bool with_eval = c.flag("ablate.evaluate");
  if (with_eval) {
    images = detail::eval_images(c, err);
    ec = c.eval();
  }
  const auto rows = ablate_units(data, nc, tc, c.sizes("unit_counts"), with_eval ? &images : nullptr,
                                 with_eval ? &ec : nullptr);
  write_ablation(rows, dir / "ablation.csv");
  for (const auto& r : rows) {
    out << "units=" << r.units << " parameters=" << r.parameters << " val_satd=" << format_double(r.validation.satd);
    if (r.cost_reduction_pct) out << " cost_reduction_pct=" << format_double(*r.cost_reduction_pct);
    out << '\n';
  }
  return kExitOk;
}

/// Dispatches a verb and maps errors to exit codes.
inline int run_command(const std::string& verb, const Options& o, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  static const std::map<std::string, int (*)(const Options&, std::ostream&, std::ostream&)> verbs = {
      {"prepare", cmd_prepare},   {"train", cmd_train},
      {"eval", cmd_eval},         {"demo", cmd_demo},
      {"compare-losses", cmd_compare_losses}, {"ablate-units", cmd_ablate_units},
  };
  const auto it = verbs.find(verb);
  if (it == verbs.end()) {
    err << "unknown command '" << verb << "'\n";
    return kExitUsage;
  }
  try {
    return it->second(o, out, err);
  } catch (const DivergenceError& e) {
    err << "error: training diverged at iteration " << e.iteration() << ": " << e.what() << '\n';
    return kExitRuntime;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace psrnn::cli
