#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "psrnn/evaluate.hpp"
#include "psrnn/network.hpp"
#include "psrnn/psrnn_plus.hpp"
#include "psrnn/sampling.hpp"
#include "psrnn/trainer.hpp"

namespace psrnn {

/// Flat key=value run configuration. Every key has a default; unknown keys are
/// rejected. The resolved form (all keys, sorted) reproduces a run verbatim.
class RunConfig {
 public:
  RunConfig() : values_(defaults()) {}

  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d = {
        {"seed", "1"},
        {"threads", "1"},
        {"out", "out"},
        // network
        {"pu_size", "8"},
        {"preproc_channels", "8"},
        {"unit_cells", "8,4,4"},
        {"downsample_channels", "8"},
        {"recon_channels", "8"},
        {"fusion_kernel", "3"},
        {"gate_activation", "sigmoid"},
        {"availability_mode", "four-block"},
        // training
        {"loss", "satd"},
        {"total_iters", "5000"},
        {"milestones", ""},
        {"base_lr", "0.001"},
        {"decay_ratio", "0.1"},
        {"batch_size", "32"},
        {"validation_fraction", "0.1"},
        {"max_validation", "512"},
        {"selection_window", "0.2"},
        {"checkpoint_every", "0"},
        {"clip_gradients", "true"},
        {"clip_norm", "5"},
        {"satd_partition", "4"},
        {"satd_epsilon", "1e-08"},
        // data
        {"data.manifest", ""},
        {"data.archive", ""},
        {"samples", "50000"},
        {"qps", "22,27,32,37"},
        {"four_block_fraction", "-1"},
        {"fill_value", "0.5"},
        {"synth.images", "200"},
        {"synth.size", "96"},
        {"synth.noise", "0"},
        {"prepare.multi_scale", "false"},
        // PS-RNN+
        {"plus.base_model", ""},
        {"plus.target", "16"},
        {"plus.freeze_base", "true"},
        {"plus.pre_channels", "0"},
        {"plus.post_channels", "0"},
        // evaluation
        {"eval.qp", "32"},
        {"eval.block_sizes", "8"},
        {"eval.policy", "fixed"},
        {"eval.manifest", ""},
        {"eval.synth_images", "8"},
        {"eval.synth_size", "128"},
        {"eval.synth_noise", "0"},
        {"eval.smoothing", "true"},
        {"eval.mode_bits", "6"},
        {"eval.network_flag_bits", "1"},
        {"eval.split_flag_bits", "1"},
        {"eval.sample_scale", "255"},
        // experiments and demos
        {"seeds", "1,2,3"},
        {"unit_counts", "1,2,3,4"},
        {"ablate.evaluate", "true"},
        {"demo.kinds", "flat,directional,sinusoid,rings"},
        {"demo.manifest", ""},
    };
    return d;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) {
    if (!defaults().count(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  /// Applies "key=value" (whitespace around either side is ignored).
  void set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }

  /// Parses config text: one key=value per line, '#' starts a comment. All
  /// unknown keys are reported together.
  void merge_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> unknown;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
      const std::string key = trim(line.substr(0, eq));
      if (!defaults().count(key)) {
        unknown.push_back(key);
        continue;
      }
      values_[key] = trim(line.substr(eq + 1));
    }
    if (!unknown.empty()) {
      std::string msg = "unknown config keys:";
      for (const auto& k : unknown) msg += " " + k;
      throw ConfigError(msg);
    }
  }

  void merge_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    merge_text(ss.str());
  }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }
  std::size_t size(const std::string& key) const { return parse_size(key, str(key)); }
  std::uint64_t u64(const std::string& key) const { return parse_u64(key, str(key)); }
  int integer(const std::string& key) const { return static_cast<int>(parse_int(key, str(key))); }
  double real(const std::string& key) const { return parse_double(key, str(key)); }
  bool flag(const std::string& key) const { return parse_bool(key, str(key)); }
  std::vector<std::size_t> sizes(const std::string& key) const { return parse_size_list(key, str(key)); }
  std::vector<int> ints(const std::string& key) const {
    std::vector<int> out;
    for (auto v : sizes(key)) out.push_back(static_cast<int>(v));
    return out;
  }
  std::vector<std::uint64_t> u64s(const std::string& key) const {
    std::vector<std::uint64_t> out;
    if (trim(str(key)).empty()) return out;
    for (const auto& part : split(str(key), ',')) out.push_back(parse_u64(key, part));
    return out;
  }

  std::string resolved_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  void write_resolved(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw FormatError("cannot write '" + path.string() + "'");
    f << resolved_text();
  }

  NetworkConfig network() const {
    std::map<std::string, std::string> kv;
    for (const char* k : {"pu_size", "preproc_channels", "unit_cells", "downsample_channels", "recon_channels",
                          "fusion_kernel", "gate_activation", "availability_mode"})
      kv[k] = str(k);
    return NetworkConfig::from_kv(kv);
  }

  SatdConfig satd() const {
    SatdConfig s{size("satd_partition"), real("satd_epsilon")};
    if (!(s.epsilon > 0)) throw ConfigError("satd_epsilon must be positive");
    return s;
  }

  TrainConfig train() const {
    TrainConfig t;
    t.loss = parse_loss(str("loss"));
    t.total_iters = size("total_iters");
    t.milestones = sizes("milestones");
    t.base_lr = real("base_lr");
    t.decay_ratio = real("decay_ratio");
    t.batch_size = size("batch_size");
    t.seed = u64("seed");
    t.validation_fraction = real("validation_fraction");
    t.max_validation = size("max_validation");
    t.selection_window = real("selection_window");
    t.checkpoint_every = size("checkpoint_every");
    t.clip_gradients = flag("clip_gradients");
    t.clip_norm = real("clip_norm");
    t.satd = satd();
    t.validate();
    return t;
  }

  /// Fraction of four-block samples; negative means "all samples use the
  /// network's own availability mode".
  double four_block_fraction() const {
    const double f = real("four_block_fraction");
    if (f < 0) return network().availability == AvailabilityMode::FourBlock ? 1.0 : 0.0;
    if (f > 1) throw ConfigError("four_block_fraction must lie in [0,1]");
    return f;
  }

  SyntheticCorpusConfig synthetic() const {
    SyntheticCorpusConfig s;
    s.samples = size("samples");
    s.images = size("synth.images");
    s.image_size = size("synth.size");
    s.qps = ints("qps");
    s.noise_sigma = real("synth.noise");
    s.four_block_fraction = four_block_fraction();
    s.fill = static_cast<float>(real("fill_value"));
    if (s.images == 0) throw ConfigError("synth.images must be positive");
    return s;
  }

  PlusConfig plus() const {
    PlusConfig p;
    p.target_n = size("plus.target");
    p.freeze_base = flag("plus.freeze_base");
    p.pre_channels = size("plus.pre_channels");
    p.post_channels = size("plus.post_channels");
    p.validate();
    return p;
  }

  EvalConfig eval() const {
    EvalConfig e;
    e.qp = integer("eval.qp");
    e.block_sizes = sizes("eval.block_sizes");
    e.policy = parse_block_policy(str("eval.policy"));
    e.intra.smoothing = flag("eval.smoothing");
    e.intra.mode_bits = real("eval.mode_bits");
    e.intra.network_flag_bits = real("eval.network_flag_bits");
    e.intra.sample_scale = real("eval.sample_scale");
    e.intra.satd = satd();
    e.split_flag_bits = real("eval.split_flag_bits");
    e.fill = static_cast<float>(real("fill_value"));
    e.threads = size("threads");
    e.validate();
    return e;
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace psrnn
