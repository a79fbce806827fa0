#include <CLI11.hpp>

#include "psrnn/cli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"PS-RNN intra prediction: data preparation, training, evaluation and demos"};
  app.require_subcommand(1);
  psrnn::cli::Options opts;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::string out;

  struct Verb {
    const char* name;
    const char* help;
    const char* args_help;
  };
  const Verb verbs[] = {
      {"prepare", "Degrade a manifest of images into a training archive", "manifest file"},
      {"train", "Train a PS-RNN (or PS-RNN+) model", nullptr},
      {"eval", "RDO comparison against the directional baseline", nullptr},
      {"demo", "Write context/prediction/baseline/truth PGM quads", "texture kinds"},
      {"compare-losses", "Paired SATD- vs MSE-trained models over several seeds", nullptr},
      {"ablate-units", "Validation and RDO metrics per number of recurrent units", nullptr},
  };
  std::vector<CLI::App*> subs;
  CLI::Option *seed_opt = nullptr, *threads_opt = nullptr, *out_opt = nullptr;
  for (const auto& v : verbs) {
    CLI::App* s = app.add_subcommand(v.name, v.help);
    s->add_option("--config", opts.config_path, "key=value config file")->check(CLI::ExistingFile);
    auto* so = s->add_option("--seed", seed, "master seed");
    auto* to = s->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    auto* oo = s->add_option("--out", out, "output directory");
    s->add_flag("--oracle", opts.oracle, "use the ground truth as the network prediction (eval)");
    s->add_option("--model", opts.models, "model file (repeatable)");
    s->add_option("--set", opts.assignments, "override a config key (key=value, repeatable)");
    if (v.args_help) s->add_option("args", opts.args, v.args_help);
    s->callback([&, so, to, oo] { seed_opt = so, threads_opt = to, out_opt = oo; });
    subs.push_back(s);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? psrnn::cli::kExitOk : psrnn::cli::kExitUsage;
  }

  if (seed_opt && seed_opt->count()) opts.seed = seed;
  if (threads_opt && threads_opt->count()) opts.threads = threads;
  if (out_opt && out_opt->count()) opts.out = out;
  for (auto* s : subs)
    if (s->parsed()) return psrnn::cli::run_command(s->get_name(), opts);
  return psrnn::cli::kExitUsage;
}
