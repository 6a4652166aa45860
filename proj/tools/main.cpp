#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mmfuse/commands.hpp"
#include "mmfuse/config.hpp"
#include "mmfuse/errors.hpp"

namespace {

// Exit codes: 0 ok, 2 configuration, 3 domain/data, 4 numeric.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDomain = 3;
constexpr int kExitNumeric = 4;

struct VerbSpec {
  const char* name;
  const char* blurb;
  const char* out_key;  // config key the --out shorthand overrides
  void (*run)(const mmfuse::Config&, std::ostream&);
};

constexpr VerbSpec kVerbs[] = {
    {"gen-synthetic", "Generate a synthetic embedding archive plus label file", "paths.archive",
     mmfuse::cmd_gen_synthetic},
    {"train-adapter", "Fit the feature-space adapter between two archives", "paths.adapter",
     mmfuse::cmd_train_adapter},
    {"train-classifier", "Train the fusion classifier and report holdout metrics", "paths.model",
     mmfuse::cmd_train_classifier},
    {"infer", "Run supervised multi-agent inference over an archive", "paths.predictions",
     mmfuse::cmd_infer},
    {"evaluate", "Score a prediction file against reference labels", "paths.report",
     mmfuse::cmd_evaluate},
};

struct VerbArgs {
  std::string config_path;
  std::string seed;
  std::string out;
  bool strict_cv = false;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal emotion fusion pipeline"};
  app.require_subcommand(1);

  VerbArgs args[std::size(kVerbs)];
  const VerbSpec* chosen = nullptr;
  for (std::size_t i = 0; i < std::size(kVerbs); ++i) {
    const VerbSpec& verb = kVerbs[i];
    CLI::App* sub = app.add_subcommand(verb.name, verb.blurb);
    sub->add_option("--config", args[i].config_path, "Configuration file (key = value lines)")
        ->required();
    sub->add_option("--seed", args[i].seed, "Override the seed key");
    sub->add_option("--out", args[i].out, "Override the primary output path");
    if (std::string(verb.name) == "train-classifier")
      sub->add_flag("--strict-cv", args[i].strict_cv, "Refit scalers inside each CV fold");
    sub->callback([&chosen, &verb] { chosen = &verb; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const std::size_t idx = static_cast<std::size_t>(chosen - kVerbs);
  const VerbArgs& a = args[idx];

  // Flag shorthands become environment overrides before the config is parsed,
  // so they land in the digest like any other override.
  if (!a.seed.empty()) setenv(mmfuse::Config::env_name("seed").c_str(), a.seed.c_str(), 1);
  if (!a.out.empty()) setenv(mmfuse::Config::env_name(chosen->out_key).c_str(), a.out.c_str(), 1);
  if (a.strict_cv) setenv(mmfuse::Config::env_name("cv.strict").c_str(), "true", 1);

  try {
    const mmfuse::Config config = mmfuse::Config::parse_file(a.config_path);
    chosen->run(config, std::cout);
    return kExitOk;
  } catch (const mmfuse::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const mmfuse::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const mmfuse::DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const mmfuse::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDomain;
  }
}
