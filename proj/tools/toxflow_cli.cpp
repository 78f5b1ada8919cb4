// toxflow command line: run the pipeline end to end or stage by stage.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 numeric failure, 1 anything else.

#include <cstdio>
#include <exception>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "toxflow/errors.hpp"
#include "toxflow/pipeline.hpp"

namespace {

using toxflow::RunConfig;

struct StageSpec {
  const char* name;
  const char* blurb;
  std::function<std::vector<std::string>(const RunConfig&)> fn;
};

void add_stage_command(CLI::App& app, const StageSpec& spec, std::string& config_path,
                       std::string& out_override, std::string& chosen) {
  CLI::App* sub = app.add_subcommand(spec.name, spec.blurb);
  sub->add_option("-c,--config", config_path, "JSON run configuration")->required();
  sub->add_option("-o,--out", out_override, "override the output directory");
  sub->callback([&chosen, name = std::string(spec.name)] { chosen = name; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"toxflow: online toxic-flow prediction and internalisation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  std::string chosen;

  const StageSpec stages[] = {
      {"generate", "synthesize or index market data tapes", toxflow::stage_generate},
      {"label", "mark each trade toxic/benign per horizon", toxflow::stage_label},
      {"featurize", "compute per-trade feature vectors", toxflow::stage_featurize},
      {"warmup", "train warmup models and extract the subspace",
       toxflow::stage_warmup},
      {"deploy", "stream deploy days through the online models",
       toxflow::stage_deploy},
      {"evaluate", "score predictions: AUC, ROC, smoothing", toxflow::stage_evaluate},
      {"backtest", "replay the internalise/externalise strategy",
       toxflow::stage_backtest},
  };
  for (const StageSpec& s : stages) {
    add_stage_command(app, s, config_path, out_override, chosen);
  }
  CLI::App* run = app.add_subcommand("run", "all stages in order, with a manifest");
  run->add_option("-c,--config", config_path, "JSON run configuration")->required();
  run->add_option("-o,--out", out_override, "override the output directory");
  run->callback([&chosen] { chosen = "run"; });

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = toxflow::load_run_config(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    cfg.validate();

    if (chosen == "run") {
      const toxflow::RunManifest manifest = toxflow::run_pipeline(cfg);
      std::size_t n = 0;
      for (const auto& s : manifest.stages) {
        std::fprintf(stderr, "%-9s %8.2fs  %zu artifacts\n", s.name.c_str(),
                     s.seconds, s.artifacts.size());
        n += s.artifacts.size();
      }
      std::printf("run_hash %s (%zu artifacts in %s)\n", manifest.run_hash.c_str(),
                  n, cfg.out_dir.c_str());
      return 0;
    }
    for (const StageSpec& s : stages) {
      if (chosen == s.name) {
        const std::vector<std::string> artifacts = s.fn(cfg);
        std::printf("%s: %zu artifacts in %s\n", s.name, artifacts.size(),
                    cfg.out_dir.c_str());
        return 0;
      }
    }
    std::fprintf(stderr, "unknown subcommand\n");
    return 1;
  } catch (const toxflow::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const toxflow::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const toxflow::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
