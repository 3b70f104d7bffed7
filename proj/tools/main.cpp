#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gazestab/config.hpp"
#include "gazestab/errors.hpp"
#include "gazestab/pipeline.hpp"

using namespace gazestab;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  int threads = -1;
};

std::string keys_footer(const std::vector<std::string>& prefixes) {
  std::string out = "\nConfig keys (set with --config FILE or --set key=value):\n";
  for (const ConfigKey* k : keys_with_prefixes(prefixes)) {
    out += "  " + k->key;
    if (k->key.size() < 34) out.append(34 - k->key.size(), ' ');
    out += " " + k->help + "\n";
  }
  return out;
}

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& description, Common& common,
                      const std::vector<std::string>& prefixes) {
  CLI::App* sub = app.add_subcommand(name, description);
  sub->add_option("--config", common.config_file, "key = value config file")->check(CLI::ExistingFile);
  sub->add_option("--set", common.overrides, "override a config key (key=value), repeatable");
  sub->add_option("--threads", common.threads, "worker threads; 1 runs fully serial");
  sub->footer(keys_footer(prefixes));
  return sub;
}

// Config file first, then the seed environment variable, then --set and
// --threads, so the command line always wins.
PipelineConfig resolve(const Common& common) {
  PipelineConfig cfg;
  if (!common.config_file.empty()) apply_config_file(cfg, common.config_file);
  apply_seed_env(cfg);
  apply_overrides(cfg, common.overrides);
  if (common.threads >= 0) {
    if (common.threads == 0) throw ConfigError("--threads must be at least 1");
    cfg.threads = static_cast<std::size_t>(common.threads);
  }
  cfg.validate();
  return cfg;
}

std::string pick(const std::string& flag, const std::string& configured, const char* what) {
  const std::string& p = flag.empty() ? configured : flag;
  if (p.empty()) throw ConfigError(std::string("missing ") + what + " path");
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaze fixation stabilization pipeline"};
  app.require_subcommand(1);
  Common common;
  std::string in, out, report, csv, checkpoint, log_path, trial_id, metric = "ai";

  auto* simulate = add_command(app, "simulate", "simulate a corpus of gaze trials", common, {"seed", "threads", "sim."});
  simulate->add_option("-o,--out", out, "output JSONL (default io.output)");

  auto* segment = add_command(app, "segment", "detect fixation onsets and clean a corpus", common,
                              {"threads", "fixation.", "cleaning."});
  segment->add_option("-i,--in", in, "input JSONL (default io.input)");
  segment->add_option("-o,--out", out, "cleaned JSONL (default io.output)");
  segment->add_option("-r,--report", report, "cleaning report CSV (default io.report)");

  auto* augment = add_command(app, "augment", "blend synthetic contracted trials into a corpus", common,
                              {"seed", "augment."});
  augment->add_option("-i,--in", in, "input JSONL (default io.input)");
  augment->add_option("-o,--out", out, "blended JSONL (default io.output)");

  auto* train_cmd = add_command(app, "train", "train a forecaster", common,
                                {"seed", "threads", "model.", "train.", "loss."});
  train_cmd->add_option("-i,--in", in, "training JSONL (default io.input)");
  train_cmd->add_option("-c,--checkpoint", checkpoint, "checkpoint output (default io.checkpoint)");
  train_cmd->add_option("-l,--log", log_path, "training log CSV (default io.log)");

  auto* evaluate = add_command(app, "evaluate", "score a checkpoint on a corpus", common, {"threads", "eval."});
  evaluate->add_option("-c,--checkpoint", checkpoint, "checkpoint (default io.checkpoint)");
  evaluate->add_option("-i,--in", in, "trials JSONL (default io.input)");
  evaluate->add_option("-r,--report", report, "JSON report output (default io.report)");
  evaluate->add_option("--csv", csv, "per-trial CSV output");

  auto* plot = add_command(app, "plot", "write an SVG of a trial or a report histogram", common, {"eval."});
  plot->add_option("-i,--in", in, "trials JSONL or JSON report (default io.input)");
  plot->add_option("-o,--out", out, "SVG output (default io.output)");
  plot->add_option("-c,--checkpoint", checkpoint, "checkpoint used to add predicted points");
  plot->add_option("--trial", trial_id, "trial id (default first trial)");
  plot->add_option("--metric", metric, "report metric: ci, ai, ad_pred or ad_raw");

  auto* gradcheck = add_command(app, "gradcheck", "compare analytic and finite-difference gradients", common,
                                {"seed", "model.", "loss.", "gradcheck."});

  auto* sweep = add_command(app, "sweep", "run the ablation grids and write a combined CSV", common,
                            {"seed", "threads", "sim.", "fixation.", "cleaning.", "augment.", "model.", "train.",
                             "loss.", "eval.", "sweep."});
  sweep->add_option("-o,--out", out, "sweep CSV (default io.output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const PipelineConfig cfg = resolve(common);
    const IoPaths& io = cfg.io;
    if (*simulate) {
      cmd_simulate(cfg, pick(out, io.output, "output"), std::cout);
    } else if (*segment) {
      cmd_segment(cfg, pick(in, io.input, "input"), pick(out, io.output, "output"), report.empty() ? io.report : report,
                  std::cout);
    } else if (*augment) {
      cmd_augment(cfg, pick(in, io.input, "input"), pick(out, io.output, "output"), std::cout);
    } else if (*train_cmd) {
      cmd_train(cfg, pick(in, io.input, "input"), pick(checkpoint, io.checkpoint, "checkpoint"),
                log_path.empty() ? io.log : log_path, std::cout);
    } else if (*evaluate) {
      cmd_evaluate(cfg, pick(checkpoint, io.checkpoint, "checkpoint"), pick(in, io.input, "input"),
                   report.empty() ? io.report : report, csv, std::cout);
    } else if (*plot) {
      PlotRequest req;
      req.input = pick(in, io.input, "input");
      req.out = pick(out, io.output, "output");
      if (!checkpoint.empty()) req.checkpoint = checkpoint;
      req.trial_id = trial_id;
      req.metric = metric;
      cmd_plot(cfg, req, std::cout);
    } else if (*gradcheck) {
      if (!cmd_gradcheck(cfg, std::cout)) {
        std::cerr << "error: gradcheck: relative error above tolerance\n";
        return 1;
      }
    } else if (*sweep) {
      const SweepResult r = cmd_sweep(cfg, pick(out, io.output, "output"), std::cout);
      for (const auto& [grid, ok] : r.reference_ok)
        if (!ok) return 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
