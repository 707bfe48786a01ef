// psdet command-line driver.
//
//   psdet stats  --ann coco.json [--anchors anchors.json] --out cache.json
//   psdet assign --ann coco.json [--anchors anchors.json] --metrics ps,iou
//                --thr 0.7,0.3,0.3 --buckets 1024,9216 --out report_dir
//   psdet contrast-demo --levels 4 --batch 3 --dim 16 --tau 0.07 --alpha 0.1
//   psdet bench --anchors-n 100000 --gts-n 100
//   psdet synth --out suite.json
//
// Any flag can also come from a JSON file given with --config. Top-level keys
// apply to every subcommand, an object keyed by the subcommand name overrides
// them, and flags on the command line override both. Keys are the long flag
// names without dashes, e.g. {"assign": {"metrics": ["ps"], "thr": [0.7, 0.3, 0.3]}}.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 gradient check failed.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "psdet/errors.hpp"
#include "psdet/experiment.hpp"

namespace {

using nlohmann::json;
using namespace psdet;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerification = 3;

std::string scalar_text(const json& v) {
  if (v.is_string()) {
    return v.get<std::string>();
  }
  if (v.is_boolean()) {
    return v.get<bool>() ? "true" : "false";
  }
  if (v.is_number() || v.is_null()) {
    return v.dump();
  }
  throw UsageError(fmt::format("config value {} is not a scalar", v.dump()));
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw UsageError(fmt::format("cannot open config file {}", path));
  }
  try {
    json doc = json::parse(in);
    if (!doc.is_object()) {
      throw UsageError(fmt::format("{}: config must be a JSON object", path));
    }
    return doc;
  } catch (const json::parse_error& e) {
    throw UsageError(fmt::format("{}: invalid JSON: {}", path, e.what()));
  }
}

// Fills options the command line left unset from the config document.
void apply_config(CLI::App& sub, const json& doc) {
  json effective = json::object();
  for (const auto& [key, value] : doc.items()) {
    if (!value.is_object()) {
      effective[key] = value;
    }
  }
  if (const auto section = doc.find(sub.get_name()); section != doc.end() && section->is_object()) {
    for (const auto& [key, value] : section->items()) {
      effective[key] = value;
    }
  }
  for (CLI::Option* opt : sub.get_options()) {
    if (opt->count() > 0 || opt->get_lnames().empty()) {
      continue;
    }
    const auto it = effective.find(opt->get_lnames().front());
    if (it == effective.end()) {
      continue;
    }
    if (it->is_array()) {
      for (const auto& v : *it) {
        opt->add_result(scalar_text(v));
      }
    } else {
      opt->add_result(scalar_text(*it));
    }
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError(fmt::format("config key \"{}\": {}", it.key(), e.what()));
    }
  }
}

struct AssignFlags {
  std::string anchors_path;
  std::vector<std::string> metrics{"ps", "iou"};
  std::vector<double> thr{0.7, 0.3, 0.3};
  std::vector<double> buckets{1024.0, 9216.0};
  std::string mode = "pooled";
};

ExperimentConfig finish_experiment(ExperimentConfig cfg, const AssignFlags& flags) {
  if (!flags.anchors_path.empty()) {
    cfg.anchors = load_anchor_spec(flags.anchors_path);
  }
  cfg.metrics.clear();
  for (const auto& m : flags.metrics) {
    try {
      cfg.metrics.push_back(parse_metric(m));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (flags.thr.size() != 3) {
    throw UsageError("--thr takes three values: pos,neg,min_pos");
  }
  cfg.thresholds = {flags.thr[0], flags.thr[1], flags.thr[2]};
  cfg.buckets.edges = flags.buckets;
  cfg.mode = parse_assign_mode(flags.mode);
  if (cfg.annotations.empty()) {
    throw UsageError("--ann is required");
  }
  validate(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::default_logger());
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Pairwise-similarity anchor assignment and pyramid contrastive losses"};
  app.require_subcommand(1);
  std::string config_path;
  std::string log_level = "info";
  app.add_option("--config", config_path, "JSON file with flag values");
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();

  ExperimentConfig exp;
  AssignFlags flags;

  auto* stats = app.add_subcommand("stats", "Compute dataset normalizers m, n and write the cache");
  stats->add_option("--ann", exp.annotations, "COCO annotation file");
  stats->add_option("--anchors", flags.anchors_path, "anchor spec JSON (default: 5-level RPN grid)");
  stats->add_option("--out", exp.cache_path, "normalizer cache output");
  stats->add_option("--workers", exp.workers, "worker threads")->capture_default_str();

  auto* assign_cmd = app.add_subcommand("assign", "Run label assignment and write bucketed statistics");
  assign_cmd->add_option("--ann", exp.annotations, "COCO annotation file");
  assign_cmd->add_option("--anchors", flags.anchors_path, "anchor spec JSON (default: 5-level RPN grid)");
  assign_cmd->add_option("--metrics", flags.metrics, "ps,iou")->delimiter(',')->capture_default_str();
  assign_cmd->add_option("--thr", flags.thr, "pos,neg,min_pos thresholds")->delimiter(',')->capture_default_str();
  assign_cmd->add_option("--buckets", flags.buckets, "gt-area bucket edges")->delimiter(',')->capture_default_str();
  assign_cmd->add_option("--mode", flags.mode, "pooled|per-level")->capture_default_str();
  assign_cmd->add_option("--cache", exp.cache_path, "normalizer cache to reuse or write");
  assign_cmd->add_option("--workers", exp.workers, "worker threads")->capture_default_str();
  assign_cmd->add_option("--out", exp.out_dir, "output directory");

  ContrastDemoConfig demo;
  auto* demo_cmd = app.add_subcommand("contrast-demo", "Evaluate the pyramid contrastive losses and check gradients");
  demo_cmd->add_option("--levels", demo.pyramid.levels)->capture_default_str();
  demo_cmd->add_option("--batch", demo.pyramid.batch)->capture_default_str();
  demo_cmd->add_option("--dim", demo.dim)->capture_default_str();
  demo_cmd->add_option("--base-res", demo.pyramid.base_resolution)->capture_default_str();
  demo_cmd->add_option("--fused-channels", demo.pyramid.fused_channels)->capture_default_str();
  demo_cmd->add_option("--seed", demo.pyramid.seed)->capture_default_str();
  demo_cmd->add_option("--tau", demo.contrast.tau)->capture_default_str();
  demo_cmd->add_option("--alpha", demo.alpha)->capture_default_str();
  demo_cmd->add_option("--psrpn-loss", demo.psrpn_loss, "externally supplied RPN loss")->capture_default_str();
  demo_cmd->add_flag("--same-image-negatives", demo.contrast.include_same_image_other_levels,
                     "spatial negatives include the same image at other levels");
  demo_cmd->add_flag("--normalize", demo.contrast.normalize, "L2-normalize embeddings");
  demo_cmd->add_option("--fd-step", demo.fd_step)->capture_default_str();
  demo_cmd->add_option("--tol", demo.tolerance)->capture_default_str();
  demo_cmd->add_option("--batch-in", demo.batch_in, "NTFB batch file to evaluate");
  demo_cmd->add_option("--batch-out", demo.batch_out, "write the evaluated batch here");

  BenchConfig bench;
  auto* bench_cmd = app.add_subcommand("bench", "Time ps_matrix + assign on a synthetic workload");
  bench_cmd->add_option("--anchors-n", bench.anchors_n)->capture_default_str();
  bench_cmd->add_option("--gts-n", bench.gts_n)->capture_default_str();
  bench_cmd->add_option("--repeats", bench.repeats)->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed)->capture_default_str();

  SmallObjectSuite suite;
  std::string suite_out;
  auto* synth_cmd = app.add_subcommand("synth", "Write the seeded small-object scene suite as COCO JSON");
  synth_cmd->add_option("--images", suite.images)->capture_default_str();
  synth_cmd->add_option("--gts-per-image", suite.gts_per_image)->capture_default_str();
  synth_cmd->add_option("--size", suite.image_size)->capture_default_str();
  synth_cmd->add_option("--min-side", suite.min_side)->capture_default_str();
  synth_cmd->add_option("--max-side", suite.max_side)->capture_default_str();
  synth_cmd->add_option("--seed", suite.seed)->capture_default_str();
  synth_cmd->add_option("--out", suite_out, "output COCO JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(log_level));
    if (!config_path.empty()) {
      const json doc = load_config(config_path);
      for (CLI::App* sub : app.get_subcommands()) {
        apply_config(*sub, doc);
      }
    }

    if (stats->parsed()) {
      cmd_stats(finish_experiment(exp, flags), std::cout);
    } else if (assign_cmd->parsed()) {
      cmd_assign(finish_experiment(exp, flags), std::cout);
    } else if (demo_cmd->parsed()) {
      const auto outcome = cmd_contrast_demo(demo, std::cout);
      if (!outcome.gradcheck.passed) {
        spdlog::error("gradient check failed: max relative error {:.3e} > {:.1e}",
                      outcome.gradcheck.max_rel_error, outcome.gradcheck.tolerance);
        return kExitVerification;
      }
    } else if (bench_cmd->parsed()) {
      cmd_bench(bench, std::cout);
    } else if (synth_cmd->parsed()) {
      if (suite_out.empty()) {
        throw UsageError("synth needs --out");
      }
      DatasetIndex index;
      try {
        index = synth_small_object_suite(suite);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      std::ofstream out(suite_out);
      if (!out) {
        throw UsageError(fmt::format("cannot write {}", suite_out));
      }
      out << to_coco_json(index).dump() << '\n';
      fmt::print("wrote {} images, {} gts to {}\n", index.image_count(), index.gt_count(), suite_out);
    }
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    spdlog::error("{} ({})", e.what(), to_string(e.kind()));
    return kExitData;
  } catch (const std::invalid_argument& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  }
  return kExitOk;
}
