// Batch front end: synthesize or ingest data, train, segment, evaluate, and
// plot diagnostics.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ascnet/cli.hpp"

namespace {

struct CliArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;

  // train / data
  std::string reference_dir, query_dir, masks_dir, manifest, resume;
  std::optional<int> fold;

  // segment / plot
  std::string checkpoint;
  std::string threshold;  // "auto" or 0..255
  std::string polarity;
  bool post_process = false;
  std::string region_mask;
  std::string kind;
  int rows = 6;

  // eval
  std::string pred_dir, gt_dir;
  std::string grouping = "slice";
};

ascnet::RunConfig build_config(const CliArgs& args) {
  ascnet::FlatConfig flat;
  if (!args.config_path.empty())
    flat = ascnet::FlatConfig::parse_file(args.config_path);
  ascnet::RunConfig cfg = ascnet::RunConfig::from(flat);
  if (args.seed) {
    cfg.seed = *args.seed;
    cfg.seed_set = true;
  }
  if (!args.out.empty()) cfg.out_dir = args.out;
  if (!args.reference_dir.empty()) cfg.reference_dir = args.reference_dir;
  if (!args.query_dir.empty()) cfg.query_dir = args.query_dir;
  if (!args.masks_dir.empty()) cfg.masks_dir = args.masks_dir;
  if (!args.manifest.empty()) cfg.manifest = args.manifest;
  if (args.fold) cfg.fold = *args.fold;
  if (!args.threshold.empty())
    cfg.threshold = args.threshold == "auto" ? -1 : std::stoi(args.threshold);
  if (!args.polarity.empty())
    cfg.polarity = ascnet::polarity_from_string(args.polarity);
  if (args.post_process) cfg.post_process = true;
  if (!args.region_mask.empty()) cfg.region_mask_dir = args.region_mask;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ASC-Net: adversarial two-cut anomaly segmentation"};
  app.require_subcommand(1);
  app.fallthrough();

  CliArgs args;
  app.add_option("--config", args.config_path,
                 "Flat config file (dotted keys, `key = value`)");
  app.add_option("--seed", args.seed, "Run seed (required for synth/train)");
  app.add_option("--out", args.out, "Output directory");

  auto* synth = app.add_subcommand("synth", "Generate a labeled toy corpus");

  auto* train = app.add_subcommand("train", "Run the two-stage training");
  train->add_option("--reference", args.reference_dir,
                    "Reference (normal) image directory");
  train->add_option("--query", args.query_dir, "Query image directory");
  train->add_option("--manifest", args.manifest,
                    "JSON manifest of volumetric subjects");
  train->add_option("--fold", args.fold, "Cross-validation fold index");
  train->add_option("--resume", args.resume, "Continue from a checkpoint");

  auto* segment = app.add_subcommand("segment", "Threshold reconstructions");
  segment->add_option("--checkpoint", args.checkpoint, "Trained checkpoint")
      ->required();
  segment->add_option("--query", args.query_dir, "Query image directory");
  segment->add_option("--threshold", args.threshold,
                      "Intensity level 0..255 or `auto`");
  segment->add_option("--polarity", args.polarity, "bright or dark");
  segment->add_flag("--post-process", args.post_process,
                    "Apply the 5x5 opening");
  segment->add_option("--region-mask", args.region_mask,
                      "Directory of region masks mirroring query filenames");

  auto* eval = app.add_subcommand("eval", "Score masks against ground truth");
  eval->add_option("--pred", args.pred_dir, "Predicted mask directory")
      ->required();
  eval->add_option("--gt", args.gt_dir, "Ground-truth mask directory")
      ->required();
  eval->add_option("--grouping", args.grouping, "slice or subject");

  auto* plot = app.add_subcommand("plot", "Emit diagnostic figures");
  plot->add_option("--kind", args.kind, "histogram, panel, or disjoincy")
      ->required();
  plot->add_option("--checkpoint", args.checkpoint, "Trained checkpoint")
      ->required();
  plot->add_option("--query", args.query_dir, "Query image directory");
  plot->add_option("--masks", args.masks_dir, "Ground-truth mask directory");
  plot->add_option("--rows", args.rows, "Max samples per figure");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage problems are validation errors
  }

  try {
    ascnet::RunConfig cfg = build_config(args);
    if (synth->parsed()) {
      ascnet::cmd_synth(cfg);
    } else if (train->parsed()) {
      const std::string final_ckpt = ascnet::cmd_train(cfg, args.resume);
      std::cout << "[train] final checkpoint: " << final_ckpt << "\n";
    } else if (segment->parsed()) {
      ascnet::cmd_segment(cfg, args.checkpoint);
    } else if (eval->parsed()) {
      const auto grouping = args.grouping == "subject"
                                ? ascnet::Grouping::per_subject
                                : ascnet::Grouping::per_slice;
      if (args.grouping != "subject" && args.grouping != "slice")
        throw std::invalid_argument("validation: bad --grouping value");
      ascnet::cmd_eval(args.pred_dir, args.gt_dir, grouping, cfg.out_dir);
    } else if (plot->parsed()) {
      ascnet::cmd_plot(args.kind, cfg, args.checkpoint, args.rows);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
