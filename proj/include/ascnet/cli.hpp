#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ascnet/config.hpp"
#include "ascnet/dataset_io.hpp"
#include "ascnet/evaluate.hpp"
#include "ascnet/figures.hpp"
#include "ascnet/segment.hpp"
#include "ascnet/trainer.hpp"

namespace ascnet {

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

inline void require_dir(const std::string& path, const std::string& what) {
  if (path.empty())
    throw std::invalid_argument("validation: " + what + " not configured");
  if (!std::filesystem::is_directory(path))
    throw std::invalid_argument("validation: " + what +
                                " is not a directory: " + path);
}

inline void require_seed(const RunConfig& cfg) {
  if (!cfg.seed_set)
    throw std::invalid_argument(
        "validation: seed is required (--seed or `seed =` in the config)");
}

inline void echo_config(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  write_text((std::filesystem::path(cfg.out_dir) / "config.resolved.txt")
                 .string(),
             cfg.echo());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth: write a labeled toy corpus in the dataset directory layout.
// ---------------------------------------------------------------------------
inline void cmd_synth(const RunConfig& cfg) {
  detail::require_seed(cfg);
  if (cfg.out_dir.empty())
    throw std::invalid_argument("validation: --out is required");
  auto corpus = synth_generate(cfg.synth, cfg.seed);
  namespace fs = std::filesystem;
  save_dataset_dir((fs::path(cfg.out_dir) / "reference").string(),
                   corpus.reference);
  save_dataset_dir((fs::path(cfg.out_dir) / "query").string(), corpus.query);
  fs::create_directories(fs::path(cfg.out_dir) / "masks");
  for (std::size_t i = 0; i < corpus.query.size(); ++i) {
    const auto& s = corpus.query.slices[i];
    char name[128];
    std::snprintf(name, sizeof name, "%s_%04d.pgm", s.subject_id.c_str(),
                  s.slice_index);
    write_mask_pgm((fs::path(cfg.out_dir) / "masks" / name).string(),
                   corpus.query.masks[i]);
  }
  detail::echo_config(cfg);
}

namespace detail {

inline SliceDataset resize_to_spec(SliceDataset ds, const NetworkSpec& spec) {
  for (auto& s : ds.slices)
    if (s.height != spec.input_h || s.width != spec.input_w)
      s = resize_slice(s, spec.input_h, spec.input_w);
  return ds;
}

struct ResolvedData {
  SliceDataset reference, query;
};

inline ResolvedData resolve_training_data(const RunConfig& cfg) {
  ResolvedData data;
  if (!cfg.manifest.empty()) {
    if (!std::filesystem::exists(cfg.manifest))
      throw std::invalid_argument("validation: manifest not found: " +
                                  cfg.manifest);
    ManifestOptions opt;
    opt.resize_h = cfg.net.input_h;
    opt.resize_w = cfg.net.input_w;
    auto subjects = load_manifest(cfg.manifest, opt);
    auto folds = split_crossval(subjects, 2, cfg.train_fraction,
                                Rng(cfg.seed).fork(10).next());
    if (cfg.fold < 0 || cfg.fold >= int(folds.size()))
      throw std::invalid_argument("validation: fold out of range");
    data.reference = std::move(folds[cfg.fold].train_reference);
    data.query = std::move(folds[cfg.fold].train_query);
    data.query.masks.clear();  // labels never enter training
  } else {
    require_dir(cfg.reference_dir, "data.reference_dir");
    require_dir(cfg.query_dir, "data.query_dir");
    data.reference =
        load_dataset_dir(cfg.reference_dir, DatasetRole::reference);
    data.query = load_dataset_dir(cfg.query_dir, DatasetRole::query);
  }
  data.reference = resize_to_spec(std::move(data.reference), cfg.net);
  data.query = resize_to_spec(std::move(data.query), cfg.net);
  if (data.reference.size() == 0 || data.query.size() == 0)
    throw std::invalid_argument("validation: empty training datasets");
  return data;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// train: two-stage cyclic adversarial training with per-cycle checkpoints,
// a loss CSV and per-step progress lines.
// ---------------------------------------------------------------------------
inline std::string cmd_train(const RunConfig& cfg,
                             const std::string& resume_path = {},
                             std::ostream* log = &std::cout) {
  detail::require_seed(cfg);
  if (cfg.out_dir.empty())
    throw std::invalid_argument("validation: --out is required");
  auto data = detail::resolve_training_data(cfg);
  auto [reference, query] =
      balance_sets(data.reference, data.query, Rng(cfg.seed).fork(11).next());

  std::unique_ptr<TrainingState<float>> state;
  if (!resume_path.empty()) {
    state = load_checkpoint<float>(resume_path);
  } else {
    TrainingSchedule sch = cfg.schedule;
    sch.seed = cfg.seed;
    state = init_training<float>(cfg.net, sch);
  }

  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  std::ofstream csv((fs::path(cfg.out_dir) / "losses.csv").string(),
                    resume_path.empty() ? std::ios::trunc : std::ios::app);
  if (resume_path.empty()) csv << "step,stage,cycle,loss_name,value\n";

  TrainHooks<float> hooks;
  hooks.on_step = [&](const StepLog& s) {
    char buf[64];
    for (const auto& [name, value] : s.losses) {
      std::snprintf(buf, sizeof buf, "%.8g", value);
      csv << s.step << ',' << s.stage << ',' << s.cycle << ',' << name << ','
          << buf << '\n';
    }
    if (log) {
      *log << "[train] step=" << s.step << " stage=" << s.stage
           << " cycle=" << s.cycle << " phase=" << s.phase;
      for (const auto& [name, value] : s.losses) {
        std::snprintf(buf, sizeof buf, "%.6g", value);
        *log << ' ' << name << '=' << buf;
      }
      std::snprintf(buf, sizeof buf, "%.3f", s.ms_per_slice);
      *log << " ms_per_slice=" << buf << '\n';
    }
  };
  hooks.on_cycle_end = [&](TrainingState<float>& st) {
    const auto path = fs::path(cfg.out_dir) /
                      ("ckpt_cycle" + std::to_string(st.cycle) + ".ascnet");
    save_checkpoint(path.string(), st);
    auto report = peak_separation_monitor(st, query);
    if (log)
      *log << "[train] cycle " << st.cycle << " done; recon histogram peaks="
           << report.n_peaks << " separated=" << (report.separated ? "yes" : "no")
           << "\n";
  };

  run_training(*state, reference, query, hooks);
  const auto final_path = fs::path(cfg.out_dir) / "ckpt_final.ascnet";
  save_checkpoint(final_path.string(), *state);
  detail::echo_config(cfg);
  return final_path.string();
}

// ---------------------------------------------------------------------------
// segment: reconstruct every query slice, pick the pooled threshold (unless
// fixed), and write one mask per slice plus sidecar metadata.
// ---------------------------------------------------------------------------
inline std::vector<SegmentationResult> cmd_segment(
    const RunConfig& cfg, const std::string& checkpoint_path,
    std::ostream* log = &std::cout) {
  if (cfg.out_dir.empty())
    throw std::invalid_argument("validation: --out is required");
  if (!std::filesystem::exists(checkpoint_path))
    throw std::invalid_argument("validation: checkpoint not found: " +
                                checkpoint_path);
  detail::require_dir(cfg.query_dir, "data.query_dir");
  auto state = load_checkpoint<float>(checkpoint_path);
  auto query = detail::resize_to_spec(
      load_dataset_dir(cfg.query_dir, DatasetRole::query), state->spec);

  std::vector<Mask> regions;
  const std::vector<Mask>* regions_ptr = nullptr;
  if (!cfg.region_mask_dir.empty()) {
    detail::require_dir(cfg.region_mask_dir, "segment.region_mask");
    regions = load_mask_dir(cfg.region_mask_dir, cfg.query_dir);
    regions_ptr = &regions;
  }

  auto outputs = forward_dataset(state->main, query, cfg.schedule.batch_size);
  std::vector<ImageSlice> recons;
  recons.reserve(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i)
    recons.push_back(tensor_to_slice(outputs[i].recon, 0,
                                     query.slices[i].subject_id,
                                     query.slices[i].slice_index));

  SegmentOptions opt;
  opt.polarity = cfg.polarity;
  opt.threshold = cfg.threshold;
  opt.post_process = cfg.post_process;
  auto results = segment_dataset(recons, opt, regions_ptr);

  namespace fs = std::filesystem;
  fs::create_directories(fs::path(cfg.out_dir) / "masks");
  fs::create_directories(fs::path(cfg.out_dir) / "recon");
  nlohmann::json files = nlohmann::json::array();
  const auto query_files = detail::sorted_pgm_files(cfg.query_dir);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto name = query_files[i].filename().string();
    write_mask_pgm((fs::path(cfg.out_dir) / "masks" / name).string(),
                   results[i].mask);
    write_slice_pgm((fs::path(cfg.out_dir) / "recon" / name).string(),
                    recons[i]);
    files.push_back(name);
  }
  nlohmann::json meta = {
      {"threshold_level", results.front().threshold_level},
      {"polarity", to_string(cfg.polarity)},
      {"post_processed", cfg.post_process},
      {"checkpoint", checkpoint_path},
      {"files", files}};
  detail::write_text(
      (fs::path(cfg.out_dir) / "segment_meta.json").string(), meta.dump(2));
  detail::echo_config(cfg);
  if (log)
    *log << "[segment] " << results.size() << " masks at threshold "
         << results.front().threshold_level << "\n";
  return results;
}

// ---------------------------------------------------------------------------
// eval: Dice of predicted masks against ground truth, per slice or stacked
// per subject; writes report.csv and prints the mean.
// ---------------------------------------------------------------------------
inline EvalReport cmd_eval(const std::string& pred_dir,
                           const std::string& gt_dir, Grouping grouping,
                           const std::string& out_dir,
                           std::ostream* log = &std::cout) {
  detail::require_dir(pred_dir, "pred dir");
  detail::require_dir(gt_dir, "gt dir");
  const auto pred_files = detail::sorted_pgm_files(pred_dir);
  std::vector<Mask> preds, gts;
  std::vector<std::string> ids;
  for (const auto& path : pred_files) {
    const auto gt_path = std::filesystem::path(gt_dir) / path.filename();
    if (!std::filesystem::exists(gt_path))
      throw std::invalid_argument("validation: filename mismatch, missing " +
                                  gt_path.string());
    preds.push_back(read_mask_pgm(path.string()));
    gts.push_back(read_mask_pgm(gt_path.string()));
    const auto stem = path.stem().string();
    ids.push_back(grouping == Grouping::per_subject
                      ? detail::parse_slice_name(stem).first
                      : stem);
  }
  auto report = evaluate_dataset(preds, gts, ids, grouping);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_eval_csv(report,
                   (std::filesystem::path(out_dir) / "report.csv").string());
  }
  if (log) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", report.mean_dice);
    *log << "[eval] items=" << report.per_item.size() << " mean_dice=" << buf
         << "\n";
  }
  return report;
}

// ---------------------------------------------------------------------------
// plot: diagnostic figures (histogram sheets, branch panels, disjoincy
// strips) from a checkpoint and a query directory.
// ---------------------------------------------------------------------------
inline void cmd_plot(const std::string& kind, const RunConfig& cfg,
                     const std::string& checkpoint_path, int max_rows = 6) {
  if (cfg.out_dir.empty())
    throw std::invalid_argument("validation: --out is required");
  detail::require_dir(cfg.query_dir, "data.query_dir");
  if (kind != "histogram" && kind != "panel" && kind != "disjoincy")
    throw std::invalid_argument("validation: unknown plot kind: " + kind);
  if (!std::filesystem::exists(checkpoint_path))
    throw std::invalid_argument("validation: checkpoint not found: " +
                                checkpoint_path);
  auto state = load_checkpoint<float>(checkpoint_path);
  auto query = detail::resize_to_spec(
      load_dataset_dir(cfg.query_dir, DatasetRole::query), state->spec);
  if (int(query.slices.size()) > max_rows)
    query.slices.resize(max_rows);

  std::vector<Mask> gts;
  if (!cfg.masks_dir.empty() && kind == "panel") {
    auto all = load_mask_dir(cfg.masks_dir, cfg.query_dir);
    gts.assign(all.begin(), all.begin() + query.slices.size());
  }

  auto outputs = forward_dataset(state->main, query, cfg.schedule.batch_size);
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);

  if (kind == "histogram") {
    // Alternating input/reconstruction rows.
    std::vector<ImageSlice> rows;
    for (std::size_t i = 0; i < query.slices.size(); ++i) {
      rows.push_back(query.slices[i]);
      rows.push_back(tensor_to_slice(outputs[i].recon, 0));
    }
    emit_histogram_figure(rows,
                          (fs::path(cfg.out_dir) / "histogram.pgm").string());
    return;
  }
  if (kind == "disjoincy") {
    emit_disjoincy_strip(tensor_to_slice(outputs[0].fence, 0),
                         tensor_to_slice(outputs[0].wild, 0),
                         (fs::path(cfg.out_dir) / "disjoincy.pgm").string());
    return;
  }

  // panel
  std::vector<ImageSlice> recons;
  for (auto& o : outputs) recons.push_back(tensor_to_slice(o.recon, 0));
  SegmentOptions opt;
  opt.polarity = cfg.polarity;
  opt.threshold = cfg.threshold;
  opt.post_process = cfg.post_process;
  auto results = segment_dataset(recons, opt);
  std::vector<BranchPanelRow> rows;
  for (std::size_t i = 0; i < query.slices.size(); ++i) {
    BranchPanelRow row;
    row.input = query.slices[i];
    row.fence = tensor_to_slice(outputs[i].fence, 0);
    row.wild = tensor_to_slice(outputs[i].wild, 0);
    row.recon = recons[i];
    row.gt = gts.empty() ? nullptr : &gts[i];
    row.est = results[i].mask;
    rows.push_back(std::move(row));
  }
  emit_branch_panel(rows, (fs::path(cfg.out_dir) / "panel.pgm").string());
}

}  // namespace ascnet
