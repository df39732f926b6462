#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ascnet/image.hpp"

namespace ascnet {

// 2|P n G| / (|P| + |G|); both masks empty counts as a correct "no anomaly"
// call and scores 1.
inline double dice_score(const Mask& pred, const Mask& gt) {
  if (pred.height != gt.height || pred.width != gt.width)
    throw std::invalid_argument("dice_score: shape mismatch");
  std::uint64_t inter = 0, p = 0, g = 0;
  for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
    const bool a = pred.pixels[i] != 0, b = gt.pixels[i] != 0;
    inter += a && b;
    p += a;
    g += b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * double(inter) / double(p + g);
}

enum class Grouping { per_slice, per_subject };

struct EvalReport {
  std::vector<std::pair<std::string, double>> per_item;  // (id, dice)
  double mean_dice = 0.0;
  int fold_id = 0;
  bool post_processed = false;
};

// Per-slice Dice plus arithmetic mean. Subject grouping stacks a subject's
// slices into one 3D mask pair (pooled pixel counts) before scoring.
inline EvalReport evaluate_dataset(const std::vector<Mask>& preds,
                                   const std::vector<Mask>& gts,
                                   const std::vector<std::string>& ids,
                                   Grouping grouping) {
  if (preds.size() != gts.size() || preds.size() != ids.size())
    throw std::invalid_argument("evaluate_dataset: misaligned collections");
  if (preds.empty())
    throw std::invalid_argument("evaluate_dataset: empty input");
  EvalReport report;
  if (grouping == Grouping::per_slice) {
    for (std::size_t i = 0; i < preds.size(); ++i)
      report.per_item.emplace_back(ids[i], dice_score(preds[i], gts[i]));
  } else {
    struct Counts {
      std::uint64_t inter = 0, p = 0, g = 0;
    };
    std::map<std::string, Counts> by_subject;
    std::vector<std::string> order;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i].height != gts[i].height || preds[i].width != gts[i].width)
        throw std::invalid_argument("evaluate_dataset: shape mismatch");
      auto [it, inserted] = by_subject.try_emplace(ids[i]);
      if (inserted) order.push_back(ids[i]);
      auto& c = it->second;
      for (std::size_t k = 0; k < preds[i].pixels.size(); ++k) {
        const bool a = preds[i].pixels[k] != 0, b = gts[i].pixels[k] != 0;
        c.inter += a && b;
        c.p += a;
        c.g += b;
      }
    }
    for (const auto& id : order) {
      const auto& c = by_subject[id];
      const double d = (c.p + c.g) == 0
                           ? 1.0
                           : 2.0 * double(c.inter) / double(c.p + c.g);
      report.per_item.emplace_back(id, d);
    }
  }
  double acc = 0;
  for (const auto& [id, d] : report.per_item) acc += d;
  report.mean_dice = acc / double(report.per_item.size());
  return report;
}

// CSV rows `id,dice` followed by a summary line.
inline void write_eval_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("eval: cannot write " + path);
  out << "slice_id,dice\n";
  char buf[64];
  for (const auto& [id, d] : report.per_item) {
    std::snprintf(buf, sizeof buf, "%.6f", d);
    out << id << ',' << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.6f", report.mean_dice);
  out << "mean," << buf << '\n';
}

}  // namespace ascnet
