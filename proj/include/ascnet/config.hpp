#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ascnet/model.hpp"
#include "ascnet/synth.hpp"
#include "ascnet/trainer.hpp"

namespace ascnet {

// Flat declarative config: one `dotted.key = value` per line, `#` comments.
// CLI flags override file values which override defaults.
struct FlatConfig {
  std::map<std::string, std::string> values;

  static FlatConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    FlatConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
      };
      if (trim(line).empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config: missing '=' at " + path + ":" +
                                 std::to_string(lineno));
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw std::runtime_error("config: empty key at " + path + ":" +
                                 std::to_string(lineno));
      cfg.values[key] = value;
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values.count(key) > 0; }

  std::string str(const std::string& key, const std::string& dflt) const {
    auto it = values.find(key);
    return it == values.end() ? dflt : it->second;
  }
  long long integer(const std::string& key, long long dflt) const {
    auto it = values.find(key);
    if (it == values.end()) return dflt;
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw std::runtime_error("config: bad integer for " + key + ": " +
                               it->second);
    }
  }
  double real(const std::string& key, double dflt) const {
    auto it = values.find(key);
    if (it == values.end()) return dflt;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw std::runtime_error("config: bad number for " + key + ": " +
                               it->second);
    }
  }
  bool boolean(const std::string& key, bool dflt) const {
    auto it = values.find(key);
    if (it == values.end()) return dflt;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw std::runtime_error("config: bad bool for " + key + ": " + it->second);
  }
};

// Everything one run needs; assembled from defaults, config file, and flags.
struct RunConfig {
  // data sources (image-directory layout or volumetric manifest)
  std::string reference_dir, query_dir, masks_dir, manifest;
  int fold = 0;
  double train_fraction = 0.9;

  SynthConfig synth;
  NetworkSpec net;
  TrainingSchedule schedule;

  // segmentation
  Polarity polarity = Polarity::bright;
  int threshold = -1;  // -1 = auto
  bool post_process = false;
  std::string region_mask_dir;

  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;

  static RunConfig from(const FlatConfig& f) {
    RunConfig c;
    c.reference_dir = f.str("data.reference_dir", "");
    c.query_dir = f.str("data.query_dir", "");
    c.masks_dir = f.str("data.masks_dir", "");
    c.manifest = f.str("data.manifest", "");
    c.fold = int(f.integer("data.fold", 0));
    c.train_fraction = f.real("data.train_fraction", 0.9);

    c.synth.size = int(f.integer("synth.size", c.synth.size));
    c.synth.n_reference =
        int(f.integer("synth.n_reference", c.synth.n_reference));
    c.synth.n_query = int(f.integer("synth.n_query", c.synth.n_query));
    c.synth.polarity =
        polarity_from_string(f.str("synth.polarity", "bright"));
    c.synth.blob_radius_min =
        int(f.integer("synth.blob_radius_min", c.synth.blob_radius_min));
    c.synth.blob_radius_max =
        int(f.integer("synth.blob_radius_max", c.synth.blob_radius_max));

    c.net.input_h = int(f.integer("model.input_h", c.net.input_h));
    c.net.input_w = int(f.integer("model.input_w", c.net.input_w));
    if (f.has("model.encoder_widths")) {
      c.net.encoder_widths.clear();
      std::stringstream ss(f.str("model.encoder_widths", ""));
      std::string tok;
      while (std::getline(ss, tok, ','))
        c.net.encoder_widths.push_back(std::stoi(tok));
    }
    c.net.transition_width =
        int(f.integer("model.transition_width", c.net.transition_width));
    c.net.dropout_rate = float(f.real("model.dropout_rate", c.net.dropout_rate));

    c.schedule.stage1_cycles =
        int(f.integer("train.stage1_cycles", c.schedule.stage1_cycles));
    c.schedule.stage2_cycles =
        int(f.integer("train.stage2_cycles", c.schedule.stage2_cycles));
    c.schedule.epochs_per_d_step =
        int(f.integer("train.epochs_per_d_step", c.schedule.epochs_per_d_step));
    c.schedule.epochs_per_m_step =
        int(f.integer("train.epochs_per_m_step", c.schedule.epochs_per_m_step));
    c.schedule.batch_size =
        int(f.integer("train.batch_size", c.schedule.batch_size));
    c.schedule.learning_rate =
        float(f.real("train.learning_rate", c.schedule.learning_rate));
    c.schedule.loss_w_fence =
        float(f.real("train.loss_w_fence", c.schedule.loss_w_fence));
    c.schedule.loss_w_disjoint =
        float(f.real("train.loss_w_disjoint", c.schedule.loss_w_disjoint));
    c.schedule.loss_w_recon =
        float(f.real("train.loss_w_recon", c.schedule.loss_w_recon));
    c.schedule.stop_on_peak_separation = f.boolean(
        "train.stop_on_peak_separation", c.schedule.stop_on_peak_separation);

    c.polarity = polarity_from_string(f.str("segment.polarity", "bright"));
    const std::string thr = f.str("segment.threshold", "auto");
    c.threshold = thr == "auto" ? -1 : std::stoi(thr);
    c.post_process = f.boolean("segment.post_process", false);
    c.region_mask_dir = f.str("segment.region_mask", "");

    c.out_dir = f.str("out", "");
    if (f.has("seed")) {
      c.seed = std::uint64_t(f.integer("seed", 0));
      c.seed_set = true;
    }
    return c;
  }

  // Fully-resolved echo, written alongside every run's outputs.
  std::string echo() const {
    std::ostringstream out;
    char buf[64];
    auto put = [&](const std::string& key, const std::string& value) {
      out << key << " = " << value << "\n";
    };
    auto put_num = [&](const std::string& key, double v) {
      std::snprintf(buf, sizeof buf, "%.10g", v);
      put(key, buf);
    };
    put("data.reference_dir", reference_dir);
    put("data.query_dir", query_dir);
    put("data.masks_dir", masks_dir);
    put("data.manifest", manifest);
    put_num("data.fold", fold);
    put_num("data.train_fraction", train_fraction);
    std::string widths;
    for (std::size_t i = 0; i < net.encoder_widths.size(); ++i)
      widths += (i ? "," : "") + std::to_string(net.encoder_widths[i]);
    put("model.encoder_widths", widths);
    put_num("model.dropout_rate", net.dropout_rate);
    put_num("model.input_h", net.input_h);
    put_num("model.input_w", net.input_w);
    put_num("model.transition_width", net.transition_width);
    put("out", out_dir);
    put_num("seed", double(seed));
    put("segment.polarity", to_string(polarity));
    put("segment.post_process", post_process ? "true" : "false");
    put("segment.region_mask", region_mask_dir);
    put("segment.threshold",
        threshold < 0 ? "auto" : std::to_string(threshold));
    put_num("synth.blob_radius_max", synth.blob_radius_max);
    put_num("synth.blob_radius_min", synth.blob_radius_min);
    put_num("synth.n_query", synth.n_query);
    put_num("synth.n_reference", synth.n_reference);
    put("synth.polarity", to_string(synth.polarity));
    put_num("synth.size", synth.size);
    put_num("train.batch_size", schedule.batch_size);
    put_num("train.epochs_per_d_step", schedule.epochs_per_d_step);
    put_num("train.epochs_per_m_step", schedule.epochs_per_m_step);
    put_num("train.learning_rate", schedule.learning_rate);
    put_num("train.loss_w_disjoint", schedule.loss_w_disjoint);
    put_num("train.loss_w_fence", schedule.loss_w_fence);
    put_num("train.loss_w_recon", schedule.loss_w_recon);
    put_num("train.stage1_cycles", schedule.stage1_cycles);
    put_num("train.stage2_cycles", schedule.stage2_cycles);
    put("train.stop_on_peak_separation",
        schedule.stop_on_peak_separation ? "true" : "false");
    return out.str();
  }
};

}  // namespace ascnet
