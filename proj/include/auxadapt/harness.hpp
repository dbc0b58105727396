// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "auxadapt/adapt.hpp"
#include "auxadapt/checkpoint.hpp"
#include "auxadapt/config.hpp"
#include "auxadapt/metrics.hpp"
#include "auxadapt/pretrain.hpp"
#include "auxadapt/synthvid.hpp"

namespace auxadapt {

namespace fs = std::filesystem;

/// Writes to `path.tmp` and renames, creating parent directories.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) fail(Error::Kind::io, "cannot create " + path.parent_path().string() + ": " + ec.message());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) fail(Error::Kind::io, "cannot open " + tmp.string() + " for writing");
    os << content;
    if (!os) fail(Error::Kind::io, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) fail(Error::Kind::io, "cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Error::Kind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};

inline Stat summarize(const std::vector<double>& v) {
  if (v.empty()) fail(Error::Kind::argument, "summarize: no values");
  Stat s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double q = 0.0;
    for (double x : v) q += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(q / static_cast<double>(v.size() - 1));
  }
  return s;
}

inline json stat_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.std}}; }

// ---------------------------------------------------------------- pretraining

struct PretrainReport {
  TrainResult mainnet;
  TrainResult auxnet;
  double mainnet_held_out_miou = 0.0;
  double auxnet_held_out_miou = 0.0;
};

/// Held-out frames are i.i.d. frames of the benchmark scene (not of the
/// pretraining scene), drawn under their own seed.
inline std::vector<LabeledFrame> held_out_frames(const ExperimentConfig& c) {
  return generate_training_set(c.scene, c.pretraining.held_out_seed, c.pretraining.held_out_samples);
}

inline std::string history_path(const std::string& checkpoint) { return checkpoint + ".history.csv"; }

/// Trains both networks from scratch and saves them (with their loss
/// histories) to the configured checkpoint paths.
inline PretrainReport pretrain_networks(const ExperimentConfig& c) {
  c.validate();
  if (c.pretraining.held_out_seed == c.pretraining.data_seed)
    fail(Error::Kind::config, "pretraining: held_out_seed must differ from data_seed");
  const auto data = generate_training_set(c.pretraining.scene, c.pretraining.data_seed, c.pretraining.samples);
  PretrainReport r{pretrain(build_network<float>(c.mainnet.spec, c.mainnet.init_seed), data, c.mainnet.train),
                   pretrain(build_network<float>(c.auxnet.spec, c.auxnet.init_seed), data, c.auxnet.train)};
  const auto held = held_out_frames(c);
  r.mainnet_held_out_miou = evaluate_miou(r.mainnet.net, held);
  r.auxnet_held_out_miou = evaluate_miou(r.auxnet.net, held);
  for (const auto& [cfg, res] : {std::pair{&c.mainnet, &r.mainnet}, std::pair{&c.auxnet, &r.auxnet}}) {
    std::error_code ec;
    const fs::path p(cfg->checkpoint);
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
    save_network(cfg->checkpoint, res->net);
    std::ostringstream h;
    write_history_csv(h, res->history);
    write_file_atomic(history_path(cfg->checkpoint), h.str());
  }
  return r;
}

struct Checkpoints {
  Network<float> mainnet;
  Network<float> auxnet;
};

/// Loads both checkpoints, checking them against the configured layer
/// lists. Missing files are reported as missing_checkpoint unless the
/// config asks for pretraining on demand.
inline Checkpoints load_checkpoints(const ExperimentConfig& c) {
  const bool missing = !fs::exists(c.mainnet.checkpoint) || !fs::exists(c.auxnet.checkpoint);
  if (missing && c.pretrain_missing_checkpoints) {
    auto r = pretrain_networks(c);
    return {std::move(r.mainnet.net), std::move(r.auxnet.net)};
  }
  Checkpoints ck{load_network(c.mainnet.checkpoint), load_network(c.auxnet.checkpoint)};
  for (const auto& [net, cfg] : {std::pair{&ck.mainnet, &c.mainnet}, std::pair{&ck.auxnet, &c.auxnet}})
    if (net->spec().layers != cfg->spec.layers || net->spec().num_classes != cfg->spec.num_classes)
      fail(Error::Kind::config,
           cfg->checkpoint + " does not match the configured " + cfg->spec.name + " layers; rerun pretrain");
  return ck;
}

// ----------------------------------------------------------------- benchmark

struct SeedResult {
  std::uint64_t seed = 0;
  MetricsRecord metrics;
  std::size_t backward_passes = 0;
  std::optional<double> auxnet_miou_before;  // standalone AuxNet, auxadapt runs only
  std::optional<double> auxnet_miou_after;
};

struct RunResults {
  RunSpec run;
  std::vector<SeedResult> seeds;
};

struct ExperimentResult {
  std::string output_dir;
  std::string config_hash;
  std::string scene_hash;
  std::vector<RunResults> runs;
};

/// Mean per-frame mIoU of a network's own argmax over a video.
inline double standalone_miou(const Network<float>& net, const SyntheticVideo& v) {
  double s = 0.0;
  for (std::size_t t = 0; t < v.size(); ++t)
    s += mean_iou(argmax_decision(infer(net, v.frames[t])), v.labels[t], v.num_classes);
  return s / static_cast<double>(v.size());
}

inline std::string run_csv_path(const std::string& run, std::uint64_t seed) {
  return "runs/" + run + "/seed-" + std::to_string(seed) + ".csv";
}

inline double gmac_per_frame(const MetricsRecord& m) { return macs_per_frame(m); }

inline double backward_gmac_per_frame(const MetricsRecord& m) {
  return static_cast<double>(m.total_backward_macs()) / static_cast<double>(m.frames.size()) / 1e9;
}

inline json aggregate_json(const ExperimentResult& r) {
  json runs = json::array();
  for (const auto& run : r.runs) {
    json seeds = json::array();
    std::vector<double> tc, miou, gmac, bwd;
    for (const auto& s : run.seeds) {
      json e = {{"seed", s.seed},
                {"csv", run_csv_path(run.run.name, s.seed)},
                {"tc", s.metrics.tc()},
                {"miou", s.metrics.mean_miou()},
                {"gmac_per_frame", gmac_per_frame(s.metrics)},
                {"backward_gmac_per_frame", backward_gmac_per_frame(s.metrics)},
                {"backward_passes", s.backward_passes}};
      if (s.auxnet_miou_before) {
        e["auxnet_miou_before"] = *s.auxnet_miou_before;
        e["auxnet_miou_after"] = *s.auxnet_miou_after;
      }
      seeds.push_back(e);
      tc.push_back(s.metrics.tc());
      miou.push_back(s.metrics.mean_miou());
      gmac.push_back(gmac_per_frame(s.metrics));
      bwd.push_back(backward_gmac_per_frame(s.metrics));
    }
    runs.push_back({{"name", run.run.name},
                    {"adapt", detail::adapt_json(run.run.adapt)},
                    {"seeds", seeds},
                    {"tc", stat_json(summarize(tc))},
                    {"miou", stat_json(summarize(miou))},
                    {"gmac_per_frame", stat_json(summarize(gmac))},
                    {"backward_gmac_per_frame", stat_json(summarize(bwd))}});
  }
  return {{"config_hash", r.config_hash}, {"scene_hash", r.scene_hash}, {"runs", runs}};
}

struct RunFilter {
  std::optional<std::string> method;  // run name or method name
  std::optional<std::uint64_t> seed;
};

/// Every (run, seed) pair of the config, sequentially. Writes per-run CSVs,
/// aggregate.json and manifest.json under `output_dir`.
inline ExperimentResult run_experiment(const ExperimentConfig& c, const RunFilter& filter = {}) {
  c.validate();
  std::vector<RunSpec> runs;
  for (const auto& r : c.runs())
    if (!filter.method || *filter.method == r.name || *filter.method == method_name(r.adapt.method)) runs.push_back(r);
  if (runs.empty()) fail(Error::Kind::argument, "no configured run matches method '" + filter.method.value_or("") + "'");
  std::vector<std::uint64_t> seeds = c.seeds;
  if (filter.seed) seeds = {*filter.seed};

  const Checkpoints ck = load_checkpoints(c);
  ExperimentResult out{c.output_dir, config_hash(c), scene_hash(c.scene), {}};
  for (const auto& r : runs) out.runs.push_back({r, {}});

  const fs::path dir(c.output_dir);
  json files = json::array();
  for (std::uint64_t seed : seeds) {
    const SyntheticVideo video = generate_video(c.scene, seed);
    for (auto& run : out.runs) {
      const bool uses_aux = run.run.adapt.method == Method::auxadapt;
      RunResult rr = run_adaptation(video, ck.mainnet, uses_aux ? &ck.auxnet : nullptr, run.run.adapt);
      SeedResult s{seed, std::move(rr.metrics), rr.state.backward_passes, std::nullopt, std::nullopt};
      if (uses_aux) {
        s.auxnet_miou_before = standalone_miou(ck.auxnet, video);
        s.auxnet_miou_after = standalone_miou(rr.state.net, video);
      }
      std::ostringstream csv;
      write_metrics_csv(csv, s.metrics);
      write_file_atomic(dir / run_csv_path(run.run.name, seed), csv.str());
      run.seeds.push_back(std::move(s));
    }
  }

  json manifest_runs = json::array();
  for (const auto& run : out.runs) {
    json seeds_json = json::array();
    for (const auto& s : run.seeds) seeds_json.push_back({{"seed", s.seed}, {"csv", run_csv_path(run.run.name, s.seed)}});
    manifest_runs.push_back(
        {{"name", run.run.name}, {"method", method_name(run.run.adapt.method)}, {"seeds", seeds_json}});
  }
  const json manifest = {{"code_version", code_version},
                         {"config_hash", out.config_hash},
                         {"scene_hash", out.scene_hash},
                         {"config", config_json(c, false)},
                         {"checkpoints",
                          {{"mainnet", {{"path", c.mainnet.checkpoint}, {"checksum", hex64(checksum(ck.mainnet))}}},
                           {"auxnet", {{"path", c.auxnet.checkpoint}, {"checksum", hex64(checksum(ck.auxnet))}}}}},
                         {"runs", manifest_runs}};
  write_file_atomic(dir / "aggregate.json", aggregate_json(out).dump(2) + "\n");
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  return out;
}

inline ExperimentResult run_experiment(const std::string& config_path, const RunFilter& filter = {}) {
  return run_experiment(load_config(config_path), filter);
}

}  // namespace auxadapt
