// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Failures print one line
//   error: <category>: <message>
// on stderr and exit nonzero (1 for runtime errors, 2 for usage errors).
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "auxadapt/harness.hpp"
#include "auxadapt/report.hpp"

namespace {

using namespace auxadapt;

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

void redirect_checkpoints(ExperimentConfig& c, const std::string& out) {
  for (NetConfig* n : {&c.mainnet, &c.auxnet}) n->checkpoint = (fs::path(out) / fs::path(n->checkpoint).filename()).string();
}

int cmd_pretrain(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out) {
  ExperimentConfig c = load_config(config);
  if (seed) c.mainnet.train.seed = c.auxnet.train.seed = *seed;
  if (!out.empty()) redirect_checkpoints(c, out);
  const PretrainReport r = pretrain_networks(c);
  std::printf("%s: %s held-out mIoU %.4f\n", c.mainnet.spec.name.c_str(), c.mainnet.checkpoint.c_str(),
              r.mainnet_held_out_miou);
  std::printf("%s: %s held-out mIoU %.4f\n", c.auxnet.spec.name.c_str(), c.auxnet.checkpoint.c_str(),
              r.auxnet_held_out_miou);
  return 0;
}

int cmd_generate(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out) {
  const ExperimentConfig c = load_config(config);
  const fs::path dir = out.empty() ? fs::path("videos") : fs::path(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(Error::Kind::io, "cannot create " + dir.string() + ": " + ec.message());
  const std::vector<std::uint64_t> seeds = seed ? std::vector<std::uint64_t>{*seed} : c.seeds;
  for (std::uint64_t s : seeds) {
    const fs::path p = dir / ("video-" + std::to_string(s) + ".aaxv");
    std::ostringstream os;
    write_video(os, generate_video(c.scene, s));
    write_file_atomic(p, os.str());
    std::printf("%s\n", p.string().c_str());
  }
  return 0;
}

int cmd_adapt(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out,
              const std::string& method) {
  ExperimentConfig c = load_config(config);
  if (!out.empty()) c.output_dir = out;
  RunFilter f;
  f.seed = seed;
  if (!method.empty()) f.method = method;
  run_experiment(c, f);
  std::cout << render_table(compare_methods({fs::path(c.output_dir)}));
  std::printf("results written to %s\n", c.output_dir.c_str());
  return 0;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out) {
  std::vector<fs::path> paths(dirs.begin(), dirs.end());
  const ComparisonTable t = compare_methods(paths);
  std::cout << render_table(t);
  if (!out.empty()) {
    std::ostringstream os;
    write_comparison_csv(os, t);
    write_file_atomic(out, os.str());
  }
  return 0;
}

int cmd_plot(const std::string& dir, const std::string& out) {
  const PlotFiles p = emit_plots(dir, out.empty() ? std::nullopt : std::optional<fs::path>(out));
  std::printf("%s\n%s\n", p.tc.string().c_str(), p.miou.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AuxAdapt toy benchmark: pretraining, synthetic video generation, test-time adaptation and reports"};
  app.require_subcommand(1);

  std::string config, out, method;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> dirs;

  auto* pre = app.add_subcommand("pretrain", "train MainNet and AuxNet and save their checkpoints");
  pre->add_option("--config", config, "experiment config (JSON)")->required();
  pre->add_option("--seed", seed, "training shuffle seed for both networks");
  pre->add_option("--out", out, "directory for the checkpoints (default: paths in the config)");

  auto* gen = app.add_subcommand("generate", "write benchmark videos as .aaxv files");
  gen->add_option("--config", config, "experiment config (JSON)")->required();
  gen->add_option("--seed", seed, "a single video seed (default: the config's seeds)");
  gen->add_option("--out", out, "output directory (default: videos)");

  auto* ada = app.add_subcommand("adapt", "run every configured method over every seed");
  ada->add_option("--config", config, "experiment config (JSON)")->required();
  ada->add_option("--seed", seed, "run only this seed");
  ada->add_option("--method", method, "run only this method or run name");
  ada->add_option("--out", out, "results directory (default: output_dir from the config)");

  auto* cmp = app.add_subcommand("compare", "seed-averaged comparison table of result directories");
  cmp->add_option("dirs", dirs, "result directories")->required();
  cmp->add_option("--out", out, "also write the table as CSV to this file");

  auto* plt = app.add_subcommand("plot", "per-frame TC and mIoU charts as SVG");
  plt->add_option("dir", dirs, "result directory")->required()->expected(1);
  plt->add_option("--out", out, "directory for the SVG files (default: the result directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: usage: %s\n", one_line(e.what()).c_str());
    return 2;
  }

  try {
    if (*pre) return cmd_pretrain(config, seed, out);
    if (*gen) return cmd_generate(config, seed, out);
    if (*ada) return cmd_adapt(config, seed, out, method);
    if (*cmp) return cmd_compare(dirs, out);
    if (*plt) return cmd_plot(dirs.at(0), out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", kind_name(e.kind()), one_line(e.what()).c_str());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", one_line(e.what()).c_str());
    return 1;
  }
  return 2;
}
