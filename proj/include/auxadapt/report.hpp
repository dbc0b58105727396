// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "auxadapt/harness.hpp"

namespace auxadapt {

struct LoadedRun {
  std::string name;
  std::string method;
  std::vector<std::pair<std::uint64_t, MetricsRecord>> seeds;
};

struct LoadedResults {
  fs::path dir;
  std::string scene_hash;
  std::vector<LoadedRun> runs;
};

/// Reads manifest.json and every per-run CSV it lists. Nothing is taken
/// from aggregate.json.
inline LoadedResults load_results(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath))
    fail(Error::Kind::io, dir.string() + " has no manifest.json; run the adapt subcommand to produce results");
  json m;
  try {
    m = json::parse(read_file(mpath));
    LoadedResults out{dir, m.at("scene_hash").get<std::string>(), {}};
    for (const auto& r : m.at("runs")) {
      LoadedRun run{r.at("name").get<std::string>(), r.at("method").get<std::string>(), {}};
      for (const auto& s : r.at("seeds")) {
        std::istringstream is(read_file(dir / s.at("csv").get<std::string>()));
        run.seeds.emplace_back(s.at("seed").get<std::uint64_t>(), read_metrics_csv(is));
      }
      if (run.seeds.empty()) fail(Error::Kind::format, mpath.string() + ": run '" + run.name + "' has no seeds");
      out.runs.push_back(std::move(run));
    }
    return out;
  } catch (const json::exception& e) {
    fail(Error::Kind::format, mpath.string() + ": " + e.what());
  }
}

struct ComparisonRow {
  std::string name;
  std::string method;
  std::size_t seeds = 0;
  Stat tc;
  Stat miou;
  Stat gmac_per_frame;
  Stat backward_gmac_per_frame;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;  // sorted by name
};

inline ComparisonRow summarize_run(const LoadedRun& run) {
  std::vector<double> tc, miou, gmac, bwd;
  for (const auto& [seed, m] : run.seeds) {
    if (m.frames.empty()) fail(Error::Kind::format, "run '" + run.name + "' seed " + std::to_string(seed) + " is empty");
    tc.push_back(m.tc());
    miou.push_back(m.mean_miou());
    gmac.push_back(gmac_per_frame(m));
    bwd.push_back(backward_gmac_per_frame(m));
  }
  return {run.name, run.method, run.seeds.size(), summarize(tc), summarize(miou), summarize(gmac), summarize(bwd)};
}

/// Seed-averaged rows over one or more result directories. Directories
/// must share the benchmark scene; a run name may appear only once.
inline ComparisonTable compare_methods(const std::vector<fs::path>& dirs) {
  if (dirs.empty()) fail(Error::Kind::argument, "compare: no result directories given");
  ComparisonTable t;
  std::optional<std::string> scene;
  std::map<std::string, fs::path> seen;
  for (const auto& d : dirs) {
    const LoadedResults r = load_results(d);
    if (scene && *scene != r.scene_hash)
      fail(Error::Kind::config, "compare: " + d.string() + " was produced with a different scene configuration (" +
                                    r.scene_hash + " vs " + *scene + ")");
    scene = r.scene_hash;
    for (const auto& run : r.runs) {
      if (auto [it, fresh] = seen.emplace(run.name, d); !fresh)
        fail(Error::Kind::argument,
             "compare: run '" + run.name + "' appears in both " + it->second.string() + " and " + d.string());
      t.rows.push_back(summarize_run(run));
    }
  }
  std::sort(t.rows.begin(), t.rows.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return t;
}

inline constexpr const char* comparison_csv_header =
    "name,method,seeds,tc_mean,tc_std,miou_mean,miou_std,gmac_per_frame_mean,gmac_per_frame_std,"
    "backward_gmac_per_frame_mean,backward_gmac_per_frame_std";

inline void write_comparison_csv(std::ostream& os, const ComparisonTable& t) {
  os << comparison_csv_header << '\n';
  for (const auto& r : t.rows) {
    os << r.name << ',' << r.method << ',' << r.seeds;
    for (const Stat* s : {&r.tc, &r.miou, &r.gmac_per_frame, &r.backward_gmac_per_frame})
      os << ',' << format_number(s->mean) << ',' << format_number(s->std);
    os << '\n';
  }
}

/// TC and mIoU in points, compute in GMAC per frame.
inline std::string render_table(const ComparisonTable& t) {
  auto fmt = [](const char* f, double a, double b) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, a, b);
    return std::string(buf);
  };
  std::vector<std::vector<std::string>> cells{{"method", "seeds", "TC", "mIoU", "GMAC/F", "bwd GMAC/F"}};
  for (const auto& r : t.rows)
    cells.push_back({r.name, std::to_string(r.seeds), fmt("%.2f +/- %.2f", 100 * r.tc.mean, 100 * r.tc.std),
                     fmt("%.2f +/- %.2f", 100 * r.miou.mean, 100 * r.miou.std),
                     fmt("%.6f +/- %.6f", r.gmac_per_frame.mean, r.gmac_per_frame.std),
                     fmt("%.6f +/- %.6f", r.backward_gmac_per_frame.mean, r.backward_gmac_per_frame.std)});
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& row : cells)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    std::string line;
    for (std::size_t i = 0; i < cells[r].size(); ++i) {
      const std::string& c = cells[r][i];
      const std::string pad(width[i] - c.size(), ' ');
      line += i == 0 ? c + pad : "  " + pad + c;  // first column left, numbers right
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w;
      out += std::string(total + 2 * (width.size() - 1), '-') + '\n';
    }
  }
  return out;
}

// --------------------------------------------------------------------- plots

struct Series {
  std::string name;
  std::vector<std::optional<double>> values;  // one per frame, 1-based frame = index + 1
};

namespace detail {

inline std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

inline constexpr const char* series_colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace detail

/// Score-vs-frame chart. The y axis is fixed to [0, 1]; values outside are
/// clamped. One polyline per series.
inline std::string render_line_chart(const std::string& title, const std::string& y_label,
                                     const std::vector<Series>& series) {
  if (series.empty()) fail(Error::Kind::argument, "render_line_chart: no series");
  std::size_t frames = 0;
  for (const auto& s : series) frames = std::max(frames, s.values.size());
  if (frames == 0) fail(Error::Kind::argument, "render_line_chart: no frames");

  const double W = 640, H = 400, left = 60, right = 170, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](std::size_t frame) {
    return frames == 1 ? left + pw / 2 : left + pw * static_cast<double>(frame - 1) / static_cast<double>(frames - 1);
  };
  auto py = [&](double v) { return top + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };
  using detail::fixed2;

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  o << "<text x=\"" << fixed2(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
    << detail::xml_escape(title) << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    o << "<line x1=\"" << fixed2(left) << "\" y1=\"" << fixed2(py(v)) << "\" x2=\"" << fixed2(left + pw) << "\" y2=\""
      << fixed2(py(v)) << "\" stroke=\"#dddddd\"/>\n";
    o << "<text x=\"" << fixed2(left - 6) << "\" y=\"" << fixed2(py(v) + 4) << "\" text-anchor=\"end\">" << fixed2(v)
      << "</text>\n";
  }
  const std::size_t step = std::max<std::size_t>(1, (frames + 5) / 6);
  for (std::size_t f = 1; f <= frames; f += step)
    o << "<text x=\"" << fixed2(px(f)) << "\" y=\"" << fixed2(top + ph + 18) << "\" text-anchor=\"middle\">" << f
      << "</text>\n";
  o << "<line x1=\"" << fixed2(left) << "\" y1=\"" << fixed2(top + ph) << "\" x2=\"" << fixed2(left + pw) << "\" y2=\""
    << fixed2(top + ph) << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << fixed2(left) << "\" y1=\"" << fixed2(top) << "\" x2=\"" << fixed2(left) << "\" y2=\""
    << fixed2(top + ph) << "\" stroke=\"black\"/>\n";
  o << "<text x=\"" << fixed2(left + pw / 2) << "\" y=\"" << fixed2(H - 10) << "\" text-anchor=\"middle\">frame</text>\n";
  o << "<text x=\"16\" y=\"" << fixed2(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << fixed2(top + ph / 2) << ")\">" << detail::xml_escape(y_label) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = detail::series_colors[i % std::size(detail::series_colors)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t t = 0; t < series[i].values.size(); ++t) {
      if (!series[i].values[t]) continue;
      o << (first ? "" : " ") << fixed2(px(t + 1)) << ',' << fixed2(py(*series[i].values[t]));
      first = false;
    }
    o << "\"/>\n";
    const double ly = top + 10 + 18.0 * static_cast<double>(i);
    o << "<line x1=\"" << fixed2(left + pw + 12) << "\" y1=\"" << fixed2(ly) << "\" x2=\"" << fixed2(left + pw + 32)
      << "\" y2=\"" << fixed2(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << fixed2(left + pw + 38) << "\" y=\"" << fixed2(ly + 4) << "\">"
      << detail::xml_escape(series[i].name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// Per-frame means over seeds, one series per run, sorted by run name.
inline std::pair<std::vector<Series>, std::vector<Series>> per_frame_series(const LoadedResults& r) {
  std::vector<const LoadedRun*> runs;
  for (const auto& run : r.runs) runs.push_back(&run);
  std::sort(runs.begin(), runs.end(), [](auto* a, auto* b) { return a->name < b->name; });
  std::vector<Series> tc, miou;
  for (const LoadedRun* run : runs) {
    std::size_t frames = 0;
    for (const auto& [seed, m] : run->seeds) frames = std::max(frames, m.frames.size());
    std::vector<double> tsum(frames, 0.0), msum(frames, 0.0);
    std::vector<std::size_t> tn(frames, 0), mn(frames, 0);
    for (const auto& [seed, m] : run->seeds)
      for (std::size_t t = 0; t < m.frames.size(); ++t) {
        msum[t] += m.frames[t].miou;
        ++mn[t];
        if (m.frames[t].tc) {
          tsum[t] += *m.frames[t].tc;
          ++tn[t];
        }
      }
    Series ts{run->name, {}}, ms{run->name, {}};
    for (std::size_t t = 0; t < frames; ++t) {
      ts.values.push_back(tn[t] ? std::optional<double>(tsum[t] / static_cast<double>(tn[t])) : std::nullopt);
      ms.values.push_back(mn[t] ? std::optional<double>(msum[t] / static_cast<double>(mn[t])) : std::nullopt);
    }
    tc.push_back(std::move(ts));
    miou.push_back(std::move(ms));
  }
  return {std::move(tc), std::move(miou)};
}

struct PlotFiles {
  fs::path tc;
  fs::path miou;
};

/// Writes tc_per_frame.svg and miou_per_frame.svg into `out_dir`
/// (defaults to the results directory).
inline PlotFiles emit_plots(const fs::path& results_dir, std::optional<fs::path> out_dir = std::nullopt) {
  const LoadedResults r = load_results(results_dir);
  if (r.runs.empty()) fail(Error::Kind::argument, "plot: " + results_dir.string() + " contains no runs");
  const auto [tc, miou] = per_frame_series(r);
  const fs::path dir = out_dir.value_or(results_dir);
  PlotFiles files{dir / "tc_per_frame.svg", dir / "miou_per_frame.svg"};
  write_file_atomic(files.tc, render_line_chart("Temporal consistency per frame", "TC", tc));
  write_file_atomic(files.miou, render_line_chart("mIoU per frame", "mIoU", miou));
  return files;
}

}  // namespace auxadapt
