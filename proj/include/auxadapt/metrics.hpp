// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "auxadapt/error.hpp"
#include "auxadapt/synthvid.hpp"
#include "auxadapt/tensor.hpp"

namespace auxadapt {

/// Mean IoU over classes that occur in pred or gt within the valid
/// pixels. Classes absent from both are skipped.
inline double mean_iou(const SegMap& pred, const SegMap& gt, std::size_t num_classes, const Mask* valid = nullptr) {
  if (!pred.same_dims(gt)) fail(Error::Kind::shape, "mean_iou: prediction and ground truth differ in size");
  if (valid && !valid->same_dims(gt)) fail(Error::Kind::shape, "mean_iou: mask size differs");
  std::vector<std::uint64_t> inter(num_classes + 1, 0), uni(num_classes + 1, 0);
  std::size_t counted = 0;
  for (std::size_t p = 0; p < gt.size(); ++p) {
    if (valid && !(*valid)[p]) continue;
    const int a = pred[p], b = gt[p];
    if (a < 1 || b < 1 || static_cast<std::size_t>(a) > num_classes || static_cast<std::size_t>(b) > num_classes)
      fail(Error::Kind::argument, "mean_iou: class id outside 1.." + std::to_string(num_classes));
    ++counted;
    if (a == b) {
      ++inter[static_cast<std::size_t>(a)];
      ++uni[static_cast<std::size_t>(a)];
    } else {
      ++uni[static_cast<std::size_t>(a)];
      ++uni[static_cast<std::size_t>(b)];
    }
  }
  if (counted == 0) fail(Error::Kind::empty_selection, "mean_iou: no valid pixels");
  double total = 0.0;
  std::size_t classes = 0;
  for (std::size_t c = 1; c <= num_classes; ++c) {
    if (uni[c] == 0) continue;
    total += static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
    ++classes;
  }
  return total / static_cast<double>(classes);
}

/// Consistency of frame t with frame t - 1: warp seg_t back through the
/// exact flow and score it against seg_{t-1} on the pixels the warp
/// reaches. Empty when no pixel survives the warp.
inline std::optional<double> frame_consistency(const SegMap& seg_t, const SegMap& seg_prev, const FlowField& flow,
                                               const Mask& validity, std::size_t num_classes) {
  const auto warped = exact_flow_warp(seg_t, flow, validity);
  if (count_true(warped.valid) == 0) return std::nullopt;
  return mean_iou(warped.segmentation, seg_prev, num_classes, &warped.valid);
}

/// Average of frame_consistency over t = 2..T (1-based).
inline double temporal_consistency(const std::vector<SegMap>& segs, const std::vector<FlowField>& flows,
                                   const std::vector<Mask>& validity, std::size_t num_classes) {
  if (segs.size() < 2) fail(Error::Kind::argument, "temporal_consistency: need at least two frames");
  if (flows.size() + 1 != segs.size() || validity.size() != flows.size())
    fail(Error::Kind::argument, "temporal_consistency: expected one flow per frame transition");
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 1; t < segs.size(); ++t) {
    if (auto tc = frame_consistency(segs[t], segs[t - 1], flows[t - 1], validity[t - 1], num_classes)) {
      total += *tc;
      ++n;
    }
  }
  if (n == 0) fail(Error::Kind::empty_selection, "temporal_consistency: no frame has valid correspondences");
  return total / static_cast<double>(n);
}

/// Max softmax probability per pixel.
template <typename T>
ScoreMap confidence_map(const Tensor<T>& logits) {
  require_single_image(logits, "confidence_map");
  const std::size_t k = logits.dim(1), h = logits.dim(2), w = logits.dim(3), plane = h * w;
  ScoreMap c(h, w);
  for (std::size_t p = 0; p < plane; ++p) {
    double zmax = static_cast<double>(logits[p]);
    for (std::size_t j = 1; j < k; ++j) zmax = std::max(zmax, static_cast<double>(logits[j * plane + p]));
    double se = 0.0;
    for (std::size_t j = 0; j < k; ++j) se += std::exp(static_cast<double>(logits[j * plane + p]) - zmax);
    c[p] = 1.0 / se;
  }
  return c;
}

/// 1 - max softmax.
template <typename T>
ScoreMap uncertainty_map(const Tensor<T>& logits) {
  ScoreMap u = confidence_map(logits);
  for (auto& v : u.values) v = 1.0 - v;
  return u;
}

inline double mean_of(const ScoreMap& m) {
  double s = 0.0;
  for (double v : m.values) s += v;
  return m.values.empty() ? 0.0 : s / static_cast<double>(m.values.size());
}

struct FrameMetrics {
  std::size_t frame = 0;  // 1-based
  double miou = 0.0;
  std::optional<double> tc;  // undefined for the first frame
  double mean_conf = 0.0;
  std::uint64_t fwd_macs = 0;
  std::uint64_t bwd_macs = 0;

  friend bool operator==(const FrameMetrics&, const FrameMetrics&) = default;
};

struct MetricsRecord {
  std::vector<FrameMetrics> frames;

  double mean_miou() const {
    double s = 0.0;
    for (const auto& f : frames) s += f.miou;
    return frames.empty() ? 0.0 : s / static_cast<double>(frames.size());
  }

  double tc() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& f : frames)
      if (f.tc) {
        s += *f.tc;
        ++n;
      }
    return n ? s / static_cast<double>(n) : 0.0;
  }

  std::uint64_t total_macs() const {
    std::uint64_t s = 0;
    for (const auto& f : frames) s += f.fwd_macs + f.bwd_macs;
    return s;
  }

  std::uint64_t total_backward_macs() const {
    std::uint64_t s = 0;
    for (const auto& f : frames) s += f.bwd_macs;
    return s;
  }

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

/// (forward + backward MACs of every network) / T, in units of 1e9.
inline double macs_per_frame(const MetricsRecord& record) {
  if (record.frames.empty()) fail(Error::Kind::argument, "macs_per_frame: empty run");
  return static_cast<double>(record.total_macs()) / static_cast<double>(record.frames.size()) / 1e9;
}

/// Shortest round-trip decimal form, so CSV values reproduce exactly.
inline std::string format_number(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

inline constexpr const char* metrics_csv_header = "frame,miou,tc,mean_conf,fwd_macs,bwd_macs";

inline void write_metrics_csv(std::ostream& os, const MetricsRecord& r) {
  os << metrics_csv_header << '\n';
  for (const auto& f : r.frames) {
    os << f.frame << ',' << format_number(f.miou) << ',' << (f.tc ? format_number(*f.tc) : std::string()) << ','
       << format_number(f.mean_conf) << ',' << f.fwd_macs << ',' << f.bwd_macs << '\n';
  }
}

inline MetricsRecord read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != metrics_csv_header)
    fail(Error::Kind::format, "metrics CSV: expected header '" + std::string(metrics_csv_header) + "'");
  MetricsRecord r;
  auto to_double = [](const std::string& s) {
    double v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) fail(Error::Kind::format, "metrics CSV: bad number '" + s + "'");
    return v;
  };
  auto to_u64 = [](const std::string& s) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) fail(Error::Kind::format, "metrics CSV: bad integer '" + s + "'");
    return v;
  };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() != 6) fail(Error::Kind::format, "metrics CSV: expected 6 columns in '" + line + "'");
    FrameMetrics f;
    f.frame = static_cast<std::size_t>(to_u64(cells[0]));
    f.miou = to_double(cells[1]);
    if (!cells[2].empty()) f.tc = to_double(cells[2]);
    f.mean_conf = to_double(cells[3]);
    f.fwd_macs = to_u64(cells[4]);
    f.bwd_macs = to_u64(cells[5]);
    r.frames.push_back(f);
  }
  return r;
}

}  // namespace auxadapt
