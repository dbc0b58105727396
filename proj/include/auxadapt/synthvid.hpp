// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "auxadapt/error.hpp"
#include "auxadapt/rng.hpp"
#include "auxadapt/tensor.hpp"

namespace auxadapt {

using Color = std::array<double, 3>;

/// Scene distribution for the synthetic benchmark.
struct SceneConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t num_classes = 4;
  std::size_t num_shapes = 6;
  std::size_t min_size = 8;   // full extent in pixels
  std::size_t max_size = 20;
  int velocity_min = -2;      // per-component, pixels per frame
  int velocity_max = 2;
  double texture_amplitude = 0.08;  // static, moves with its object
  double color_spread = 0.05;       // per-instance colour deviation
  double jitter_amplitude = 0.1;    // per-frame global brightness offset, uniform in +-a
  double pixel_noise = 0.0;         // per-frame iid noise std
  std::size_t num_frames = 30;
  std::size_t max_downsample = 2;
  /// One colour per class; class 1 is the background. Empty means the
  /// built-in palette.
  std::vector<Color> class_colors;

  std::vector<Color> palette() const {
    static const std::vector<Color> builtin{{0.45, 0.50, 0.40}, {0.80, 0.30, 0.25}, {0.25, 0.35, 0.80},
                                            {0.60, 0.55, 0.30}, {0.70, 0.30, 0.70}, {0.30, 0.70, 0.70},
                                            {0.90, 0.85, 0.30}, {0.15, 0.15, 0.15}};
    if (!class_colors.empty()) return class_colors;
    return {builtin.begin(), builtin.begin() + static_cast<std::ptrdiff_t>(std::min(num_classes, builtin.size()))};
  }

  void validate() const {
    auto bad = [](const std::string& why) { fail(Error::Kind::config, "scene: " + why); };
    if (num_classes < 2) bad("need at least 2 classes");
    if (height == 0 || width == 0) bad("frame size must be positive");
    if (max_downsample == 0 || height % max_downsample || width % max_downsample)
      bad("frame size must be divisible by the maximum downsample factor " + std::to_string(max_downsample));
    if (min_size == 0 || min_size > max_size) bad("invalid shape size range");
    if (max_size > std::min(height, width)) bad("shapes of size " + std::to_string(max_size) + " cannot fit the frame");
    if (velocity_min > velocity_max) bad("invalid velocity range");
    if (num_frames == 0) bad("need at least one frame");
    if (palette().size() < num_classes) bad("palette has fewer colours than classes");
    if (texture_amplitude < 0 || color_spread < 0 || jitter_amplitude < 0 || pixel_noise < 0)
      bad("noise amplitudes must be non-negative");
  }

  friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

/// Backward flow vector: frame t pixel p came from p + (dx, dy) in t - 1.
struct FlowVec {
  int dx = 0;
  int dy = 0;
  friend bool operator==(const FlowVec&, const FlowVec&) = default;
};
using FlowField = Grid<FlowVec>;

struct SyntheticVideo {
  std::size_t num_classes = 0;
  std::vector<Tensor<float>> frames;  // (1, 3, H, W) in [0, 1]
  std::vector<SegMap> labels;         // class ids in 1..K
  std::vector<FlowField> flows;       // flows[t - 1] maps frame t to t - 1
  std::vector<Mask> validity;         // validity[t - 1], same indexing

  std::size_t size() const noexcept { return frames.size(); }
  std::size_t height() const { return frames.at(0).dim(2); }
  std::size_t width() const { return frames.at(0).dim(3); }

  friend bool operator==(const SyntheticVideo&, const SyntheticVideo&) = default;
};

enum class ShapeKind : std::uint8_t { rectangle, ellipse };

/// A moving object. Position is the integer centre at frame 0.
struct SceneObject {
  int class_id = 2;
  ShapeKind kind = ShapeKind::rectangle;
  int half_h = 4;
  int half_w = 4;
  int y = 0;
  int x = 0;
  int vy = 0;
  int vx = 0;
  Color color{};
  std::uint64_t texture_seed = 0;
};

struct Scene {
  Color background{};
  std::uint64_t background_seed = 0;
  std::vector<SceneObject> objects;  // later objects are drawn on top
};

namespace detail {

// Seed-stream tags. Benchmark videos and training frames draw from
// disjoint streams: mix(seed, tag) with different tags.
inline constexpr std::uint64_t video_stream = 0x5649444555ull;
inline constexpr std::uint64_t train_stream = 0x545241494Eull;
inline constexpr std::uint64_t jitter_stream = 0x4A49545445ull;

// Hash texture in [-1, 1] at integer coordinates.
inline double texture_at(std::uint64_t seed, int y, int x) {
  const std::uint64_t h = mix_seed(seed ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(y)) << 32 |
                                           static_cast<std::uint32_t>(x)));
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

inline bool covers(const SceneObject& o, int cy, int cx, int y, int x) {
  const int dy = y - cy, dx = x - cx;
  if (o.kind == ShapeKind::rectangle) return std::abs(dy) <= o.half_h && std::abs(dx) <= o.half_w;
  const double ny = static_cast<double>(dy) / (o.half_h + 0.5), nx = static_cast<double>(dx) / (o.half_w + 0.5);
  return ny * ny + nx * nx <= 1.0;
}

struct Position {
  int y = 0, x = 0;
};

// Centres per frame. Objects reflect off the frame borders; the step is
// always an integer translation so flow stays exact.
inline std::vector<std::vector<Position>> trajectories(const Scene& scene, std::size_t frames, std::size_t h,
                                                       std::size_t w) {
  std::vector<std::vector<Position>> pos(frames, std::vector<Position>(scene.objects.size()));
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    int y = o.y, x = o.x, vy = o.vy, vx = o.vx;
    for (std::size_t t = 0; t < frames; ++t) {
      if (t > 0) {
        if (y + vy < 0 || y + vy >= static_cast<int>(h)) vy = -vy;
        if (x + vx < 0 || x + vx >= static_cast<int>(w)) vx = -vx;
        y += vy;
        x += vx;
      }
      pos[t][i] = {y, x};
    }
  }
  return pos;
}

}  // namespace detail

/// Object id per pixel (0 = background, i + 1 = object i).
inline Grid<int> render_owners(const Scene& scene, const std::vector<detail::Position>& pos, std::size_t h,
                               std::size_t w) {
  Grid<int> owner(h, w, 0);
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    const int y0 = std::max(0, pos[i].y - o.half_h), y1 = std::min(static_cast<int>(h) - 1, pos[i].y + o.half_h);
    const int x0 = std::max(0, pos[i].x - o.half_w), x1 = std::min(static_cast<int>(w) - 1, pos[i].x + o.half_w);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (detail::covers(o, pos[i].y, pos[i].x, y, x)) owner(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = static_cast<int>(i + 1);
  }
  return owner;
}

/// Renders an explicit scene. Labels and flow depend only on geometry;
/// brightness jitter and pixel noise come from `appearance_seed`.
inline SyntheticVideo render_video(const Scene& scene, const SceneConfig& cfg, std::uint64_t appearance_seed) {
  cfg.validate();
  const std::size_t h = cfg.height, w = cfg.width, frames = cfg.num_frames;
  const auto pos = detail::trajectories(scene, frames, h, w);
  Rng jitter(mix_seed(appearance_seed, detail::jitter_stream));

  SyntheticVideo video;
  video.num_classes = cfg.num_classes;
  std::vector<Grid<int>> owners;
  for (std::size_t t = 0; t < frames; ++t) {
    owners.push_back(render_owners(scene, pos[t], h, w));
    const Grid<int>& owner = owners.back();
    SegMap labels(h, w, 1);
    Tensor<float> frame = Tensor<float>::nchw(1, 3, h, w);
    const double offset = cfg.jitter_amplitude > 0 ? jitter.uniform(-cfg.jitter_amplitude, cfg.jitter_amplitude) : 0.0;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const int id = owner(y, x);
        Color base = scene.background;
        double tex = detail::texture_at(scene.background_seed, static_cast<int>(y), static_cast<int>(x));
        if (id > 0) {
          const auto& o = scene.objects[static_cast<std::size_t>(id - 1)];
          const auto& c = pos[t][static_cast<std::size_t>(id - 1)];
          base = o.color;
          tex = detail::texture_at(o.texture_seed, static_cast<int>(y) - c.y, static_cast<int>(x) - c.x);
          labels(y, x) = o.class_id;
        }
        for (std::size_t ch = 0; ch < 3; ++ch) {
          double v = base[ch] + cfg.texture_amplitude * tex + offset;
          if (cfg.pixel_noise > 0) v += cfg.pixel_noise * jitter.normal();
          frame.at(0, ch, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    video.frames.push_back(std::move(frame));
    video.labels.push_back(std::move(labels));

    if (t == 0) continue;
    FlowField flow(h, w);
    Mask valid(h, w, 0);
    const Grid<int>& prev = owners[t - 1];
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const int id = owner(y, x);
        FlowVec f;
        if (id > 0) {
          const auto i = static_cast<std::size_t>(id - 1);
          f = {pos[t - 1][i].x - pos[t][i].x, pos[t - 1][i].y - pos[t][i].y};
        }
        flow(y, x) = f;
        const long sy = static_cast<long>(y) + f.dy, sx = static_cast<long>(x) + f.dx;
        const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<long>(h) && sx < static_cast<long>(w);
        valid(y, x) = inside && prev(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)) == id;
      }
    video.flows.push_back(std::move(flow));
    video.validity.push_back(std::move(valid));
  }
  return video;
}

/// Draws a random scene from the distribution.
inline Scene sample_scene(const SceneConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto colors = cfg.palette();
  auto jitter_color = [&](const Color& c) {
    Color out = c;
    for (auto& v : out) v = std::clamp(v + cfg.color_spread * rng.normal(), 0.0, 1.0);
    return out;
  };
  Scene scene;
  scene.background = colors[0];
  scene.background_seed = rng.next();
  for (std::size_t i = 0; i < cfg.num_shapes; ++i) {
    SceneObject o;
    o.class_id = static_cast<int>(rng.integer(2, static_cast<long long>(cfg.num_classes)));
    o.kind = rng.uniform() < 0.5 ? ShapeKind::rectangle : ShapeKind::ellipse;
    const auto size = [&] {
      return static_cast<int>(rng.integer(static_cast<long long>(cfg.min_size), static_cast<long long>(cfg.max_size)));
    };
    o.half_h = size() / 2;
    o.half_w = size() / 2;
    o.y = static_cast<int>(rng.integer(o.half_h, static_cast<long long>(cfg.height) - 1 - o.half_h));
    o.x = static_cast<int>(rng.integer(o.half_w, static_cast<long long>(cfg.width) - 1 - o.half_w));
    o.vy = static_cast<int>(rng.integer(cfg.velocity_min, cfg.velocity_max));
    o.vx = static_cast<int>(rng.integer(cfg.velocity_min, cfg.velocity_max));
    o.color = jitter_color(colors[static_cast<std::size_t>(o.class_id - 1)]);
    o.texture_seed = rng.next();
    scene.objects.push_back(o);
  }
  return scene;
}

/// Deterministic benchmark video for (cfg, seed).
inline SyntheticVideo generate_video(const SceneConfig& cfg, std::uint64_t seed) {
  Rng rng(mix_seed(seed, detail::video_stream));
  const Scene scene = sample_scene(cfg, rng);
  return render_video(scene, cfg, mix_seed(seed, detail::video_stream + 1));
}

struct LabeledFrame {
  Tensor<float> frame;
  SegMap labels;
};

/// i.i.d. single frames from the scene distribution, drawn from a seed
/// stream disjoint from generate_video's.
inline std::vector<LabeledFrame> generate_training_set(const SceneConfig& cfg, std::uint64_t seed, std::size_t n) {
  SceneConfig single = cfg;
  single.num_frames = 1;
  std::vector<LabeledFrame> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(mix_seed(seed, detail::train_stream), i));
    const Scene scene = sample_scene(single, rng);
    auto video = render_video(scene, single, rng.next());
    out.push_back({std::move(video.frames[0]), std::move(video.labels[0])});
  }
  return out;
}

struct WarpResult {
  SegMap segmentation;  // in frame t - 1 coordinates
  Mask valid;
};

/// Moves each valid pixel p of the frame-t segmentation to p + flow(p) in
/// frame t - 1. Target pixels that receive nothing are invalid; if two
/// sources land on the same target, the later one in raster order wins.
inline WarpResult exact_flow_warp(const SegMap& seg, const FlowField& flow, const Mask& validity) {
  if (!seg.same_dims(flow) || !seg.same_dims(validity)) fail(Error::Kind::shape, "exact_flow_warp: map sizes differ");
  WarpResult r{SegMap(seg.height, seg.width, 0), Mask(seg.height, seg.width, 0)};
  for (std::size_t y = 0; y < seg.height; ++y)
    for (std::size_t x = 0; x < seg.width; ++x) {
      if (!validity(y, x)) continue;
      const long ty = static_cast<long>(y) + flow(y, x).dy, tx = static_cast<long>(x) + flow(y, x).dx;
      if (ty < 0 || tx < 0 || ty >= static_cast<long>(seg.height) || tx >= static_cast<long>(seg.width)) continue;
      r.segmentation(static_cast<std::size_t>(ty), static_cast<std::size_t>(tx)) = seg(y, x);
      r.valid(static_cast<std::size_t>(ty), static_cast<std::size_t>(tx)) = 1;
    }
  return r;
}

// ---------------------------------------------------------------------------
// AAXV container: little-endian.
//   "AAXV" | u32 version | u32 T | u32 H | u32 W | u32 C | u32 K
//   T * C*H*W f32 frames | T * H*W u8 labels
//   (T-1) * H*W * (i32 dx, i32 dy) flows | (T-1) * H*W u8 validity
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t video_format_version = 1;

namespace detail {

template <typename V>
void put(std::ostream& os, V v) {
  static_assert(std::endian::native == std::endian::little, "container writer assumes a little-endian host");
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& is) {
  V v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(V))) fail(Error::Kind::format, "unexpected end of container");
  return v;
}

}  // namespace detail

inline void write_video(std::ostream& os, const SyntheticVideo& v) {
  const auto t = static_cast<std::uint32_t>(v.size());
  const auto h = static_cast<std::uint32_t>(v.height()), w = static_cast<std::uint32_t>(v.width());
  os.write("AAXV", 4);
  for (std::uint32_t x : {video_format_version, t, h, w, 3u, static_cast<std::uint32_t>(v.num_classes)}) detail::put(os, x);
  for (const auto& f : v.frames)
    for (float x : f.data()) detail::put(os, x);
  for (const auto& l : v.labels)
    for (int x : l.values) detail::put(os, static_cast<std::uint8_t>(x));
  for (const auto& f : v.flows)
    for (const auto& x : f.values) {
      detail::put(os, static_cast<std::int32_t>(x.dx));
      detail::put(os, static_cast<std::int32_t>(x.dy));
    }
  for (const auto& m : v.validity)
    for (auto x : m.values) detail::put(os, static_cast<std::uint8_t>(x ? 1 : 0));
  if (!os) fail(Error::Kind::io, "failed writing video container");
}

inline SyntheticVideo read_video(std::istream& is) {
  char magic[4]{};
  if (!is.read(magic, 4) || std::memcmp(magic, "AAXV", 4) != 0) fail(Error::Kind::format, "not an AAXV container");
  if (detail::get<std::uint32_t>(is) != video_format_version) fail(Error::Kind::format, "unsupported AAXV version");
  const auto t = detail::get<std::uint32_t>(is), h = detail::get<std::uint32_t>(is), w = detail::get<std::uint32_t>(is);
  const auto c = detail::get<std::uint32_t>(is), k = detail::get<std::uint32_t>(is);
  if (t == 0 || h == 0 || w == 0 || c != 3) fail(Error::Kind::format, "bad AAXV header");
  SyntheticVideo v;
  v.num_classes = k;
  for (std::uint32_t i = 0; i < t; ++i) {
    Tensor<float> f = Tensor<float>::nchw(1, c, h, w);
    for (auto& x : f.data()) x = detail::get<float>(is);
    v.frames.push_back(std::move(f));
  }
  for (std::uint32_t i = 0; i < t; ++i) {
    SegMap l(h, w);
    for (auto& x : l.values) x = detail::get<std::uint8_t>(is);
    v.labels.push_back(std::move(l));
  }
  for (std::uint32_t i = 0; i + 1 < t; ++i) {
    FlowField f(h, w);
    for (auto& x : f.values) {
      x.dx = detail::get<std::int32_t>(is);
      x.dy = detail::get<std::int32_t>(is);
    }
    v.flows.push_back(std::move(f));
  }
  for (std::uint32_t i = 0; i + 1 < t; ++i) {
    Mask m(h, w);
    for (auto& x : m.values) x = detail::get<std::uint8_t>(is);
    v.validity.push_back(std::move(m));
  }
  return v;
}

inline void save_video(const std::string& path, const SyntheticVideo& v) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(Error::Kind::io, "cannot open " + path + " for writing");
  write_video(os, v);
}

inline SyntheticVideo load_video(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Error::Kind::io, "cannot open " + path);
  return read_video(is);
}

}  // namespace auxadapt
