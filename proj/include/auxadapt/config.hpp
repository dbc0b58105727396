// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "auxadapt/adapt.hpp"
#include "auxadapt/error.hpp"
#include "auxadapt/metrics.hpp"
#include "auxadapt/network.hpp"
#include "auxadapt/pretrain.hpp"
#include "auxadapt/synthvid.hpp"

namespace auxadapt {

using json = nlohmann::json;

inline constexpr const char* code_version = "0.1.0";

struct NetConfig {
  NetworkSpec spec;
  std::uint64_t init_seed = 1;
  std::string checkpoint;
  TrainConfig train;

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

struct PretrainData {
  SceneConfig scene;  // starts as a copy of the benchmark scene
  std::size_t samples = 300;
  std::uint64_t data_seed = 7;
  std::size_t held_out_samples = 20;
  std::uint64_t held_out_seed = 8;

  friend bool operator==(const PretrainData&, const PretrainData&) = default;
};

/// One named benchmark run: a method plus its adaptation settings.
struct RunSpec {
  std::string name;
  AdaptConfig adapt;

  friend bool operator==(const RunSpec&, const RunSpec&) = default;
};

struct SweepConfig {
  std::vector<std::string> enabled;  // subset of {"update_period", "confidence_threshold"}
  std::vector<std::size_t> update_period{1, 2, 5, 10};
  std::vector<double> confidence_threshold{0.9, 0.8};

  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct ExperimentConfig {
  SceneConfig scene;
  PretrainData pretraining;
  NetConfig mainnet{default_mainnet_spec(4), 1, "checkpoints/mainnet.aaxn", {}};
  NetConfig auxnet{default_auxnet_spec(4), 2, "checkpoints/auxnet.aaxn", {}};
  AdaptConfig adapt;
  std::vector<RunSpec> methods;
  SweepConfig sweeps;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output_dir = "results";
  bool pretrain_missing_checkpoints = false;

  /// Base runs followed by the enabled sweeps, in configuration order.
  std::vector<RunSpec> runs() const {
    std::vector<RunSpec> out = methods;
    for (const auto& which : sweeps.enabled) {
      if (which == "update_period") {
        for (std::size_t p : sweeps.update_period) {
          AdaptConfig a = adapt;
          a.method = Method::auxadapt;
          a.update_period = p;
          out.push_back({"auxadapt-p" + std::to_string(p), a});
        }
      } else if (which == "confidence_threshold") {
        for (double thr : sweeps.confidence_threshold) {
          AdaptConfig a = adapt;
          a.method = Method::auxadapt;
          a.confidence_threshold = thr;
          out.push_back({"auxadapt-thr" + format_number(thr), a});
        }
      }
    }
    return out;
  }

  void validate() const {
    scene.validate();
    pretraining.scene.validate();
    if (pretraining.scene.num_classes != scene.num_classes)
      fail(Error::Kind::config, "pretraining.scene: class count differs from the benchmark scene");
    if (pretraining.samples == 0 || pretraining.held_out_samples == 0)
      fail(Error::Kind::config, "pretraining: sample counts must be positive");
    for (const NetConfig* n : {&mainnet, &auxnet}) {
      try {
        validate_spec(n->spec);
      } catch (const Error& e) {
        fail(Error::Kind::config, e.what());
      }
      if (n->checkpoint.empty()) fail(Error::Kind::config, n->spec.name + ": checkpoint path is empty");
      n->train.validate();
    }
    adapt.validate();
    if (seeds.empty()) fail(Error::Kind::config, "seeds: at least one seed is required");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
      fail(Error::Kind::config, "seeds: duplicates");
    if (output_dir.empty()) fail(Error::Kind::config, "output_dir is empty");
    for (const auto& w : sweeps.enabled)
      if (w != "update_period" && w != "confidence_threshold")
        fail(Error::Kind::config, "sweeps.enabled: unknown sweep '" + w + "'");
    const auto all = runs();
    if (all.empty()) fail(Error::Kind::config, "methods: nothing to run");
    std::set<std::string> names;
    for (const auto& r : all) {
      if (r.name.empty() || r.name.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.-") !=
                                std::string::npos)
        fail(Error::Kind::config, "run name '" + r.name + "' must use only letters, digits, '_', '.', '-'");
      if (!names.insert(r.name).second) fail(Error::Kind::config, "duplicate run name '" + r.name + "'");
      r.adapt.validate();
    }
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

// Reads keys from one JSON object; anything left unread is a typo.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(Error::Kind::config, where() + " must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json* take(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  template <typename T>
  void read(const char* key, T& out) {
    if (const json* v = take(key)) out = convert<T>(*v, sub(key));
  }

  void read_opt(const char* key, std::optional<double>& out) {
    if (const json* v = take(key)) {
      if (v->is_null())
        out.reset();
      else
        out = convert<double>(*v, sub(key));
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(Error::Kind::config, "unknown key " + sub(it.key().c_str()));
  }

  std::string sub(const char* key) const { return path_.empty() ? std::string(key) : path_ + "." + key; }

  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(Error::Kind::config, path + " must be true or false");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(Error::Kind::config, path + " must be a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(Error::Kind::config, path + " must be a number");
      return v.get<T>();
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        fail(Error::Kind::config, path + " must be a non-negative integer");
      return v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(Error::Kind::config, path + " must be an integer");
      return v.get<T>();
    } else {
      if (!v.is_array()) fail(Error::Kind::config, path + " must be an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(convert<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
      return out;
    }
  }

 private:
  std::string where() const { return path_.empty() ? std::string("config") : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline MomentumMode parse_momentum_mode(const std::string& s, const std::string& path) {
  if (s == "fixed") return MomentumMode::fixed;
  if (s == "motion_adaptive") return MomentumMode::motion_adaptive;
  fail(Error::Kind::config, path + ": expected \"fixed\" or \"motion_adaptive\", got \"" + s + "\"");
}

inline const char* momentum_mode_name(MomentumMode m) { return m == MomentumMode::fixed ? "fixed" : "motion_adaptive"; }

inline SceneConfig read_scene(const json& j, SceneConfig s, const std::string& path) {
  ObjectReader r(j, path);
  r.read("height", s.height);
  r.read("width", s.width);
  r.read("num_classes", s.num_classes);
  r.read("num_shapes", s.num_shapes);
  r.read("min_size", s.min_size);
  r.read("max_size", s.max_size);
  r.read("velocity_min", s.velocity_min);
  r.read("velocity_max", s.velocity_max);
  r.read("texture_amplitude", s.texture_amplitude);
  r.read("color_spread", s.color_spread);
  r.read("jitter_amplitude", s.jitter_amplitude);
  r.read("pixel_noise", s.pixel_noise);
  r.read("num_frames", s.num_frames);
  r.read("max_downsample", s.max_downsample);
  if (const json* c = r.take("class_colors")) {
    s.class_colors.clear();
    for (const auto& row : ObjectReader::convert<std::vector<std::vector<double>>>(*c, r.sub("class_colors"))) {
      if (row.size() != 3) fail(Error::Kind::config, r.sub("class_colors") + ": each colour needs 3 components");
      s.class_colors.push_back({row[0], row[1], row[2]});
    }
  }
  r.finish();
  return s;
}

inline json scene_json(const SceneConfig& s) {
  json j = {{"height", s.height},
            {"width", s.width},
            {"num_classes", s.num_classes},
            {"num_shapes", s.num_shapes},
            {"min_size", s.min_size},
            {"max_size", s.max_size},
            {"velocity_min", s.velocity_min},
            {"velocity_max", s.velocity_max},
            {"texture_amplitude", s.texture_amplitude},
            {"color_spread", s.color_spread},
            {"jitter_amplitude", s.jitter_amplitude},
            {"pixel_noise", s.pixel_noise},
            {"num_frames", s.num_frames},
            {"max_downsample", s.max_downsample}};
  if (!s.class_colors.empty()) {
    j["class_colors"] = json::array();
    for (const auto& c : s.class_colors) j["class_colors"].push_back({c[0], c[1], c[2]});
  }
  return j;
}

inline TrainConfig read_train(const json& j, TrainConfig t, const std::string& path) {
  ObjectReader r(j, path);
  r.read("epochs", t.epochs);
  r.read("batch_size", t.batch_size);
  r.read("learning_rate", t.learning_rate);
  r.read("momentum", t.momentum);
  r.read("seed", t.seed);
  r.read("log_every", t.log_every);
  r.read("calibration_samples", t.calibration_samples);
  r.finish();
  return t;
}

inline json train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},     {"batch_size", t.batch_size}, {"learning_rate", t.learning_rate},
          {"momentum", t.momentum}, {"seed", t.seed},             {"log_every", t.log_every},
          {"calibration_samples", t.calibration_samples}};
}

inline NetConfig read_net(const json& j, NetConfig n, const std::string& path) {
  ObjectReader r(j, path);
  r.read("name", n.spec.name);
  if (const json* l = r.take("layers")) {
    n.spec.layers.clear();
    for (const auto& s : ObjectReader::convert<std::vector<std::string>>(*l, r.sub("layers")))
      n.spec.layers.push_back(LayerSpec::parse(s));
  }
  r.read("init_seed", n.init_seed);
  r.read("checkpoint", n.checkpoint);
  if (const json* t = r.take("train")) n.train = read_train(*t, n.train, r.sub("train"));
  r.finish();
  return n;
}

inline json net_json(const NetConfig& n, bool with_paths) {
  json layers = json::array();
  for (const auto& l : n.spec.layers) layers.push_back(l.to_string());
  json j = {{"name", n.spec.name}, {"layers", layers}, {"init_seed", n.init_seed}, {"train", train_json(n.train)}};
  if (with_paths) j["checkpoint"] = n.checkpoint;
  return j;
}

// Reads the adaptation keys of `r` into `a`; the caller finishes `r`.
inline void read_adapt_keys(ObjectReader& r, AdaptConfig& a) {
  r.read("learning_rate", a.learning_rate);
  if (const json* m = r.take("momentum_mode"))
    a.momentum_mode = parse_momentum_mode(ObjectReader::convert<std::string>(*m, r.sub("momentum_mode")),
                                          r.sub("momentum_mode"));
  r.read("momentum", a.momentum);
  r.read("update_period", a.update_period);
  r.read_opt("confidence_threshold", a.confidence_threshold);
  if (const json* m = r.take("method")) a.method = parse_method(ObjectReader::convert<std::string>(*m, r.sub("method")));
}

inline json adapt_json(const AdaptConfig& a) {
  return {{"learning_rate", a.learning_rate},
          {"momentum_mode", momentum_mode_name(a.momentum_mode)},
          {"momentum", a.momentum},
          {"update_period", a.update_period},
          {"confidence_threshold", a.confidence_threshold ? json(*a.confidence_threshold) : json(nullptr)},
          {"method", method_name(a.method)}};
}

}  // namespace detail

/// Fills defaults for every absent key. Unknown keys are rejected.
inline ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  detail::ObjectReader r(j, "");
  if (const json* s = r.take("scene")) c.scene = detail::read_scene(*s, c.scene, "scene");
  c.pretraining.scene = c.scene;
  if (const json* p = r.take("pretraining")) {
    detail::ObjectReader pr(*p, "pretraining");
    if (const json* s = pr.take("scene")) c.pretraining.scene = detail::read_scene(*s, c.scene, "pretraining.scene");
    pr.read("samples", c.pretraining.samples);
    pr.read("data_seed", c.pretraining.data_seed);
    pr.read("held_out_samples", c.pretraining.held_out_samples);
    pr.read("held_out_seed", c.pretraining.held_out_seed);
    pr.finish();
  }
  c.mainnet.spec = default_mainnet_spec(c.scene.num_classes);
  c.auxnet.spec = default_auxnet_spec(c.scene.num_classes);
  if (const json* n = r.take("mainnet")) c.mainnet = detail::read_net(*n, c.mainnet, "mainnet");
  if (const json* n = r.take("auxnet")) c.auxnet = detail::read_net(*n, c.auxnet, "auxnet");
  c.mainnet.spec.num_classes = c.auxnet.spec.num_classes = c.scene.num_classes;
  if (const json* a = r.take("adapt")) {
    detail::ObjectReader ar(*a, "adapt");
    detail::read_adapt_keys(ar, c.adapt);
    ar.finish();
  }
  if (const json* m = r.take("methods")) {
    if (!m->is_array()) fail(Error::Kind::config, "methods must be an array");
    for (std::size_t i = 0; i < m->size(); ++i) {
      const json& e = (*m)[i];
      const std::string path = "methods[" + std::to_string(i) + "]";
      RunSpec run{"", c.adapt};
      if (e.is_string()) {
        run.adapt.method = parse_method(e.get<std::string>());
        run.name = e.get<std::string>();
      } else {
        detail::ObjectReader er(e, path);
        detail::read_adapt_keys(er, run.adapt);
        if (!er.has("method")) fail(Error::Kind::config, path + ".method is required");
        run.name = method_name(run.adapt.method);
        er.read("name", run.name);
        er.finish();
      }
      c.methods.push_back(std::move(run));
    }
  } else {
    for (Method m : {Method::frozen, Method::auxadapt}) {
      AdaptConfig a = c.adapt;
      a.method = m;
      c.methods.push_back({method_name(m), a});
    }
  }
  if (const json* s = r.take("sweeps")) {
    detail::ObjectReader sr(*s, "sweeps");
    sr.read("enabled", c.sweeps.enabled);
    sr.read("update_period", c.sweeps.update_period);
    sr.read("confidence_threshold", c.sweeps.confidence_threshold);
    sr.finish();
  }
  r.read("seeds", c.seeds);
  r.read("output_dir", c.output_dir);
  r.read("pretrain_missing_checkpoints", c.pretrain_missing_checkpoints);
  r.finish();
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(Error::Kind::io, "cannot open config " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    fail(Error::Kind::config, path + ": " + e.what());
  }
  return parse_config(j);
}

/// Fully resolved form. With `with_paths` false, only fields that change
/// results are kept; that form feeds the config hash.
inline json config_json(const ExperimentConfig& c, bool with_paths = true) {
  json methods = json::array();
  for (const auto& m : c.methods) {
    json e = detail::adapt_json(m.adapt);
    e["name"] = m.name;
    methods.push_back(e);
  }
  json j = {{"scene", detail::scene_json(c.scene)},
            {"pretraining",
             {{"scene", detail::scene_json(c.pretraining.scene)},
              {"samples", c.pretraining.samples},
              {"data_seed", c.pretraining.data_seed},
              {"held_out_samples", c.pretraining.held_out_samples},
              {"held_out_seed", c.pretraining.held_out_seed}}},
            {"mainnet", detail::net_json(c.mainnet, with_paths)},
            {"auxnet", detail::net_json(c.auxnet, with_paths)},
            {"adapt", detail::adapt_json(c.adapt)},
            {"methods", methods},
            {"sweeps",
             {{"enabled", c.sweeps.enabled},
              {"update_period", c.sweeps.update_period},
              {"confidence_threshold", c.sweeps.confidence_threshold}}},
            {"seeds", c.seeds}};
  if (with_paths) {
    j["output_dir"] = c.output_dir;
    j["pretrain_missing_checkpoints"] = c.pretrain_missing_checkpoints;
  }
  return j;
}

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(config_json(c, false).dump())); }

/// Identifies the benchmark videos; results with different scene hashes
/// are not comparable.
inline std::string scene_hash(const SceneConfig& s) { return hex64(fnv1a64(detail::scene_json(s).dump())); }

}  // namespace auxadapt
