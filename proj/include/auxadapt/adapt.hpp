// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "auxadapt/error.hpp"
#include "auxadapt/metrics.hpp"
#include "auxadapt/network.hpp"
#include "auxadapt/ops.hpp"
#include "auxadapt/optim.hpp"
#include "auxadapt/synthvid.hpp"

namespace auxadapt {

enum class Method { frozen, auxadapt, naive_last_part, naive_all_layers };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::frozen: return "frozen";
    case Method::auxadapt: return "auxadapt";
    case Method::naive_last_part: return "naive_last_part";
    case Method::naive_all_layers: return "naive_all_layers";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : {Method::frozen, Method::auxadapt, Method::naive_last_part, Method::naive_all_layers})
    if (s == method_name(m)) return m;
  fail(Error::Kind::config,
       "unknown method '" + std::string(s) + "' (expected frozen, auxadapt, naive_last_part or naive_all_layers)");
}

enum class MomentumMode { fixed, motion_adaptive };

/// Upper clamp for the motion-derived momentum.
inline constexpr double momentum_ceiling = 0.99;

struct AdaptConfig {
  double learning_rate = 1e-4;
  MomentumMode momentum_mode = MomentumMode::fixed;
  double momentum = 0.9;  // used when momentum_mode is fixed
  std::size_t update_period = 1;
  std::optional<double> confidence_threshold;
  Method method = Method::auxadapt;

  /// A zero learning rate is accepted; it turns every update into a no-op.
  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      fail(Error::Kind::config, "adapt: learning_rate must be a finite non-negative number");
    if (momentum_mode == MomentumMode::fixed && !(momentum >= 0.0 && momentum < 1.0))
      fail(Error::Kind::config, "adapt: fixed momentum must lie in [0, 1)");
    if (update_period < 1) fail(Error::Kind::config, "adapt: update_period must be >= 1");
    if (confidence_threshold && !(*confidence_threshold > 0.0 && *confidence_threshold <= 1.0))
      fail(Error::Kind::config, "adapt: confidence_threshold must lie in (0, 1]");
  }

  friend bool operator==(const AdaptConfig&, const AdaptConfig&) = default;
};

/// beta = 1 - mean |x_t - x_prev| over all H*W*C elements, clamped to
/// [0, momentum_ceiling]. No predecessor gives 0.
template <typename T>
double adaptive_momentum(const Tensor<T>& current, const std::type_identity_t<Tensor<T>>* previous) {
  if (!previous) return 0.0;
  if (current.shape() != previous->shape())
    fail(Error::Kind::shape, "adaptive_momentum: frame shapes differ " + shape_string(current.shape()) + " vs " +
                                 shape_string(previous->shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < current.size(); ++i)
    s += std::abs(static_cast<double>(current[i]) - static_cast<double>((*previous)[i]));
  return std::clamp(1.0 - s / static_cast<double>(current.size()), 0.0, momentum_ceiling);
}

struct ConfidenceSelection {
  Mask mask;
  double included_fraction = 0.0;
};

/// Pixels whose max fused softmax is strictly below the threshold.
template <typename T>
ConfidenceSelection confidence_mask(const Tensor<T>& fused_logits, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) fail(Error::Kind::argument, "confidence_mask: threshold must lie in (0, 1]");
  const ScoreMap conf = confidence_map(fused_logits);
  ConfidenceSelection s{Mask(conf.height, conf.width, 0), 0.0};
  for (std::size_t p = 0; p < conf.size(); ++p) s.mask[p] = conf[p] < threshold ? 1 : 0;
  s.included_fraction = static_cast<double>(count_true(s.mask)) / static_cast<double>(conf.size());
  return s;
}

/// 1-based frame index; the first frame always updates.
inline bool should_update(std::size_t frame_index, std::size_t update_period) {
  if (frame_index < 1) fail(Error::Kind::argument, "should_update: frame index is 1-based");
  if (update_period < 1) fail(Error::Kind::argument, "should_update: period must be >= 1");
  return (frame_index - 1) % update_period == 0;
}

/// Layer index from which NaiveAdapt's "last part" is trainable: the final
/// conv and the batch norm right before it (if any).
inline std::size_t last_part_first_layer(const NetworkSpec& spec) {
  std::optional<std::size_t> last_conv;
  for (std::size_t i = 0; i < spec.layers.size(); ++i)
    if (spec.layers[i].kind == LayerKind::conv) last_conv = i;
  if (!last_conv) fail(Error::Kind::argument, spec.name + ": no conv layer to adapt");
  for (std::size_t i = *last_conv; i-- > 0;) {
    if (spec.layers[i].kind == LayerKind::batchnorm) return i;
    if (spec.layers[i].kind == LayerKind::conv) break;
  }
  return *last_conv;
}

/// The mutable half of a run: the adapted network and its optimiser state.
struct AdaptState {
  Network<float> net;
  Velocity<float> velocity;
  std::optional<Tensor<float>> previous_frame;
  std::size_t frame_index = 0;  // frames processed so far
  std::size_t backward_passes = 0;
  std::uint64_t forward_macs = 0;
  std::uint64_t backward_macs = 0;
};

/// Prepares `net` (an AuxNet, or a MainNet copy for NaiveAdapt) for the
/// configured method and zeroes the velocity.
inline AdaptState make_adapt_state(Network<float> net, const AdaptConfig& cfg) {
  cfg.validate();
  switch (cfg.method) {
    case Method::frozen: net.set_trainable(false); break;
    case Method::auxadapt:
    case Method::naive_all_layers: net.set_trainable(true); break;
    case Method::naive_last_part: net.set_trainable_from(last_part_first_layer(net.spec())); break;
  }
  AdaptState s{std::move(net), {}, std::nullopt, 0, 0, 0, 0};
  s.velocity = zero_velocity(s.net);
  return s;
}

struct StepResult {
  SegMap segmentation;
  Tensor<float> decision_logits;  // fused logits for auxadapt, the network's own otherwise
  bool updated = false;
  double loss = 0.0;              // before the update; 0 when skipped
  double momentum = 0.0;
  double included_fraction = 1.0;
  std::uint64_t forward_macs = 0;  // adapted network only
  std::uint64_t backward_macs = 0;
};

namespace detail {

// Loss on the network's own tape against `target`, backward, momentum step.
inline void self_train(AdaptState& state, ForwardResult<float>& fwd, const SegMap& target, const Mask* mask,
                       const AdaptConfig& cfg, std::uint64_t backward_cost, StepResult& r) {
  const Var loss = ops::softmax_cross_entropy(fwd.tape, fwd.logits, target, mask);
  r.loss = static_cast<double>(fwd.tape.value(loss)[0]);
  const auto grads = fwd.tape.backward(loss);
  sgd_momentum_update(state.net, state.velocity, grads, cfg.learning_rate, r.momentum);
  r.updated = true;
  r.backward_macs = backward_cost;
  ++state.backward_passes;
}

inline void begin_step(AdaptState& state, const Tensor<float>& frame, const AdaptConfig& cfg, StepResult& r) {
  ++state.frame_index;
  r.momentum = cfg.momentum_mode == MomentumMode::fixed
                   ? cfg.momentum
                   : adaptive_momentum(frame, state.previous_frame ? &*state.previous_frame : nullptr);
}

inline void end_step(AdaptState& state, const Tensor<float>& frame, StepResult& r) {
  state.previous_frame = frame;
  state.forward_macs += r.forward_macs;
  state.backward_macs += r.backward_macs;
}

// Fills `mask` when a threshold is set; false when it selects nothing.
inline bool select_pixels(const Tensor<float>& decision_logits, const AdaptConfig& cfg, Mask& mask, StepResult& r) {
  if (!cfg.confidence_threshold) return true;
  auto sel = confidence_mask(decision_logits, *cfg.confidence_threshold);
  r.included_fraction = sel.included_fraction;
  mask = std::move(sel.mask);
  return r.included_fraction > 0.0;
}

}  // namespace detail

/// One frame of AuxAdapt: aux forward, fusion with the frozen MainNet's
/// logits, pseudo-label loss on the AuxNet, momentum step.
inline StepResult auxadapt_step(AdaptState& state, const Tensor<float>& main_logits, const Tensor<float>& frame,
                                const AdaptConfig& cfg) {
  StepResult r;
  detail::begin_step(state, frame, cfg, r);
  auto fwd = predict_logits(state.net, frame);
  const MacCount macs = count_macs(state.net, frame.dim(2), frame.dim(3));
  r.forward_macs = macs.forward;
  r.decision_logits = add_logits(main_logits, fwd.value());
  r.segmentation = argmax_decision(r.decision_logits);
  Mask mask;
  if (should_update(state.frame_index, cfg.update_period) && detail::select_pixels(r.decision_logits, cfg, mask, r))
    detail::self_train(state, fwd, r.segmentation, cfg.confidence_threshold ? &mask : nullptr, cfg, macs.backward, r);
  detail::end_step(state, frame, r);
  return r;
}

/// One frame of NaiveAdapt (or frozen inference): the network learns from
/// its own argmax. Backward cost covers the layers down to the first
/// trainable one.
inline StepResult naive_step(AdaptState& state, const Tensor<float>& frame, const AdaptConfig& cfg) {
  StepResult r;
  detail::begin_step(state, frame, cfg, r);
  auto fwd = predict_logits(state.net, frame);
  const MacCount macs = count_macs(state.net, frame.dim(2), frame.dim(3));
  r.forward_macs = macs.forward;
  r.decision_logits = fwd.value();
  r.segmentation = argmax_decision(r.decision_logits);
  const auto first = state.net.first_trainable_layer();
  Mask mask;
  if (cfg.method != Method::frozen && first && should_update(state.frame_index, cfg.update_period) &&
      detail::select_pixels(r.decision_logits, cfg, mask, r))
    detail::self_train(state, fwd, r.segmentation, cfg.confidence_threshold ? &mask : nullptr, cfg,
                       macs.backward_from(*first), r);
  detail::end_step(state, frame, r);
  return r;
}

struct RunResult {
  std::vector<SegMap> segmentations;
  MetricsRecord metrics;
  std::vector<StepResult> steps;  // without logits, to keep runs light
  AdaptState state;
};

/// Runs one method over a whole video. `main` is never modified; for
/// auxadapt `aux` is required and adapted as a copy.
inline RunResult run_adaptation(const SyntheticVideo& video, const Network<float>& main, const Network<float>* aux,
                                const AdaptConfig& cfg) {
  cfg.validate();
  if (video.size() == 0) fail(Error::Kind::argument, "run_adaptation: empty video");
  if (main.num_classes() != video.num_classes)
    fail(Error::Kind::shape, "run_adaptation: MainNet has " + std::to_string(main.num_classes()) +
                                 " classes, video has " + std::to_string(video.num_classes));
  const bool uses_aux = cfg.method == Method::auxadapt;
  if (uses_aux && !aux) fail(Error::Kind::argument, "run_adaptation: auxadapt needs an AuxNet");
  if (uses_aux && aux->num_classes() != main.num_classes())
    fail(Error::Kind::shape, "run_adaptation: AuxNet and MainNet disagree on the number of classes");

  RunResult out{{}, {}, {}, make_adapt_state(uses_aux ? *aux : main, cfg)};
  const std::uint64_t main_fwd = count_macs(main, video.height(), video.width()).forward;
  for (std::size_t t = 0; t < video.size(); ++t) {
    const Tensor<float>& frame = video.frames[t];
    StepResult step = uses_aux ? auxadapt_step(out.state, infer(main, frame), frame, cfg)
                               : naive_step(out.state, frame, cfg);
    FrameMetrics fm;
    fm.frame = t + 1;
    fm.miou = mean_iou(step.segmentation, video.labels[t], video.num_classes);
    if (t > 0)
      fm.tc = frame_consistency(step.segmentation, out.segmentations.back(), video.flows[t - 1], video.validity[t - 1],
                                video.num_classes);
    fm.mean_conf = mean_of(confidence_map(step.decision_logits));
    // The naive methods run the MainNet copy in place of MainNet.
    fm.fwd_macs = step.forward_macs + (uses_aux ? main_fwd : 0);
    fm.bwd_macs = step.backward_macs;
    out.metrics.frames.push_back(fm);
    out.segmentations.push_back(std::move(step.segmentation));
    step.decision_logits = Tensor<float>();
    out.steps.push_back(std::move(step));
  }
  return out;
}

}  // namespace auxadapt
