// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "auxadapt/error.hpp"
#include "auxadapt/metrics.hpp"
#include "auxadapt/network.hpp"
#include "auxadapt/ops.hpp"
#include "auxadapt/optim.hpp"
#include "auxadapt/rng.hpp"
#include "auxadapt/synthvid.hpp"

namespace auxadapt {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  std::size_t log_every = 1;  // epochs between training-mIoU logs
  std::size_t calibration_samples = 32;

  void validate() const {
    if (batch_size == 0) fail(Error::Kind::config, "pretrain: batch_size must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      fail(Error::Kind::config, "pretrain: learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail(Error::Kind::config, "pretrain: momentum must lie in [0, 1)");
    if (log_every == 0) fail(Error::Kind::config, "pretrain: log_every must be positive");
    if (calibration_samples == 0) fail(Error::Kind::config, "pretrain: calibration_samples must be positive");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::optional<double> train_miou;  // mean per-frame mIoU of this epoch's predictions
};

struct TrainResult {
  Network<float> net;
  std::vector<EpochLog> history;
};

/// Sets each batch-norm layer's running statistics to the per-channel
/// mean and (population) variance of its input over `samples`, one layer at
/// a time so later layers see already calibrated earlier ones.
inline void calibrate_batch_norm(Network<float>& net, const std::vector<LabeledFrame>& samples) {
  if (samples.empty()) fail(Error::Kind::argument, "calibrate_batch_norm: no samples");
  const auto& layers = net.spec().layers;
  for (std::size_t b = 0; b < layers.size(); ++b) {
    if (layers[b].kind != LayerKind::batchnorm) continue;
    const std::size_t c = layers[b].in_channels;
    std::vector<double> sum(c, 0.0), sq(c, 0.0);
    std::size_t count = 0;
    for (const auto& s : samples) {
      Tape<float> tape;
      const Var out = forward(tape, net, tape.constant(s.frame), b);
      const auto& x = tape.value(out);
      const std::size_t plane = x.dim(2) * x.dim(3);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < plane; ++p) {
          const double v = x[ch * plane + p];
          sum[ch] += v;
          sq[ch] += v * v;
        }
      count += plane;
    }
    const auto& idx = net.layer_params(b);
    auto& mean = net.parameters()[idx[2]].value;
    auto& var = net.parameters()[idx[3]].value;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double m = sum[ch] / static_cast<double>(count);
      mean[ch] = static_cast<float>(m);
      var[ch] = static_cast<float>(std::max(0.0, sq[ch] / static_cast<double>(count) - m * m));
    }
  }
}

/// Mean per-frame mIoU of the network's argmax against the labels.
inline double evaluate_miou(const Network<float>& net, const std::vector<LabeledFrame>& data) {
  if (data.empty()) fail(Error::Kind::argument, "evaluate_miou: no frames");
  double s = 0.0;
  for (const auto& d : data) s += mean_iou(argmax_decision(infer(net, d.frame)), d.labels, net.num_classes());
  return s / static_cast<double>(data.size());
}

/// Supervised training with ground-truth labels and mini-batch momentum
/// SGD. Batch-norm statistics are recalibrated at the start of every epoch
/// and are fixed within it; they are never touched after this returns.
inline TrainResult pretrain(Network<float> net, const std::vector<LabeledFrame>& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) fail(Error::Kind::argument, "pretrain: empty dataset");
  TrainResult result{std::move(net), {}};
  Network<float>& model = result.net;
  Velocity<float> velocity = zero_velocity(model);

  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(cfg.seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<long long>(i) - 1))]);

    std::vector<LabeledFrame> calib;
    for (std::size_t i = 0; i < std::min(cfg.calibration_samples, order.size()); ++i) calib.push_back(data[order[i]]);
    calibrate_batch_norm(model, calib);

    const bool log_miou = epoch % cfg.log_every == 0 || epoch == cfg.epochs;
    double loss_sum = 0.0, miou_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      GradientSet<float> batch;
      for (std::size_t j = start; j < end; ++j) {
        const LabeledFrame& s = data[order[j]];
        auto fwd = predict_logits(model, s.frame);
        const Var loss = ops::softmax_cross_entropy(fwd.tape, fwd.logits, s.labels);
        const double l = static_cast<double>(fwd.tape.value(loss)[0]);
        if (!std::isfinite(l))
          fail(Error::Kind::numeric, "pretrain: loss became non-finite at epoch " + std::to_string(epoch) + ", sample " +
                                         std::to_string(j) + "; lower the learning rate");
        loss_sum += l;
        if (log_miou) miou_sum += mean_iou(argmax_decision(fwd.value()), s.labels, model.num_classes());
        for (auto& [name, g] : fwd.tape.backward(loss)) {
          auto [it, fresh] = batch.try_emplace(name, std::move(g));
          if (!fresh)
            for (std::size_t k = 0; k < g.size(); ++k) it->second[k] += g[k];
        }
      }
      const float scale = 1.0f / static_cast<float>(end - start);
      for (auto& [name, g] : batch)
        for (auto& v : g.data()) v *= scale;
      sgd_momentum_update(model, velocity, batch, cfg.learning_rate, cfg.momentum);
    }
    EpochLog log{epoch, loss_sum / static_cast<double>(order.size()), std::nullopt};
    if (log_miou) log.train_miou = miou_sum / static_cast<double>(order.size());
    result.history.push_back(log);
  }
  return result;
}

inline constexpr const char* history_csv_header = "epoch,loss,train_miou";

inline void write_history_csv(std::ostream& os, const std::vector<EpochLog>& history) {
  os << history_csv_header << '\n';
  for (const auto& e : history)
    os << e.epoch << ',' << format_number(e.mean_loss) << ',' << (e.train_miou ? format_number(*e.train_miou) : "")
       << '\n';
}

}  // namespace auxadapt
