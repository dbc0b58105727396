// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "auxadapt/network.hpp"
#include "auxadapt/ops.hpp"

namespace auxadapt {

struct GradcheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Cross-entropy of the network's logits against `labels`, no tape kept.
template <typename T>
double network_loss(const Network<T>& net, const Tensor<T>& input, const SegMap& labels, const Mask* mask = nullptr) {
  auto fwd = forward_graph(net, input);
  const Var loss = ops::softmax_cross_entropy(fwd.tape, fwd.logits, labels, mask);
  return static_cast<double>(fwd.tape.value(loss)[0]);
}

template <typename T>
GradientSet<T> network_gradients(const Network<T>& net, const Tensor<T>& input, const SegMap& labels,
                                 const Mask* mask = nullptr) {
  auto fwd = forward_graph(net, input);
  const Var loss = ops::softmax_cross_entropy(fwd.tape, fwd.logits, labels, mask);
  return fwd.tape.backward(loss);
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Compares `analytic` against central differences
/// (L(theta + eps) - L(theta - eps)) / 2 eps for every trainable element.
template <typename T>
GradcheckReport compare_with_finite_differences(Network<T> net, const Tensor<T>& input, const SegMap& labels,
                                                const GradientSet<T>& analytic, double eps = 1e-3) {
  GradcheckReport report;
  for (auto& p : net.parameters()) {
    if (!p.trainable) continue;
    auto it = analytic.find(p.name);
    if (it == analytic.end()) fail(Error::Kind::argument, "gradcheck: no analytic gradient for " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T saved = p.value[i];
      p.value[i] = static_cast<T>(static_cast<double>(saved) + eps);
      const double up = network_loss(net, input, labels);
      p.value[i] = static_cast<T>(static_cast<double>(saved) - eps);
      const double down = network_loss(net, input, labels);
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_error(static_cast<double>(it->second[i]), numeric);
      ++report.checked;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = p.name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

/// Same check for an arbitrary scalar function of one tensor argument.
/// `f(tape, theta)` must return a scalar node.
template <typename T, typename F>
GradcheckReport gradcheck_function(F&& f, const Tensor<T>& theta, double eps = 1e-3) {
  auto eval = [&](const Tensor<T>& at) {
    Tape<T> tape;
    const Var p = tape.parameter("theta", at, true);
    const Var out = f(tape, p);
    return std::pair{std::move(tape), out};
  };
  auto [tape, out] = eval(theta);
  const Tensor<T> analytic = tape.backward(out).at("theta");
  GradcheckReport report;
  Tensor<T> probe = theta;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const T saved = probe[i];
    probe[i] = static_cast<T>(static_cast<double>(saved) + eps);
    auto [t_up, o_up] = eval(probe);
    probe[i] = static_cast<T>(static_cast<double>(saved) - eps);
    auto [t_dn, o_dn] = eval(probe);
    probe[i] = saved;
    const double numeric =
        (static_cast<double>(t_up.value(o_up)[0]) - static_cast<double>(t_dn.value(o_dn)[0])) / (2.0 * eps);
    const double err = relative_error(static_cast<double>(analytic[i]), numeric);
    ++report.checked;
    if (err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_parameter = "theta";
      report.worst_index = i;
    }
  }
  return report;
}

/// Worst relative error between backward() and central differences over
/// all trainable parameters. O(P) forward passes.
template <typename T>
GradcheckReport finite_difference_gradcheck(const Network<T>& net, const Tensor<T>& input, const SegMap& labels,
                                            double eps = 1e-3) {
  return compare_with_finite_differences(net, input, labels, network_gradients(net, input, labels), eps);
}

}  // namespace auxadapt
