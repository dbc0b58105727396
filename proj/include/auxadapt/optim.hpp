// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <span>
#include <string>

#include "auxadapt/error.hpp"
#include "auxadapt/network.hpp"
#include "auxadapt/tape.hpp"

namespace auxadapt {

/// Momentum buffer per trainable parameter, keyed like GradientSet.
template <typename T>
using Velocity = std::map<std::string, Tensor<T>>;

/// velocity = beta * velocity + lr * grad; param -= velocity.
template <typename T>
void sgd_momentum_step(std::span<T> params, std::span<T> velocity, std::span<const T> grads, double lr, double beta) {
  if (params.size() != velocity.size() || params.size() != grads.size())
    fail(Error::Kind::shape, "sgd_momentum_step: parameter, velocity and gradient lengths differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double v = beta * static_cast<double>(velocity[i]) + lr * static_cast<double>(grads[i]);
    velocity[i] = static_cast<T>(v);
    params[i] = static_cast<T>(static_cast<double>(params[i]) - v);
  }
}

template <typename T>
Velocity<T> zero_velocity(const Network<T>& net) {
  Velocity<T> v;
  for (const auto& p : net.parameters())
    if (p.trainable) v.emplace(p.name, Tensor<T>(p.value.shape()));
  return v;
}

/// Applies one momentum step to every parameter named in `grads`.
/// Velocity buffers are created (zero) on first use.
template <typename T>
void sgd_momentum_update(Network<T>& net, Velocity<T>& velocity, const GradientSet<T>& grads, double lr, double beta) {
  if (beta < 0.0 || beta > 1.0) fail(Error::Kind::argument, "sgd_momentum_update: momentum must lie in [0, 1]");
  for (const auto& [name, g] : grads) {
    Parameter<T>* p = net.find(name);
    if (!p) fail(Error::Kind::argument, "sgd_momentum_update: unknown parameter " + name);
    if (!p->trainable) fail(Error::Kind::argument, "sgd_momentum_update: parameter " + name + " is frozen");
    if (g.shape() != p->value.shape()) fail(Error::Kind::shape, "sgd_momentum_update: gradient shape mismatch for " + name);
    auto [it, inserted] = velocity.try_emplace(name, Tensor<T>(p->value.shape()));
    sgd_momentum_step<T>(p->value.data(), it->second.data(), g.data(), lr, beta);
  }
}

}  // namespace auxadapt
