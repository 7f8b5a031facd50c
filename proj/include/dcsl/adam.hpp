#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dcsl/error.hpp"
#include "dcsl/matrix.hpp"
#include "dcsl/network.hpp"

namespace dcsl {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  // One accumulator per parameter block; sized on the first step.
  std::vector<Vector> first_moment;
  std::vector<Vector> second_moment;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update over parallel lists of parameter and
/// gradient blocks. Nothing is modified if any gradient is non-finite.
inline void adam_step(std::span<const std::span<double>> params,
                      std::span<const std::span<const double>> grads, AdamState& state,
                      double learning_rate) {
  detail::require(params.size() == grads.size(), "adam_step: block count mismatch");
  detail::require(learning_rate > 0.0, "adam_step: learning rate must be positive");
  for (std::size_t b = 0; b < params.size(); ++b) {
    detail::require(params[b].size() == grads[b].size(),
                    "adam_step: block " + std::to_string(b) + " shape mismatch");
    if (!all_finite(grads[b])) {
      throw TrainingDivergence("adam_step: non-finite gradient in parameter block " +
                               std::to_string(b) + " at step " +
                               std::to_string(state.step + 1));
    }
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  detail::require(state.first_moment.size() == params.size(),
                  "adam_step: optimizer state belongs to a different parameter set");
  for (std::size_t b = 0; b < params.size(); ++b) {
    detail::require(state.first_moment[b].size() == params[b].size(),
                    "adam_step: optimizer state block " + std::to_string(b) + " shape mismatch");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    for (std::size_t k = 0; k < params[b].size(); ++k) {
      const double g = grads[b][k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      params[b][k] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

inline void adam_step(Network& net, const Gradients& grads, AdamState& state,
                      double learning_rate) {
  const auto params = net.parameter_blocks();
  const auto grad_blocks = grads.blocks();
  adam_step(params, grad_blocks, state, learning_rate);
}

}  // namespace dcsl
