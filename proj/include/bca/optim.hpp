// Copyright 2026 The BCA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef BCA_OPTIM_HPP_
#define BCA_OPTIM_HPP_

#include <cstdint>
#include <string>
#include <string_view>

#include "bca/error.hpp"
#include "bca/types.hpp"

namespace bca {

enum class OptimizerKind { kSgd, kAdadelta };

inline std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adadelta"; }

inline OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adadelta") return OptimizerKind::kAdadelta;
  throw ConfigError("optimizer.kind", "unknown optimizer '" + std::string(name) + "' (expected sgd or adadelta)");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdadelta;
  double base_lr = 0.1;
  double rho = 0.9;
  double eps = 1e-6;
  /// Divide the learning rate by the block size of the trained layer.
  bool heuristic_enabled = false;
  std::size_t block_size = 1;
  /// Global L2 gradient-norm clip; 0 disables.
  double clip_norm = 0.0;

  void validate() const {
    if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ConfigError("optimizer.lr", "must be positive");
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("optimizer.rho", "must lie in (0, 1)");
    if (!(eps > 0.0)) throw ConfigError("optimizer.eps", "must be positive");
    if (block_size == 0) throw ConfigError("optimizer.block_size", "must be positive");
    if (clip_norm < 0.0) throw ConfigError("optimizer.clip_norm", "must be non-negative");
  }
};

/// Adadelta running averages; empty until the first step.
struct OptimizerState {
  std::vector<double> mean_sq_grad;
  std::vector<double> mean_sq_update;
  std::uint64_t step = 0;
};

/// alpha / p when the heuristic is on, alpha otherwise.
inline double effective_lr(const OptimizerConfig& config) {
  if (config.block_size == 0) throw ConfigError("optimizer.block_size", "must be positive");
  return config.heuristic_enabled ? config.base_lr / static_cast<double>(config.block_size) : config.base_lr;
}

namespace detail {

inline void check_step_operands(std::span<const double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) {
    throw SizeError("optimizer: " + std::to_string(params.size()) + " parameters but " +
                    std::to_string(grads.size()) + " gradients");
  }
  if (!all_finite(grads)) throw NumericError("optimizer: non-finite gradient");
}

inline double clip_scale(std::span<const double> grads, double clip_norm) {
  if (clip_norm <= 0.0) return 1.0;
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  return norm > clip_norm ? clip_norm / norm : 1.0;
}

}  // namespace detail

/// theta <- theta - lr * g
inline void sgd_step(std::span<double> params, std::span<const double> grads, const OptimizerConfig& config,
                     OptimizerState& state) {
  detail::check_step_operands(params, grads);
  const double lr = effective_lr(config) * detail::clip_scale(grads, config.clip_norm);
  for (std::size_t k = 0; k < params.size(); ++k) params[k] -= lr * grads[k];
  ++state.step;
}

/// Adadelta, scaled by the effective learning rate:
///
///   E[g^2]  <- rho E[g^2] + (1 - rho) g^2
///   d       <- -sqrt(E[d^2] + eps) / sqrt(E[g^2] + eps) * g
///   E[d^2]  <- rho E[d^2] + (1 - rho) d^2
///   theta   <- theta + lr * d
inline void adadelta_step(std::span<double> params, std::span<const double> grads, const OptimizerConfig& config,
                          OptimizerState& state) {
  detail::check_step_operands(params, grads);
  if (state.mean_sq_grad.empty() && state.mean_sq_update.empty()) {
    state.mean_sq_grad.assign(params.size(), 0.0);
    state.mean_sq_update.assign(params.size(), 0.0);
  }
  if (state.mean_sq_grad.size() != params.size() || state.mean_sq_update.size() != params.size()) {
    throw SizeError("adadelta: optimizer state does not match parameter count");
  }
  const double lr = effective_lr(config);
  const double scale = detail::clip_scale(grads, config.clip_norm);
  const double rho = config.rho;
  const double eps = config.eps;
  double* eg = state.mean_sq_grad.data();
  double* ed = state.mean_sq_update.data();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k] * scale;
    eg[k] = rho * eg[k] + (1.0 - rho) * g * g;
    const double d = -std::sqrt(ed[k] + eps) / std::sqrt(eg[k] + eps) * g;
    ed[k] = rho * ed[k] + (1.0 - rho) * d * d;
    params[k] += lr * d;
  }
  ++state.step;
}

inline void optimizer_step(std::span<double> params, std::span<const double> grads, const OptimizerConfig& config,
                           OptimizerState& state) {
  if (config.kind == OptimizerKind::kSgd) {
    sgd_step(params, grads, config, state);
  } else {
    adadelta_step(params, grads, config, state);
  }
}

}  // namespace bca

#endif  // BCA_OPTIM_HPP_
