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

#ifndef BCA_SIM_HPP_
#define BCA_SIM_HPP_

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>

#include "bca/grad.hpp"
#include "bca/optim.hpp"

namespace bca {

/// Single linear layer regression, y = W x + noise, trained from zero.
struct SimulationConfig {
  std::size_t n = 1024;
  std::vector<std::size_t> block_sizes{128, 256, 512, 1024};
  bool include_dense = true;
  std::size_t batch_size = 32;
  std::size_t iterations = 10000;
  OptimizerConfig optimizer{};
  double noise_std = 1.0;
  std::uint64_t seed = 0;
  std::size_t record_every = 10;
  /// 0: i.i.d. standard-normal dense target. Otherwise the target is a random
  /// block-circulant matrix with this block size (realizable variant).
  std::size_t target_block_size = 0;
  /// Iterations averaged into the early-phase gradient statistic.
  std::size_t early_window = 100;

  void validate() const {
    if (n == 0) throw ConfigError("n", "must be positive");
    if (iterations == 0) throw ConfigError("iterations", "must be positive");
    if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
    if (record_every == 0) throw ConfigError("record_every", "must be positive");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("noise_std", "must be non-negative");
    if (block_sizes.empty() && !include_dense) throw ConfigError("block_sizes", "no configuration to train");
    for (std::size_t p : block_sizes) {
      if (p == 0 || n % p != 0) {
        throw ConfigError("block_sizes", "block size " + std::to_string(p) + " does not divide n=" + std::to_string(n));
      }
    }
    if (target_block_size != 0 && n % target_block_size != 0) {
      throw ConfigError("target_block_size", "must divide n=" + std::to_string(n));
    }
    optimizer.validate();
  }
};

struct TrainRecord {
  std::size_t iteration = 0;
  double mse = 0.0;
  double grad_mean_abs = 0.0;
};

struct ConfigurationResult {
  std::string label;       // "dense" or "p<block size>"
  std::size_t block_size;  // 1 for dense
  bool dense = false;
  double lr = 0.0;  // effective learning rate used
  std::vector<TrainRecord> records;
  double initial_mse = 0.0;
  double final_mse = 0.0;        // mean batch MSE over the last min(100, iterations) iterations
  double early_grad_mean = 0.0;  // mean of grad_mean_abs over the early window
  bool diverged = false;
  std::size_t iterations_run = 0;
};

struct SimulationReport {
  std::vector<ConfigurationResult> runs;
  std::size_t iterations = 0;

  const ConfigurationResult* find(const std::string& label) const {
    for (const auto& r : runs) {
      if (r.label == label) return &r;
    }
    return nullptr;
  }
};

/// i.i.d. N(0, 1) entries from std::mt19937_64(seed), filled row by row.
inline DenseMatrix generate_target_system(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto dim = static_cast<Eigen::Index>(n);
  DenseMatrix w(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) w(i, j) = normal(rng);
  }
  return w;
}

/// Block-circulant target with N(0, 1) coefficients, drawn in storage order.
inline BlockCirculantMatrix generate_realizable_target(std::size_t d_out, std::size_t d_in, std::size_t p,
                                                       std::uint64_t seed) {
  BlockCirculantMatrix b(d_out, d_in, p);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& c : b.coefficients()) c = normal(rng);
  return b;
}

inline Batch apply(const DenseMatrix& w, const Batch& x) { return w * x; }
inline Batch apply(const BlockCirculantMatrix& b, const Batch& x) { return block_circ_matvec_batch(b, x); }

/// Stream seed for training batches, decorrelated from the target seed.
inline std::uint64_t batch_stream_seed(std::uint64_t seed) { return seed ^ 0x9E3779B97F4A7C15ULL; }

/// X with N(0, 1) columns and Y = target X + N(0, noise_std^2).
template <class Target, class Rng>
std::pair<Batch, Batch> sample_batch(const Target& target, std::size_t batch_size, double noise_std, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Batch x(static_cast<Eigen::Index>(target.cols()), static_cast<Eigen::Index>(batch_size));
  for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = normal(rng);
  Batch y = apply(target, x);
  if (noise_std > 0.0) {
    for (Eigen::Index k = 0; k < y.size(); ++k) y.data()[k] += noise_std * normal(rng);
  }
  return {std::move(x), std::move(y)};
}

/// Mean over elements and batch of (y_hat - y)^2.
inline double mse_loss(const Batch& y_hat, const Batch& y) {
  if (y_hat.rows() != y.rows() || y_hat.cols() != y.cols()) {
    throw SizeError("mse_loss: shapes " + std::to_string(y_hat.rows()) + "x" + std::to_string(y_hat.cols()) +
                    " and " + std::to_string(y.rows()) + "x" + std::to_string(y.cols()) + " differ");
  }
  if (y.size() == 0) throw SizeError("mse_loss: empty operands");
  return (y_hat - y).squaredNorm() / static_cast<double>(y.size());
}

namespace detail {

struct DenseModel {
  DenseMatrix w;
  DenseMatrix grad;

  Batch forward(const Batch& x) { return w * x; }
  std::span<const double> backward(const Batch& x, const Batch& g) {
    grad.noalias() = g * x.transpose();
    return as_span(grad);
  }
  std::span<double> params() { return as_span(w); }
};

struct CirculantModel {
  BlockCirculantMatrix b;
  ForwardCache cache;
  std::vector<double> grad;

  Batch forward(const Batch& x) { return block_circ_matvec_batch(b, x, &cache); }
  std::span<const double> backward(const Batch&, const Batch& g) {
    grad = block_circ_matvec_backward_batch(b, cache, g, false).grad_coeffs;
    return grad;
  }
  std::span<double> params() { return b.coefficients(); }
};

// Stop training a model whose loss has grown by this factor; it is reported as diverged.
constexpr double kBlowUpFactor = 1e8;

struct Trainee {
  ConfigurationResult result;
  std::variant<DenseModel, CirculantModel> model;
  OptimizerConfig optimizer;
  OptimizerState state;
  bool stopped = false;
  double tail_sum = 0.0;
  std::size_t tail_count = 0;
  double early_sum = 0.0;
  std::size_t early_count = 0;
};

inline Trainee make_trainee(std::size_t n, std::size_t p, bool dense, const OptimizerConfig& base) {
  Trainee t{};
  t.result.dense = dense;
  t.result.block_size = dense ? 1 : p;
  t.result.label = dense ? "dense" : "p" + std::to_string(p);
  t.optimizer = base;
  t.optimizer.block_size = t.result.block_size;
  t.result.lr = effective_lr(t.optimizer);
  const auto dim = static_cast<Eigen::Index>(n);
  if (dense) {
    t.model = DenseModel{DenseMatrix::Zero(dim, dim), DenseMatrix()};
  } else {
    t.model = CirculantModel{BlockCirculantMatrix(n, n, p), ForwardCache{}, {}};
  }
  return t;
}

inline void train_step(Trainee& t, const Batch& x, const Batch& y, std::size_t iteration, std::size_t total,
                       std::size_t record_every, std::size_t early_window) {
  const std::size_t tail = std::min<std::size_t>(100, total);
  const bool record = iteration % record_every == 0 || iteration + 1 == total;
  if (t.stopped) {
    if (record) {
      t.result.records.push_back(
          {iteration, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()});
    }
    return;
  }
  std::visit(
      [&](auto& model) {
        const Batch y_hat = model.forward(x);
        const double mse = mse_loss(y_hat, y);
        if (iteration == 0) t.result.initial_mse = mse;
        const Batch g = (2.0 / static_cast<double>(y.size())) * (y_hat - y);
        const std::span<const double> grads = model.backward(x, g);
        double abs_sum = 0.0;
        for (double v : grads) abs_sum += std::abs(v);
        const double grad_mean_abs = abs_sum / static_cast<double>(grads.size());
        if (record) t.result.records.push_back({iteration, mse, grad_mean_abs});
        if (iteration < early_window) {
          t.early_sum += grad_mean_abs;
          ++t.early_count;
        }
        if (iteration + tail >= total) {
          t.tail_sum += mse;
          ++t.tail_count;
        }
        t.result.iterations_run = iteration + 1;
        const bool blown_up = !std::isfinite(mse) || !std::isfinite(grad_mean_abs) ||
                              mse > kBlowUpFactor * std::max(t.result.initial_mse, 1e-300);
        if (blown_up) {
          t.stopped = true;
          return;
        }
        optimizer_step(model.params(), grads, t.optimizer, t.state);
      },
      t.model);
}

inline void finalize(Trainee& t) {
  ConfigurationResult& r = t.result;
  r.early_grad_mean = t.early_count ? t.early_sum / static_cast<double>(t.early_count) : 0.0;
  if (t.stopped) {
    r.final_mse = std::numeric_limits<double>::infinity();
  } else {
    r.final_mse = t.tail_count ? t.tail_sum / static_cast<double>(t.tail_count) : r.initial_mse;
  }
  r.diverged = t.stopped || !std::isfinite(r.final_mse) || r.final_mse > r.initial_mse;
}

template <class Target>
SimulationReport run_lockstep(const Target& target, std::vector<Trainee> trainees, const SimulationConfig& config) {
  std::mt19937_64 rng(batch_stream_seed(config.seed));
  for (std::size_t it = 0; it < config.iterations; ++it) {
    auto [x, y] = sample_batch(target, config.batch_size, config.noise_std, rng);
    bool any_active = false;
    for (Trainee& t : trainees) {
      train_step(t, x, y, it, config.iterations, config.record_every, config.early_window);
      any_active = any_active || !t.stopped;
    }
    (void)any_active;
  }
  SimulationReport report;
  report.iterations = config.iterations;
  for (Trainee& t : trainees) {
    finalize(t);
    report.runs.push_back(std::move(t.result));
  }
  return report;
}

}  // namespace detail

/// Trains the dense model and one block-circulant model per block size on
/// one shared batch stream and records their loss and gradient curves.
/// Divergence is recorded, never thrown.
inline SimulationReport run_simulation(const SimulationConfig& config) {
  config.validate();
  std::vector<detail::Trainee> trainees;
  if (config.include_dense) trainees.push_back(detail::make_trainee(config.n, 1, true, config.optimizer));
  for (std::size_t p : config.block_sizes) trainees.push_back(detail::make_trainee(config.n, p, false, config.optimizer));
  if (config.target_block_size == 0) {
    return detail::run_lockstep(generate_target_system(config.n, config.seed), std::move(trainees), config);
  }
  return detail::run_lockstep(generate_realizable_target(config.n, config.n, config.target_block_size, config.seed),
                              std::move(trainees), config);
}

/// Slope of log(early gradient) against log(p) between the smallest and
/// largest block size in the report; 1 means linear scaling.
inline std::optional<double> gradient_scaling_exponent(const SimulationReport& report) {
  const ConfigurationResult* lo = nullptr;
  const ConfigurationResult* hi = nullptr;
  for (const auto& r : report.runs) {
    if (r.dense) continue;
    if (!lo || r.block_size < lo->block_size) lo = &r;
    if (!hi || r.block_size > hi->block_size) hi = &r;
  }
  if (!lo || !hi || lo == hi || lo->early_grad_mean <= 0.0) return std::nullopt;
  return std::log(hi->early_grad_mean / lo->early_grad_mean) /
         std::log(static_cast<double>(hi->block_size) / static_cast<double>(lo->block_size));
}

/// Learning-rate divergence experiment on a realizable target.
struct DivergenceConfig {
  std::size_t n = 1024;
  std::size_t p = 1024;
  /// 0 calibrates the largest learning rate at which dense training converges.
  double lr = 0.0;
  OptimizerKind optimizer_kind = OptimizerKind::kSgd;
  std::size_t iterations = 300;
  std::size_t calibration_iterations = 100;
  /// Bisection stops once hi / lo falls below this ratio.
  double calibration_ratio = 1.05;
  std::size_t batch_size = 32;
  double noise_std = 1.0;
  std::uint64_t seed = 0;
  std::size_t record_every = 1;
  /// Final MSE below which a non-divergent run counts as converged.
  double converged_mse = 1.3;

  void validate() const {
    if (n == 0) throw ConfigError("n", "must be positive");
    if (p == 0 || n % p != 0) {
      throw ConfigError("p", "block size " + std::to_string(p) + " does not divide n=" + std::to_string(n));
    }
    if (lr < 0.0 || !std::isfinite(lr)) throw ConfigError("lr", "must be non-negative");
    if (iterations == 0) throw ConfigError("iterations", "must be positive");
    if (calibration_iterations == 0) throw ConfigError("calibration_iterations", "must be positive");
    if (!(calibration_ratio > 1.0)) throw ConfigError("calibration_ratio", "must exceed 1");
    if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
    if (record_every == 0) throw ConfigError("record_every", "must be positive");
  }

  SimulationConfig simulation(std::size_t iters, double base_lr, bool heuristic, bool dense) const {
    SimulationConfig s;
    s.n = n;
    s.block_sizes = dense ? std::vector<std::size_t>{} : std::vector<std::size_t>{p};
    s.include_dense = dense;
    s.batch_size = batch_size;
    s.iterations = iters;
    s.optimizer.kind = optimizer_kind;
    s.optimizer.base_lr = base_lr;
    s.optimizer.heuristic_enabled = heuristic;
    s.noise_std = noise_std;
    s.seed = seed;
    s.record_every = record_every;
    s.target_block_size = p == 1 ? 0 : p;
    return s;
  }
};

/// Largest learning rate (within calibration_ratio) at which the dense model
/// does not diverge over calibration_iterations: doubling to bracket, then
/// geometric bisection.
inline double calibrate_dense_lr(const DivergenceConfig& config) {
  config.validate();
  auto converges = [&](double lr) {
    const SimulationReport r = run_simulation(config.simulation(config.calibration_iterations, lr, false, true));
    return !r.runs.front().diverged;
  };
  double lo = 0.0;
  double hi = 0.0;
  double lr = 1.0;
  if (converges(lr)) {
    lo = lr;
    for (int k = 0; k < 60 && hi == 0.0; ++k) {
      lr *= 2.0;
      if (converges(lr)) {
        lo = lr;
      } else {
        hi = lr;
      }
    }
    if (hi == 0.0) throw NumericError("calibrate_dense_lr: dense training never diverged");
  } else {
    hi = lr;
    for (int k = 0; k < 60 && lo == 0.0; ++k) {
      lr *= 0.5;
      if (converges(lr)) {
        lo = lr;
      } else {
        hi = lr;
      }
    }
    if (lo == 0.0) throw NumericError("calibrate_dense_lr: dense training never converged");
  }
  while (hi / lo > config.calibration_ratio) {
    const double mid = std::sqrt(lo * hi);
    if (converges(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

/// One block-circulant run at base learning rate `lr`, heuristic on or off.
inline SimulationReport run_divergence_demo(const DivergenceConfig& config, double lr, bool heuristic) {
  config.validate();
  return run_simulation(config.simulation(config.iterations, lr, heuristic, false));
}

struct DivergenceVerdict {
  double lr = 0.0;  // base learning rate (calibrated or given)
  double heuristic_lr = 0.0;
  ConfigurationResult dense;
  ConfigurationResult without_heuristic;
  ConfigurationResult with_heuristic;
  bool diverged_without = false;
  bool converged_with = false;
};

/// Calibrates (unless lr is given) and runs the paired heuristic-off/on experiment.
inline DivergenceVerdict divergence_verdict(const DivergenceConfig& config) {
  config.validate();
  DivergenceVerdict v;
  v.lr = config.lr > 0.0 ? config.lr : calibrate_dense_lr(config);
  v.heuristic_lr = v.lr / static_cast<double>(config.p);
  v.dense = run_simulation(config.simulation(config.iterations, v.lr, false, true)).runs.front();
  v.without_heuristic = run_divergence_demo(config, v.lr, false).runs.front();
  v.with_heuristic = run_divergence_demo(config, v.lr, true).runs.front();
  v.diverged_without = v.without_heuristic.diverged;
  v.converged_with = !v.with_heuristic.diverged && v.with_heuristic.final_mse < config.converged_mse;
  return v;
}

}  // namespace bca

#endif  // BCA_SIM_HPP_
