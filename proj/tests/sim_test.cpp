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

#include "bca/sim.hpp"

#include <cmath>
#include <random>

#include "gtest/gtest.h"
#include "test_util.hpp"

namespace bca {
namespace {

TEST(TargetTest, DeterministicPerSeed) {
  EXPECT_EQ(generate_target_system(16, 5), generate_target_system(16, 5));
  EXPECT_NE(generate_target_system(16, 5), generate_target_system(16, 6));
}

TEST(TargetTest, ReplayOracle) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double a = normal(rng), b = normal(rng), c = normal(rng), d = normal(rng);
  const DenseMatrix w = generate_target_system(2, 42);
  EXPECT_EQ(w(0, 0), a);
  EXPECT_EQ(w(0, 1), b);
  EXPECT_EQ(w(1, 0), c);
  EXPECT_EQ(w(1, 1), d);
}

TEST(TargetTest, SampleMeanNearZero) {
  const DenseMatrix w = generate_target_system(1024, 7);
  EXPECT_LT(std::abs(w.mean()), 0.01);
  EXPECT_NEAR((w.array() - w.mean()).square().mean(), 1.0, 0.01);
}

TEST(TargetTest, RealizableTargetShape) {
  const BlockCirculantMatrix b = generate_realizable_target(64, 32, 8, 3);
  EXPECT_EQ(b.rows(), 64u);
  EXPECT_EQ(b.parameter_count(), 256u);
  EXPECT_EQ(b.coefficients()[0], generate_realizable_target(64, 32, 8, 3).coefficients()[0]);
}

TEST(SampleBatchTest, NoiselessIsExact) {
  const DenseMatrix w = generate_target_system(12, 1);
  std::mt19937_64 rng(2);
  const auto [x, y] = sample_batch(w, 5, 0.0, rng);
  EXPECT_EQ(x.cols(), 5);
  EXPECT_EQ(y, w * x);
}

TEST(SampleBatchTest, SingleColumn) {
  const DenseMatrix w = generate_target_system(6, 1);
  std::mt19937_64 rng(3);
  const auto [x, y] = sample_batch(w, 1, 1.0, rng);
  EXPECT_EQ(x.rows(), 6);
  EXPECT_EQ(x.cols(), 1);
  EXPECT_EQ(y.rows(), 6);
  EXPECT_EQ(y.cols(), 1);
}

TEST(SampleBatchTest, NoiseVariance) {
  const DenseMatrix w = generate_target_system(10, 1);
  std::mt19937_64 rng(4);
  const auto [x, y] = sample_batch(w, 10000, 1.0, rng);
  const Batch noise = y - w * x;
  const double mean = noise.mean();
  const double var = (noise.array() - mean).square().sum() / static_cast<double>(noise.size() - 1);
  EXPECT_NEAR(var, 1.0, 0.05);
  EXPECT_LT(std::abs(mean), 0.02);
}

TEST(SampleBatchTest, CirculantTargetMatchesDense) {
  const BlockCirculantMatrix b = generate_realizable_target(16, 16, 4, 9);
  std::mt19937_64 r1(5), r2(5);
  const auto [x, y] = sample_batch(b, 3, 0.0, r1);
  const auto [xd, yd] = sample_batch(block_materialize(b), 3, 0.0, r2);
  EXPECT_EQ(x, xd);
  EXPECT_LT((y - yd).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MseLossTest, Examples) {
  const Batch a = Batch::Constant(4, 3, 2.5);
  EXPECT_EQ(mse_loss(a, a), 0.0);
  EXPECT_EQ(mse_loss(a, (a.array() - 1.0).matrix()), 1.0);
  EXPECT_THROW(mse_loss(a, Batch::Zero(3, 3)), SizeError);
}

TEST(MseLossTest, MatchesDirectSum) {
  std::mt19937_64 rng(6);
  const Batch a = testing::random_matrix(7, 5, rng);
  const Batch b = testing::random_matrix(7, 5, rng);
  double s = 0.0;
  for (Eigen::Index i = 0; i < 7; ++i) {
    for (Eigen::Index j = 0; j < 5; ++j) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  }
  EXPECT_NEAR(mse_loss(a, b), s / 35.0, 1e-14);
}

SimulationConfig small_config() {
  SimulationConfig c;
  c.n = 64;
  c.block_sizes = {4, 16, 64};
  c.iterations = 200;
  c.record_every = 10;
  c.seed = 11;
  return c;
}

TEST(SimulationTest, ConfigValidation) {
  SimulationConfig c = small_config();
  c.block_sizes = {3};
  EXPECT_THROW(run_simulation(c), ConfigError);
  c = small_config();
  c.iterations = 0;
  EXPECT_THROW(run_simulation(c), ConfigError);
  c = small_config();
  c.batch_size = 0;
  EXPECT_THROW(run_simulation(c), ConfigError);
}

TEST(SimulationTest, Reproducible) {
  const SimulationReport a = run_simulation(small_config());
  const SimulationReport b = run_simulation(small_config());
  ASSERT_EQ(a.runs.size(), b.runs.size());
  for (std::size_t k = 0; k < a.runs.size(); ++k) {
    ASSERT_EQ(a.runs[k].records.size(), b.runs[k].records.size());
    for (std::size_t r = 0; r < a.runs[k].records.size(); ++r) {
      EXPECT_EQ(a.runs[k].records[r].mse, b.runs[k].records[r].mse);
      EXPECT_EQ(a.runs[k].records[r].grad_mean_abs, b.runs[k].records[r].grad_mean_abs);
    }
    EXPECT_EQ(a.runs[k].final_mse, b.runs[k].final_mse);
  }
}

TEST(SimulationTest, SharedStreamAndEqualLengths) {
  const SimulationReport r = run_simulation(small_config());
  ASSERT_EQ(r.runs.size(), 4u);
  EXPECT_EQ(r.runs[0].label, "dense");
  EXPECT_NE(r.find("p16"), nullptr);
  EXPECT_EQ(r.find("p7"), nullptr);
  // Zero-initialized models see the same first batch, so their first losses agree.
  for (const auto& run : r.runs) {
    EXPECT_EQ(run.records.size(), r.runs[0].records.size());
    EXPECT_EQ(run.initial_mse, r.runs[0].initial_mse);
  }
}

TEST(SimulationTest, EarlyGradientGrowsWithBlockSize) {
  const SimulationReport r = run_simulation(small_config());
  for (std::size_t k = 1; k < r.runs.size(); ++k) {
    EXPECT_GT(r.runs[k].early_grad_mean, r.runs[k - 1].early_grad_mean) << r.runs[k].label;
  }
  const auto slope = gradient_scaling_exponent(r);
  ASSERT_TRUE(slope.has_value());
  EXPECT_GT(*slope, 0.0);
}

TEST(SimulationTest, FirstGradientObeysDiagonalSum) {
  // With zero weights the first gradient of the circulant model is the
  // diagonal sum of the dense gradient.
  SimulationConfig c = small_config();
  c.iterations = 1;
  c.record_every = 1;
  c.block_sizes = {8};
  c.batch_size = 4;
  const SimulationReport r = run_simulation(c);
  const DenseMatrix w = generate_target_system(c.n, c.seed);
  std::mt19937_64 rng(batch_stream_seed(c.seed));
  const auto [x, y] = sample_batch(w, c.batch_size, c.noise_std, rng);
  const DenseMatrix g_dense = (-2.0 / static_cast<double>(y.size())) * y * x.transpose();
  double dense_abs = g_dense.cwiseAbs().mean();
  double circ_abs = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 8; ++j) {
      for (std::size_t k = 0; k < 8; ++k) {
        double s = 0.0;
        for (std::size_t m = 0; m < 8; ++m) {
          s += g_dense(static_cast<Eigen::Index>(i * 8 + m), static_cast<Eigen::Index>(j * 8 + (m + 8 - k) % 8));
        }
        circ_abs += std::abs(s);
      }
    }
  }
  circ_abs /= 512.0;
  EXPECT_NEAR(r.runs[0].records[0].grad_mean_abs, dense_abs, 1e-12);
  EXPECT_NEAR(r.runs[1].records[0].grad_mean_abs, circ_abs, 1e-12);
}

TEST(SimulationTest, RealizableNoiselessRecovery) {
  SimulationConfig c;
  c.n = 8;
  c.block_sizes = {8};
  c.include_dense = false;
  c.iterations = 2000;
  c.noise_std = 0.0;
  c.target_block_size = 8;
  c.seed = 1;
  // Unscaled Adadelta; at 0.1 the step size is still ramping up after 2000 iterations.
  c.optimizer.base_lr = 1.0;
  const SimulationReport r = run_simulation(c);
  EXPECT_LT(r.runs[0].final_mse, 1e-3);
}

TEST(DivergenceTest, BlockSizeOneMatchesDense) {
  DivergenceConfig d;
  d.n = 32;
  d.p = 1;
  d.iterations = 50;
  const SimulationReport with = run_divergence_demo(d, 0.5, true);
  const SimulationReport without = run_divergence_demo(d, 0.5, false);
  SimulationConfig dense = d.simulation(50, 0.5, false, true);
  const SimulationReport ref = run_simulation(dense);
  ASSERT_EQ(with.runs[0].records.size(), ref.runs[0].records.size());
  for (std::size_t k = 0; k < ref.runs[0].records.size(); ++k) {
    EXPECT_NEAR(with.runs[0].records[k].mse, ref.runs[0].records[k].mse, 1e-9 * (1.0 + ref.runs[0].records[k].mse));
    EXPECT_EQ(with.runs[0].records[k].mse, without.runs[0].records[k].mse);
  }
}

TEST(DivergenceTest, SmallScaleContrast) {
  DivergenceConfig d;
  d.n = 64;
  d.p = 64;
  d.seed = 3;
  const DivergenceVerdict v = divergence_verdict(d);
  EXPECT_GT(v.lr, 0.0);
  EXPECT_FALSE(v.dense.diverged);
  EXPECT_TRUE(v.diverged_without);
  EXPECT_TRUE(v.converged_with) << v.with_heuristic.final_mse;
  EXPECT_DOUBLE_EQ(v.heuristic_lr * 64.0, v.lr);
}

TEST(DivergenceTest, ConfigErrors) {
  DivergenceConfig d;
  d.p = 3;
  EXPECT_THROW(run_divergence_demo(d, 0.1, false), ConfigError);
}

}  // namespace
}  // namespace bca
