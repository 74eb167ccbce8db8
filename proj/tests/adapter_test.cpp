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

#include "bca/adapter.hpp"

#include <filesystem>
#include <fstream>
#include <random>

#include "gtest/gtest.h"
#include "test_util.hpp"

namespace bca {
namespace {

namespace fs = std::filesystem;
using testing::grads_agree;
using testing::random_matrix;
using testing::random_vector;

AdapterLayer random_layer(std::size_t d_out, std::size_t d_in, std::size_t p, std::mt19937_64& rng) {
  AdapterLayer layer(random_matrix(d_out, d_in, rng), p);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& c : layer.delta().coefficients()) c = normal(rng);
  return layer;
}

std::vector<double> coeffs(const BlockCirculantMatrix& b) {
  return {b.coefficients().begin(), b.coefficients().end()};
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("bca_adapter_test_" + std::to_string(std::random_device{}()) + "_" + std::to_string(counter_++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

TEST(AdapterForwardTest, ZeroDeltaIsBase) {
  std::mt19937_64 rng(1);
  const AdapterLayer layer(random_matrix(64, 32, rng), 16);
  const RealVector x = random_vector(32, rng);
  EXPECT_EQ(adapter_forward(layer, x), RealVector(layer.base() * x));
}

TEST(AdapterForwardTest, ZeroBaseIsDelta) {
  std::mt19937_64 rng(2);
  AdapterLayer layer = random_layer(32, 32, 8, rng);
  layer = AdapterLayer(DenseMatrix::Zero(32, 32), layer.delta());
  const RealVector x = random_vector(32, rng);
  EXPECT_LT((adapter_forward(layer, x) - block_circ_matvec(layer.delta(), x)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(AdapterForwardTest, MatchesMaterializedSum) {
  std::mt19937_64 rng(3);
  const AdapterLayer layer = random_layer(256, 256, 64, rng);
  const RealVector x = random_vector(256, rng);
  const RealVector ref = (layer.base() + block_materialize(layer.delta())) * x;
  EXPECT_LT((adapter_forward(layer, x) - ref).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(AdapterForwardTest, SizeErrors) {
  std::mt19937_64 rng(4);
  const AdapterLayer layer(random_matrix(16, 32, rng), 8);
  EXPECT_THROW(adapter_forward(layer, RealVector::Zero(16)), SizeError);
  EXPECT_THROW(AdapterLayer(DenseMatrix::Zero(16, 16), BlockCirculantMatrix(16, 32, 8)), SizeError);
  EXPECT_THROW(AdapterLayer(DenseMatrix::Zero(16, 12), 8), SizeError);
}

TEST(AdapterBackwardTest, ZeroUpstream) {
  std::mt19937_64 rng(5);
  const AdapterLayer layer = random_layer(16, 16, 4, rng);
  const MatvecGradients g = adapter_backward(layer, random_vector(16, rng), RealVector::Zero(16));
  for (double v : g.grad_coeffs) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(g.grad_input.isZero(0.0));
}

TEST(AdapterBackwardTest, IdentityBasePassesGradient) {
  std::mt19937_64 rng(6);
  const AdapterLayer layer(DenseMatrix::Identity(16, 16), 4);
  const RealVector go = random_vector(16, rng);
  const MatvecGradients g = adapter_backward(layer, random_vector(16, rng), go);
  EXPECT_LT((g.grad_input - go).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AdapterBackwardTest, MatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  const AdapterLayer layer = random_layer(24, 16, 8, rng);
  const RealVector x = random_vector(16, rng);
  const RealVector go = random_vector(24, rng);
  const MatvecGradients g = adapter_backward(layer, x, go);
  const RealVector c0 = Eigen::Map<const RealVector>(layer.delta().coefficients().data(),
                                                     static_cast<Eigen::Index>(layer.delta().parameter_count()));
  const RealVector fd_c = finite_difference_oracle(
      [&](const RealVector& c) {
        const BlockCirculantMatrix d(24, 16, 8, std::vector<double>(c.begin(), c.end()));
        return go.dot((layer.base() + block_materialize(d)) * x);
      },
      c0);
  const DenseMatrix merged = layer.base() + block_materialize(layer.delta());
  const RealVector fd_x = finite_difference_oracle([&](const RealVector& v) { return go.dot(merged * v); }, x);
  double worst = 0.0;
  EXPECT_TRUE(grads_agree(Eigen::Map<const RealVector>(g.grad_coeffs.data(), c0.size()), fd_c, 1e-6, 1e-8, &worst))
      << worst;
  EXPECT_TRUE(grads_agree(g.grad_input, fd_x, 1e-6, 1e-8, &worst)) << worst;
}

TEST(MergeTest, ZeroDeltaIsBase) {
  std::mt19937_64 rng(8);
  const AdapterLayer layer(random_matrix(32, 64, rng), 32);
  EXPECT_EQ(merge(layer), layer.base());
}

TEST(MergeTest, MergedMatvecMatchesAdapter) {
  std::mt19937_64 rng(9);
  const AdapterLayer layer = random_layer(512, 512, 128, rng);
  const DenseMatrix merged = merge(layer);
  const Batch x = random_matrix(512, 100, rng);
  const Batch a = adapter_forward_batch(layer, x);
  const Batch m = merged * x;
  for (Eigen::Index s = 0; s < x.cols(); ++s) {
    const double rel = (a.col(s) - m.col(s)).norm() / m.col(s).norm();
    EXPECT_LT(rel, 1e-10);
    EXPECT_LE((a.col(s) - m.col(s)).cwiseAbs().maxCoeff(), 1e-10 * (1.0 + m.col(s).cwiseAbs().maxCoeff()));
  }
}

TEST(MergeTest, SubtractBaseRecoversDelta) {
  std::mt19937_64 rng(10);
  const AdapterLayer layer = random_layer(16, 16, 4, rng);
  const DenseMatrix recovered = merge(layer) - layer.base();
  EXPECT_LT((recovered - block_materialize(layer.delta())).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CountTrainableTest, Examples) {
  EXPECT_EQ(count_trainable(AdapterLayer(DenseMatrix::Zero(4096, 4096), 1024)) * 2 * 32, 1048576u);
  EXPECT_EQ(count_trainable(AdapterLayer(DenseMatrix::Zero(64, 64), 64)), 64u);
  EXPECT_EQ(count_trainable(AdapterLayer(DenseMatrix::Zero(24, 24), 1)), 576u);
}

TEST(CheckpointTest, RoundTripIsBitwise) {
  TempDir dir;
  std::mt19937_64 rng(11);
  const AdapterLayer layer = random_layer(64, 128, 32, rng);
  CheckpointMetadata meta;
  meta.seed = 77;
  meta.step = 123;
  meta.optimizer.kind = OptimizerKind::kSgd;
  meta.optimizer.base_lr = 0.25;
  meta.optimizer.heuristic_enabled = true;
  meta.optimizer.block_size = 32;
  save_checkpoint(layer, meta, dir / "a.bin");
  EXPECT_TRUE(fs::exists(checkpoint_sidecar_path(dir / "a.bin")));
  const AdapterCheckpoint ck = load_checkpoint(dir / "a.bin");
  ASSERT_EQ(ck.delta.parameter_count(), layer.delta().parameter_count());
  EXPECT_EQ(std::memcmp(ck.delta.coefficients().data(), layer.delta().coefficients().data(),
                        8 * layer.delta().parameter_count()),
            0);
  EXPECT_EQ(ck.metadata.seed, 77u);
  EXPECT_EQ(ck.metadata.step, 123u);
  EXPECT_EQ(ck.metadata.optimizer.kind, OptimizerKind::kSgd);
  EXPECT_EQ(ck.metadata.optimizer.base_lr, 0.25);
  EXPECT_TRUE(ck.metadata.optimizer.heuristic_enabled);
}

TEST(CheckpointTest, SpecialValuesSurvive) {
  BlockCirculantMatrix d(4, 4, 2, {-0.0, 5e-324, 1e308, -1.0 / 3.0, 0.1, 2.0, 3.0, 4.0});
  const AdapterCheckpoint ck = decode_checkpoint(encode_checkpoint(d, {}, {}));
  EXPECT_EQ(std::memcmp(ck.delta.coefficients().data(), d.coefficients().data(), 64), 0);
}

TEST(CheckpointTest, OptimizerStateRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(12);
  const AdapterLayer layer = random_layer(16, 16, 4, rng);
  OptimizerState state;
  state.mean_sq_grad.assign(64, 0.5);
  state.mean_sq_update.assign(64, 0.25);
  save_checkpoint(layer, {}, dir / "s.bin", &state);
  const AdapterCheckpoint ck = load_checkpoint(dir / "s.bin");
  ASSERT_EQ(ck.optimizer_state.size(), 2u);
  EXPECT_EQ(ck.optimizer_state[0], state.mean_sq_grad);
  EXPECT_EQ(ck.optimizer_state[1], state.mean_sq_update);
}

TEST(CheckpointTest, TruncatedFileIsRejected) {
  std::mt19937_64 rng(13);
  const AdapterLayer layer = random_layer(32, 32, 8, rng);
  const std::string bytes = encode_checkpoint(layer.delta(), {}, {});
  for (std::size_t keep : {std::size_t{0}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, keep)), IntegrityError) << keep;
  }
}

TEST(CheckpointTest, TruncatedLoadLeavesLayerUntouched) {
  TempDir dir;
  std::mt19937_64 rng(14);
  const AdapterLayer src = random_layer(32, 32, 8, rng);
  save_checkpoint(src, {}, dir / "t.bin");
  fs::resize_file(dir / "t.bin", fs::file_size(dir / "t.bin") - 9);
  AdapterLayer dst = random_layer(32, 32, 8, rng);
  const std::vector<double> before = coeffs(dst.delta());
  EXPECT_THROW(load_checkpoint_into(dst, dir / "t.bin"), IntegrityError);
  EXPECT_EQ(coeffs(dst.delta()), before);
}

TEST(CheckpointTest, CorruptPayloadFailsChecksum) {
  std::mt19937_64 rng(15);
  const AdapterLayer layer = random_layer(32, 32, 8, rng);
  std::string bytes = encode_checkpoint(layer.delta(), {}, {});
  bytes[kCheckpointHeaderSize + 17] ^= 0x01;
  EXPECT_THROW(decode_checkpoint(bytes), IntegrityError);
}

TEST(CheckpointTest, BadMagicAndVersion) {
  std::mt19937_64 rng(16);
  const AdapterLayer layer = random_layer(8, 8, 4, rng);
  std::string bytes = encode_checkpoint(layer.delta(), {}, {});
  std::string bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(decode_checkpoint(bad_version), VersionError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), IntegrityError);
}

TEST(CheckpointTest, ShapeMismatchNamesBothShapes) {
  TempDir dir;
  std::mt19937_64 rng(17);
  const AdapterLayer src = random_layer(512, 512, 128, rng);
  save_checkpoint(src, {}, dir / "p128.bin");
  AdapterLayer dst(DenseMatrix::Zero(512, 512), 256);
  try {
    load_checkpoint_into(dst, dir / "p128.bin");
    FAIL() << "expected CompatibilityError";
  } catch (const CompatibilityError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find(src.delta().shape_string()), std::string::npos) << what;
    EXPECT_NE(what.find(dst.delta().shape_string()), std::string::npos) << what;
  }
  for (double c : dst.delta().coefficients()) EXPECT_EQ(c, 0.0);
}

TEST(CheckpointTest, MissingFileIsIoError) {
  TempDir dir;
  EXPECT_THROW(load_checkpoint(dir / "missing.bin"), IoError);
}

ToyTaskConfig small_task() {
  ToyTaskConfig t;
  t.input_dim = 64;
  t.output_dim = 64;
  t.dataset_size = 256;
  t.task_seed = 5;
  return t;
}

ToyTrainConfig small_train(std::size_t steps) {
  ToyTrainConfig t;
  t.block_size = 16;
  t.steps = steps;
  t.seed = 9;
  t.optimizer.block_size = 16;
  return t;
}

TEST(ToyTest, ZeroStepsKeepsBase) {
  const ToyResult r = train_toy_adapter(small_task(), small_train(0));
  const ToyTask task = make_toy_task(small_task(), 16);
  EXPECT_EQ(r.report.steps_run, 0u);
  EXPECT_EQ(adapter_forward_batch(r.layer, task.features), task.head * task.features);
  EXPECT_EQ(r.report.initial_loss, r.report.final_loss);
}

TEST(ToyTest, RecoversHiddenChange) {
  ToyTaskConfig task;
  ToyTrainConfig train;
  const ToyResult r = train_toy_adapter(task, train);
  EXPECT_LT(r.report.final_loss, 1e-4);
  EXPECT_FALSE(r.report.diverged);
  EXPECT_TRUE(r.report.base_intact);
  EXPECT_EQ(r.report.trainable_parameters, 128u * 128u / 32u);
  EXPECT_EQ(r.report.effective_lr, 0.5);
}

TEST(ToyTest, HeuristicPreventsDivergence) {
  ToyTrainConfig train = small_train(300);
  train.optimizer.base_lr = 16.0;
  train.optimizer.heuristic_enabled = false;
  const ToyResult off = train_toy_adapter(small_task(), train);
  train.optimizer.heuristic_enabled = true;
  const ToyResult on = train_toy_adapter(small_task(), train);
  EXPECT_TRUE(off.report.diverged);
  EXPECT_FALSE(on.report.diverged);
  EXPECT_LT(on.report.final_loss, on.report.initial_loss);
  EXPECT_TRUE(off.report.base_intact);
}

TEST(ToyTest, ResumeIsBitwiseIdentical) {
  TempDir dir;
  const ToyResult full = train_toy_adapter(small_task(), small_train(200));
  const ToyResult first = train_toy_adapter(small_task(), small_train(120));
  const CheckpointMetadata meta{9, first.step, small_train(0).optimizer};
  save_checkpoint(first.layer, meta, dir / "r.bin", &first.optimizer);
  const AdapterCheckpoint ck = load_checkpoint(dir / "r.bin");
  ToyResumeState resume{ck.delta, {}, ck.metadata.step};
  if (ck.optimizer_state.size() == 2) {
    resume.optimizer.mean_sq_grad = ck.optimizer_state[0];
    resume.optimizer.mean_sq_update = ck.optimizer_state[1];
  }
  const ToyResult rest = train_toy_adapter(small_task(), small_train(200), resume);
  EXPECT_EQ(rest.step, 200u);
  EXPECT_EQ(coeffs(rest.layer.delta()), coeffs(full.layer.delta()));
}

TEST(ToyTest, AdadeltaResumeIsBitwiseIdentical) {
  ToyTrainConfig train = small_train(60);
  train.optimizer.kind = OptimizerKind::kAdadelta;
  train.optimizer.base_lr = 1.0;
  train.optimizer.heuristic_enabled = false;
  const ToyResult full = train_toy_adapter(small_task(), train);
  ToyTrainConfig half = train;
  half.steps = 25;
  const ToyResult first = train_toy_adapter(small_task(), half);
  const ToyResult rest = train_toy_adapter(small_task(), train, ToyResumeState{first.layer.delta(), first.optimizer, first.step});
  EXPECT_EQ(coeffs(rest.layer.delta()), coeffs(full.layer.delta()));
}

TEST(ToyTest, ConfigErrors) {
  ToyTrainConfig train = small_train(10);
  train.block_size = 24;
  EXPECT_THROW(train_toy_adapter(small_task(), train), ConfigError);
  train = small_train(10);
  train.optimizer.base_lr = -1.0;
  EXPECT_THROW(train_toy_adapter(small_task(), train), ConfigError);
}

}  // namespace
}  // namespace bca
