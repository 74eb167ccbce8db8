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

// Minimal tour of the library: wrap a frozen weight in an adapter, train its
// block-circulant change by hand, merge it back and save a checkpoint.

#include <cstdio>
#include <filesystem>
#include <random>

#include "bca/bca.hpp"

int main() {
  constexpr std::size_t kDim = 256;
  constexpr std::size_t kBlock = 64;

  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  bca::DenseMatrix w(kDim, kDim);
  for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = normal(rng) / 16.0;

  // Target behaviour: the frozen weight plus an unknown block-circulant change.
  bca::BlockCirculantMatrix hidden(kDim, kDim, kBlock);
  for (double& c : hidden.coefficients()) c = normal(rng) / 16.0;

  bca::AdapterLayer layer(w, kBlock);
  std::printf("trainable: %zu of %zu weights\n", bca::count_trainable(layer), kDim * kDim);

  bca::OptimizerConfig opt;
  opt.kind = bca::OptimizerKind::kSgd;
  opt.base_lr = 8.0;
  opt.heuristic_enabled = true;
  opt.block_size = kBlock;
  bca::OptimizerState state;
  std::printf("lr %.3g / p %zu = %.4g\n", opt.base_lr, kBlock, bca::effective_lr(opt));

  for (int step = 0; step <= 400; ++step) {
    bca::Batch x(kDim, 32);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = normal(rng);
    const bca::Batch y = w * x + bca::block_circ_matvec_batch(hidden, x);

    bca::ForwardCache cache;
    const bca::Batch y_hat = bca::adapter_forward_batch(layer, x, &cache);
    const double loss = bca::mse_loss(y_hat, y);
    if (step % 100 == 0) std::printf("step %3d  loss %.3e\n", step, loss);

    const bca::Batch g = (2.0 / static_cast<double>(y.size())) * (y_hat - y);
    const auto grads = bca::block_circ_matvec_backward_batch(layer.delta(), cache, g, false);
    bca::optimizer_step(layer.delta().coefficients(), grads.grad_coeffs, opt, state);
  }

  // Inference uses a single dense matrix again.
  const bca::DenseMatrix merged = bca::merge(layer);
  bca::RealVector probe(kDim);
  for (auto& v : probe) v = normal(rng);
  const double dev = (merged * probe - bca::adapter_forward(layer, probe)).cwiseAbs().maxCoeff();
  std::printf("merged vs adapter max deviation: %.2e\n", dev);

  const auto path = std::filesystem::temp_directory_path() / "bca_demo_adapter.bin";
  bca::CheckpointMetadata meta;
  meta.seed = 7;
  meta.step = state.step;
  meta.optimizer = opt;
  bca::save_checkpoint(layer, meta, path);
  const bca::AdapterCheckpoint back = bca::load_checkpoint(path);
  std::printf("checkpoint %s: %s, step %llu\n", path.string().c_str(), back.delta.shape_string().c_str(),
              static_cast<unsigned long long>(back.metadata.step));
  return 0;
}
