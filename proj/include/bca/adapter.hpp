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

#ifndef BCA_ADAPTER_HPP_
#define BCA_ADAPTER_HPP_

#include <zlib.h>

#include <array>
#include <bit>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "bca/grad.hpp"
#include "bca/optim.hpp"
#include "bca/sim.hpp"

namespace bca {

/// Frozen dense weight W plus a trainable block-circulant change B: h = W x + B x.
///
/// The change starts at zero so a fresh adapter reproduces the base layer.
class AdapterLayer {
 public:
  AdapterLayer(DenseMatrix base, std::size_t block_size)
      : base_(std::move(base)),
        delta_(static_cast<std::size_t>(base_.rows()), static_cast<std::size_t>(base_.cols()), block_size) {}

  AdapterLayer(DenseMatrix base, BlockCirculantMatrix delta) : base_(std::move(base)), delta_(std::move(delta)) {
    if (static_cast<std::size_t>(base_.rows()) != delta_.rows() ||
        static_cast<std::size_t>(base_.cols()) != delta_.cols()) {
      throw SizeError("adapter base is " + std::to_string(base_.rows()) + "x" + std::to_string(base_.cols()) +
                      " but delta is " + delta_.shape_string());
    }
  }

  const DenseMatrix& base() const noexcept { return base_; }
  const BlockCirculantMatrix& delta() const noexcept { return delta_; }
  BlockCirculantMatrix& delta() noexcept { return delta_; }
  bool frozen() const noexcept { return true; }

  std::size_t rows() const noexcept { return delta_.rows(); }
  std::size_t cols() const noexcept { return delta_.cols(); }
  std::size_t block_size() const noexcept { return delta_.block_size(); }

  /// Replaces the trainable coefficients; the shape must match exactly.
  void set_delta(BlockCirculantMatrix delta) {
    if (delta.rows() != delta_.rows() || delta.cols() != delta_.cols() || delta.block_size() != delta_.block_size()) {
      throw CompatibilityError("cannot load delta " + delta.shape_string() + " into adapter " + delta_.shape_string());
    }
    delta_ = std::move(delta);
  }

 private:
  DenseMatrix base_;
  BlockCirculantMatrix delta_;
};

inline Batch adapter_forward_batch(const AdapterLayer& layer, const Batch& x, ForwardCache* cache = nullptr) {
  if (static_cast<std::size_t>(x.rows()) != layer.cols()) {
    throw SizeError("adapter_forward: input length " + std::to_string(x.rows()) + " != d_in " +
                    std::to_string(layer.cols()));
  }
  Batch h = block_circ_matvec_batch(layer.delta(), x, cache);
  h.noalias() += layer.base() * x;
  return h;
}

inline RealVector adapter_forward(const AdapterLayer& layer, const RealVector& x) {
  return adapter_forward_batch(layer, Batch(x)).col(0);
}

/// Gradients for the delta coefficients and the layer input. The base is
/// frozen and receives none, but its W^T path still contributes to grad_input.
inline BatchGradients adapter_backward_batch(const AdapterLayer& layer, const Batch& x, const Batch& grad_out,
                                             bool want_input_grad = true) {
  if (static_cast<std::size_t>(x.rows()) != layer.cols() || static_cast<std::size_t>(grad_out.rows()) != layer.rows() ||
      x.cols() != grad_out.cols()) {
    throw SizeError("adapter_backward: shapes do not match adapter " + layer.delta().shape_string());
  }
  BatchGradients g = block_circ_matvec_backward_batch(layer.delta(), x, grad_out, want_input_grad);
  if (want_input_grad) g.grad_input.noalias() += layer.base().transpose() * grad_out;
  return g;
}

inline MatvecGradients adapter_backward(const AdapterLayer& layer, const RealVector& x, const RealVector& grad_out) {
  BatchGradients g = adapter_backward_batch(layer, Batch(x), Batch(grad_out), true);
  return {std::move(g.grad_coeffs), g.grad_input.col(0)};
}

/// W + B as one dense matrix; a plain matvec with it equals adapter_forward.
inline DenseMatrix merge(const AdapterLayer& layer) { return layer.base() + block_materialize(layer.delta()); }

inline std::size_t count_trainable(const AdapterLayer& layer) { return layer.delta().parameter_count(); }

// ---------------------------------------------------------------------------
// Checkpoints
//
// Binary layout, all integers and reals little-endian:
//
//   0   char[4]  magic "BCAD"
//   4   u32      format version
//   8   u64      d_out
//   16  u64      d_in
//   24  u64      p
//   32  u64      training step
//   40  u64      seed
//   48  u32      number of optimizer-state vectors that follow the coefficients
//   52  u32      reserved (0)
//   56  f64[]    coefficients, block-row-major, d_out * d_in / p values
//       f64[]    optimizer state vectors, same length each
//   end u32      CRC-32 of every preceding byte
//
// A JSON sidecar (<path>.json) carries the human-readable metadata.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::array<char, 4> kCheckpointMagic{'B', 'C', 'A', 'D'};
inline constexpr std::size_t kCheckpointHeaderSize = 56;

struct CheckpointMetadata {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  OptimizerConfig optimizer{};
};

struct AdapterCheckpoint {
  std::uint32_t version = kCheckpointVersion;
  BlockCirculantMatrix delta;
  std::vector<std::vector<double>> optimizer_state;
  CheckpointMetadata metadata;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  return v;
}
inline std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  return v;
}
inline double get_f64(const std::string& in, std::size_t at) { return std::bit_cast<double>(get_u64(in, at)); }

inline std::uint32_t crc32_of(const char* data, std::size_t size) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(size));
  return static_cast<std::uint32_t>(crc);
}

inline nlohmann::json optimizer_to_json(const OptimizerConfig& o) {
  return {{"kind", std::string(to_string(o.kind))},
          {"lr", o.base_lr},
          {"rho", o.rho},
          {"eps", o.eps},
          {"heuristic", o.heuristic_enabled},
          {"block_size", o.block_size},
          {"clip_norm", o.clip_norm}};
}

inline OptimizerConfig optimizer_from_json(const nlohmann::json& j) {
  OptimizerConfig o;
  o.kind = parse_optimizer_kind(j.at("kind").get<std::string>());
  o.base_lr = j.at("lr").get<double>();
  o.rho = j.at("rho").get<double>();
  o.eps = j.at("eps").get<double>();
  o.heuristic_enabled = j.at("heuristic").get<bool>();
  o.block_size = j.at("block_size").get<std::size_t>();
  o.clip_norm = j.value("clip_norm", 0.0);
  return o;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + path.string());
  return bytes;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace detail

inline std::filesystem::path checkpoint_sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

/// Serializes the coefficients (and optional optimizer state) bit-exactly.
inline std::string encode_checkpoint(const BlockCirculantMatrix& delta, const CheckpointMetadata& meta,
                                     const std::vector<std::vector<double>>& optimizer_state = {}) {
  const std::size_t payload = delta.parameter_count();
  for (const auto& v : optimizer_state) {
    if (v.size() != payload) throw SizeError("optimizer state vector does not match coefficient count");
  }
  std::string out;
  out.reserve(kCheckpointHeaderSize + 8 * payload * (1 + optimizer_state.size()) + 4);
  out.append(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, delta.rows());
  detail::put_u64(out, delta.cols());
  detail::put_u64(out, delta.block_size());
  detail::put_u64(out, meta.step);
  detail::put_u64(out, meta.seed);
  detail::put_u32(out, static_cast<std::uint32_t>(optimizer_state.size()));
  detail::put_u32(out, 0);
  for (double c : delta.coefficients()) detail::put_f64(out, c);
  for (const auto& v : optimizer_state) {
    for (double c : v) detail::put_f64(out, c);
  }
  detail::put_u32(out, detail::crc32_of(out.data(), out.size()));
  return out;
}

/// Parses and validates a checkpoint image. Nothing is returned unless
/// magic, version, length and checksum all check out.
inline AdapterCheckpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < kCheckpointHeaderSize + 4) {
    throw IntegrityError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
  }
  if (!std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin())) {
    throw IntegrityError("not an adapter checkpoint (bad magic)");
  }
  const std::uint32_t version = detail::get_u32(bytes, 4);
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(version) + " (this build reads " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t d_out = detail::get_u64(bytes, 8);
  const std::uint64_t d_in = detail::get_u64(bytes, 16);
  const std::uint64_t p = detail::get_u64(bytes, 24);
  if (p == 0 || d_out == 0 || d_in == 0 || d_out % p != 0 || d_in % p != 0 || d_out > (1ULL << 32) ||
      d_in > (1ULL << 32)) {
    throw IntegrityError("checkpoint header has an invalid shape");
  }
  const std::uint32_t state_vectors = detail::get_u32(bytes, 48);
  const std::uint64_t payload = d_out / p * (d_in / p) * p;
  const std::uint64_t expected = kCheckpointHeaderSize + 8 * payload * (1 + std::uint64_t{state_vectors}) + 4;
  if (bytes.size() != expected) {
    throw IntegrityError("checkpoint length " + std::to_string(bytes.size()) + " does not match header (expected " +
                         std::to_string(expected) + ")");
  }
  const std::uint32_t stored = detail::get_u32(bytes, bytes.size() - 4);
  if (stored != detail::crc32_of(bytes.data(), bytes.size() - 4)) throw IntegrityError("checkpoint checksum mismatch");

  std::vector<double> coeffs(payload);
  std::size_t at = kCheckpointHeaderSize;
  for (auto& c : coeffs) {
    c = detail::get_f64(bytes, at);
    at += 8;
  }
  AdapterCheckpoint ck{version, BlockCirculantMatrix(d_out, d_in, p, std::move(coeffs)), {}, {}};
  ck.optimizer_state.resize(state_vectors);
  for (auto& v : ck.optimizer_state) {
    v.resize(payload);
    for (auto& c : v) {
      c = detail::get_f64(bytes, at);
      at += 8;
    }
  }
  ck.metadata.step = detail::get_u64(bytes, 32);
  ck.metadata.seed = detail::get_u64(bytes, 40);
  return ck;
}

/// Writes <path> and the metadata sidecar <path>.json.
inline void save_checkpoint(const BlockCirculantMatrix& delta, const CheckpointMetadata& meta,
                            const std::filesystem::path& path, const OptimizerState* state = nullptr) {
  std::vector<std::vector<double>> extra;
  if (state && !state->mean_sq_grad.empty()) extra = {state->mean_sq_grad, state->mean_sq_update};
  const std::string bytes = encode_checkpoint(delta, meta, extra);
  detail::write_file(path, bytes);

  char crc_hex[9];
  std::snprintf(crc_hex, sizeof crc_hex, "%08x", detail::get_u32(bytes, bytes.size() - 4));
  const auto now = std::chrono::system_clock::now();
  nlohmann::json side = {
      {"schema_version", 1},
      {"format_version", kCheckpointVersion},
      {"d_out", delta.rows()},
      {"d_in", delta.cols()},
      {"p", delta.block_size()},
      {"parameters", delta.parameter_count()},
      {"step", meta.step},
      {"seed", meta.seed},
      {"optimizer", detail::optimizer_to_json(meta.optimizer)},
      {"optimizer_state_vectors", extra.size()},
      {"crc32", crc_hex},
      {"written_unix_seconds",
       std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count()},
  };
  detail::write_file(checkpoint_sidecar_path(path), side.dump(2) + "\n");
}

inline void save_checkpoint(const AdapterLayer& layer, const CheckpointMetadata& meta, const std::filesystem::path& path,
                            const OptimizerState* state = nullptr) {
  save_checkpoint(layer.delta(), meta, path, state);
}

/// Reads and validates <path>. The optimizer config is restored from the
/// sidecar when one is present.
inline AdapterCheckpoint load_checkpoint(const std::filesystem::path& path) {
  AdapterCheckpoint ck = decode_checkpoint(detail::read_file(path));
  const auto side = checkpoint_sidecar_path(path);
  if (std::filesystem::exists(side)) {
    try {
      const auto j = nlohmann::json::parse(detail::read_file(side));
      if (j.contains("optimizer")) ck.metadata.optimizer = detail::optimizer_from_json(j.at("optimizer"));
    } catch (const nlohmann::json::exception& e) {
      throw IntegrityError("checkpoint sidecar " + side.string() + " is malformed: " + e.what());
    }
  }
  return ck;
}

/// Loads a checkpoint into `layer`. The layer is untouched on any failure.
inline AdapterCheckpoint load_checkpoint_into(AdapterLayer& layer, const std::filesystem::path& path) {
  AdapterCheckpoint ck = load_checkpoint(path);
  const auto& d = layer.delta();
  if (ck.delta.rows() != d.rows() || ck.delta.cols() != d.cols() || ck.delta.block_size() != d.block_size()) {
    throw CompatibilityError("checkpoint holds " + ck.delta.shape_string() + " but the target adapter is " +
                             d.shape_string());
  }
  layer.set_delta(ck.delta);
  return ck;
}

// ---------------------------------------------------------------------------
// Toy fine-tuning harness
// ---------------------------------------------------------------------------

/// Synthetic regression task: frozen tanh feature layers followed by a frozen
/// head W; targets come from the head perturbed by a hidden block-circulant
/// change, so the task is exactly solvable by the adapter.
struct ToyTaskConfig {
  std::size_t input_dim = 128;
  std::size_t output_dim = 128;
  std::size_t frozen_layers = 1;
  std::size_t dataset_size = 1024;
  std::uint64_t task_seed = 0;
  double label_noise = 0.0;
  /// Standard deviation of the hidden change's coefficients, in units of 1/sqrt(input_dim).
  double perturbation_scale = 1.0;

  void validate(std::size_t block_size) const {
    if (input_dim == 0) throw ConfigError("input_dim", "must be positive");
    if (output_dim == 0) throw ConfigError("output_dim", "must be positive");
    if (dataset_size == 0) throw ConfigError("dataset_size", "must be positive");
    if (!(label_noise >= 0.0)) throw ConfigError("label_noise", "must be non-negative");
    if (!(perturbation_scale >= 0.0)) throw ConfigError("perturbation_scale", "must be non-negative");
    if (block_size == 0 || input_dim % block_size != 0 || output_dim % block_size != 0) {
      throw ConfigError("block_size", "p=" + std::to_string(block_size) + " must divide input_dim=" +
                                          std::to_string(input_dim) + " and output_dim=" + std::to_string(output_dim));
    }
  }
};

struct ToyTrainConfig {
  std::size_t block_size = 32;
  std::size_t steps = 5000;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer{OptimizerKind::kSgd, 16.0, 0.9, 1e-6, true, 32, 0.0};
  std::size_t record_every = 1;
  /// Stop early once the full-dataset loss falls below this value; 0 disables.
  double stop_loss = 0.0;

  void validate() const {
    if (block_size == 0) throw ConfigError("block_size", "must be positive");
    if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
    if (record_every == 0) throw ConfigError("record_every", "must be positive");
    if (stop_loss < 0.0) throw ConfigError("stop_loss", "must be non-negative");
    optimizer.validate();
  }
};

struct ToyTask {
  std::vector<DenseMatrix> frozen;  // tanh feature layers, input_dim x input_dim
  Batch inputs;                     // input_dim x dataset_size
  Batch features;                   // frozen stack applied to inputs
  Batch targets;                    // output_dim x dataset_size
  BlockCirculantMatrix hidden_change;
  DenseMatrix head;                 // frozen base weight of the adapted layer
};

inline Batch frozen_features(const std::vector<DenseMatrix>& frozen, Batch x) {
  for (const auto& w : frozen) x = (w * x).array().tanh().matrix();
  return x;
}

inline ToyTask make_toy_task(const ToyTaskConfig& task, std::size_t block_size) {
  task.validate(block_size);
  std::mt19937_64 rng(task.task_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto din = static_cast<Eigen::Index>(task.input_dim);
  const auto dout = static_cast<Eigen::Index>(task.output_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(task.input_dim));
  auto random_matrix = [&](Eigen::Index r, Eigen::Index c) {
    DenseMatrix m(r, c);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = scale * normal(rng);
    return m;
  };
  ToyTask t{{}, {}, {}, {}, BlockCirculantMatrix(task.output_dim, task.input_dim, block_size), {}};
  for (std::size_t l = 0; l < task.frozen_layers; ++l) t.frozen.push_back(random_matrix(din, din));
  t.head = random_matrix(dout, din);
  for (double& c : t.hidden_change.coefficients()) c = task.perturbation_scale * scale * normal(rng);
  t.inputs.resize(din, static_cast<Eigen::Index>(task.dataset_size));
  for (Eigen::Index k = 0; k < t.inputs.size(); ++k) t.inputs.data()[k] = normal(rng);
  t.features = frozen_features(t.frozen, t.inputs);
  t.targets = t.head * t.features + block_circ_matvec_batch(t.hidden_change, t.features);
  if (task.label_noise > 0.0) {
    for (Eigen::Index k = 0; k < t.targets.size(); ++k) t.targets.data()[k] += task.label_noise * normal(rng);
  }
  return t;
}

/// Training state that a checkpoint can restore.
struct ToyResumeState {
  BlockCirculantMatrix delta;
  OptimizerState optimizer;
  std::uint64_t step = 0;
};

struct ToyReport {
  std::vector<std::pair<std::size_t, double>> curve;  // (step, minibatch loss)
  double initial_loss = 0.0;                          // full-dataset loss before the first step
  double final_loss = 0.0;                            // full-dataset loss after the last step
  bool diverged = false;
  bool base_intact = true;
  std::size_t steps_run = 0;
  std::size_t trainable_parameters = 0;
  double effective_lr = 0.0;
};

struct ToyResult {
  ToyReport report;
  AdapterLayer layer;
  OptimizerState optimizer;
  std::uint64_t step = 0;
};

/// Minibatch indices of one step are drawn from a generator seeded by
/// (seed, step), so a resumed run replays the same stream.
inline std::vector<Eigen::Index> toy_batch_indices(std::uint64_t seed, std::uint64_t step, std::size_t batch,
                                                   std::size_t dataset) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::size_t> pick(0, dataset - 1);
  std::vector<Eigen::Index> idx(batch);
  for (auto& i : idx) i = static_cast<Eigen::Index>(pick(rng));
  return idx;
}

/// Trains only the adapter's block-circulant change on the toy task.
inline ToyResult train_toy_adapter(const ToyTaskConfig& task_config, const ToyTrainConfig& train,
                                   const std::optional<ToyResumeState>& resume = std::nullopt) {
  train.validate();
  const ToyTask task = make_toy_task(task_config, train.block_size);
  OptimizerConfig opt = train.optimizer;
  opt.block_size = train.block_size;

  ToyResult out{{}, AdapterLayer(task.head, train.block_size), {}, 0};
  if (resume) {
    out.layer.set_delta(resume->delta);
    out.optimizer = resume->optimizer;
    out.step = resume->step;
  }
  const DenseMatrix base_snapshot = out.layer.base();
  ToyReport& report = out.report;
  report.trainable_parameters = count_trainable(out.layer);
  report.effective_lr = effective_lr(opt);

  auto full_loss = [&] { return mse_loss(adapter_forward_batch(out.layer, task.features), task.targets); };
  report.initial_loss = full_loss();
  const double blow_up = detail::kBlowUpFactor * std::max(report.initial_loss, 1e-300);

  Batch x(static_cast<Eigen::Index>(task_config.input_dim), static_cast<Eigen::Index>(train.batch_size));
  Batch y(static_cast<Eigen::Index>(task_config.output_dim), static_cast<Eigen::Index>(train.batch_size));
  bool stopped = false;
  for (; out.step < train.steps; ++out.step) {
    const auto idx = toy_batch_indices(train.seed, out.step, train.batch_size, task_config.dataset_size);
    for (std::size_t s = 0; s < idx.size(); ++s) {
      x.col(static_cast<Eigen::Index>(s)) = task.features.col(idx[s]);
      y.col(static_cast<Eigen::Index>(s)) = task.targets.col(idx[s]);
    }
    ForwardCache cache;
    const Batch y_hat = adapter_forward_batch(out.layer, x, &cache);
    const double loss = mse_loss(y_hat, y);
    if (out.step % train.record_every == 0 || out.step + 1 == train.steps) report.curve.emplace_back(out.step, loss);
    if (!std::isfinite(loss) || loss > blow_up) {
      stopped = true;
      break;
    }
    const Batch g = (2.0 / static_cast<double>(y.size())) * (y_hat - y);
    const BatchGradients grads = block_circ_matvec_backward_batch(out.layer.delta(), cache, g, false);
    if (!all_finite(grads.grad_coeffs)) {
      stopped = true;
      break;
    }
    optimizer_step(out.layer.delta().coefficients(), grads.grad_coeffs, opt, out.optimizer);
    ++report.steps_run;
    if (train.stop_loss > 0.0 && full_loss() < train.stop_loss) {
      ++out.step;
      break;
    }
  }
  report.final_loss = stopped ? std::numeric_limits<double>::infinity() : full_loss();
  report.diverged = stopped || !std::isfinite(report.final_loss) || report.final_loss > report.initial_loss;
  report.base_intact = std::memcmp(base_snapshot.data(), out.layer.base().data(),
                                   sizeof(double) * static_cast<std::size_t>(base_snapshot.size())) == 0;
  return out;
}

}  // namespace bca

#endif  // BCA_ADAPTER_HPP_
