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

// bca: command-line driver for the simulation, divergence demo, toy adapter
// training and complexity report.
//
//   bca simulate        [--config f.json] [--n 1024] [--block-sizes 128,256] ...
//   bca demo-divergence [--n 1024] [--p 1024] [--lr 0] ...
//   bca train-toy       [--p 32] [--steps 5000] [--merge] [--resume ckpt] ...
//   bca complexity      [--preset llama2-7b-qv] [--p 128,256] [--methods bca,lora:64]
//
// Exit codes: 0 success, 2 configuration error, 3 I/O or file-format error,
// 4 numeric failure, 1 anything else.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "bca/bca.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

constexpr int kSchemaVersion = 1;
constexpr const char* kCsvVersion = "bca-csv v1";

// ---------------------------------------------------------------------------
// Config-file reading
// ---------------------------------------------------------------------------

void require_object(const json& j, const std::string& field) {
  if (!j.is_object()) throw bca::ConfigError(field, "must be a JSON object");
}

void reject_unknown(const json& j, const std::string& prefix, std::initializer_list<const char*> known) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw bca::ConfigError(prefix + key, "unknown key");
  }
}

template <class T>
void read(const json& j, const std::string& prefix, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw bca::ConfigError(prefix + key, "has the wrong type (got " + std::string(j.at(key).type_name()) + ")");
  }
}

void read_optimizer(const json& j, const std::string& prefix, bca::OptimizerConfig& o) {
  require_object(j, prefix);
  const std::string p = prefix + ".";
  reject_unknown(j, p, {"kind", "lr", "rho", "eps", "heuristic", "clip_norm"});
  std::string kind{bca::to_string(o.kind)};
  read(j, p, "kind", kind);
  try {
    o.kind = bca::parse_optimizer_kind(kind);
  } catch (const bca::ConfigError& e) {
    throw bca::ConfigError(p + "kind", e.what());
  }
  read(j, p, "lr", o.base_lr);
  read(j, p, "rho", o.rho);
  read(j, p, "eps", o.eps);
  read(j, p, "heuristic", o.heuristic_enabled);
  read(j, p, "clip_norm", o.clip_norm);
}

json optimizer_json(const bca::OptimizerConfig& o) {
  return {{"kind", bca::to_string(o.kind)}, {"lr", o.base_lr},          {"rho", o.rho}, {"eps", o.eps},
          {"heuristic", o.heuristic_enabled}, {"clip_norm", o.clip_norm}};
}

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw bca::IoError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw bca::ConfigError("config", std::string("malformed JSON in ") + path + ": " + e.what());
  }
  require_object(j, "config");
  reject_unknown(j, "", {"seed", "out", "simulation", "divergence", "toy", "complexity"});
  return j;
}

// ---------------------------------------------------------------------------
// Flag overrides: a flag wins over the config file only when given.
// ---------------------------------------------------------------------------

class Overrides {
 public:
  template <class T>
  CLI::Option* option(CLI::App* app, const std::string& name, T& target, const std::string& desc) {
    auto holder = std::make_shared<T>(target);
    CLI::Option* o = app->add_option(name, *holder, desc);
    apply_.push_back([o, holder, &target] {
      if (o->count() > 0) target = *holder;
    });
    return o;
  }

  CLI::Option* flag(CLI::App* app, const std::string& name, bool& target, const std::string& desc) {
    auto holder = std::make_shared<bool>(target);
    CLI::Option* o = app->add_flag(name, *holder, desc);
    apply_.push_back([o, holder, &target] {
      if (o->count() > 0) target = *holder;
    });
    return o;
  }

  void apply() const {
    for (const auto& f : apply_) f();
  }

 private:
  std::vector<std::function<void()>> apply_;
};

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  std::string out;
  CLI::Option* out_opt = nullptr;
  bool json = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  c.seed_opt = app->add_option("--seed", c.seed, "Random seed");
  c.out_opt = app->add_option("--out", c.out, "Output directory (overrides $BCA_OUT_DIR)");
  app->add_flag("--json", c.json, "Print the JSON summary instead of the text report");
}

/// Seed precedence: --seed, then the config file, then 0.
std::uint64_t resolve_seed(const Common& c, const json& file) {
  if (c.seed_opt->count() > 0) return c.seed;
  std::uint64_t seed = 0;
  read(file, "", "seed", seed);
  return seed;
}

/// Output directory precedence: --out, $BCA_OUT_DIR, config "out", out/<command>.
fs::path resolve_out(const Common& c, const json& file, const std::string& command) {
  if (c.out_opt->count() > 0) return c.out;
  if (const char* env = std::getenv("BCA_OUT_DIR"); env && *env) return env;
  std::string out;
  read(file, "", "out", out);
  if (!out.empty()) return out;
  return fs::path("out") / command;
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Files are rendered in memory first and written together, so a failed run
/// leaves nothing behind.
class OutputSet {
 public:
  void add(const std::string& name, std::string content) { files_[name] = std::move(content); }

  void write(const fs::path& dir) const {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw bca::IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    for (const auto& [name, content] : files_) {
      const fs::path tmp = dir / (name + ".tmp");
      {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw bca::IoError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw bca::IoError("failed writing " + tmp.string());
      }
      fs::rename(tmp, dir / name, ec);
      if (ec) throw bca::IoError("cannot move " + tmp.string() + " into place: " + ec.message());
    }
  }

 private:
  std::map<std::string, std::string> files_;
};

std::string sim_csv(const bca::ConfigurationResult& r, const std::string& command) {
  std::ostringstream out;
  out << "# " << kCsvVersion << " command=" << command << " run=" << r.label << "\n";
  out << "iteration,mse,grad_mean_abs\n";
  for (const auto& rec : r.records) out << rec.iteration << ',' << num(rec.mse) << ',' << num(rec.grad_mean_abs) << '\n';
  return out.str();
}

std::string loss_csv(const std::vector<std::pair<std::size_t, double>>& curve, const std::string& command,
                     const std::string& run) {
  std::ostringstream out;
  out << "# " << kCsvVersion << " command=" << command << " run=" << run << "\n";
  out << "iteration,loss\n";
  for (const auto& [it, loss] : curve) out << it << ',' << num(loss) << '\n';
  return out.str();
}

std::vector<std::pair<std::size_t, double>> mse_curve(const bca::ConfigurationResult& r) {
  std::vector<std::pair<std::size_t, double>> c;
  c.reserve(r.records.size());
  for (const auto& rec : r.records) c.emplace_back(rec.iteration, rec.mse);
  return c;
}

json run_json(const bca::ConfigurationResult& r) {
  return {{"label", r.label},
          {"block_size", r.block_size},
          {"dense", r.dense},
          {"lr", r.lr},
          {"initial_mse", r.initial_mse},
          {"final_mse", std::isfinite(r.final_mse) ? json(r.final_mse) : json(nullptr)},
          {"early_grad_mean", r.early_grad_mean},
          {"diverged", r.diverged},
          {"iterations_run", r.iterations_run}};
}

/// Minimal .npy (format 1.0) writer for a row-major float64 matrix.
std::string npy(const bca::DenseMatrix& m) {
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + std::to_string(m.rows()) + ", " +
                       std::to_string(m.cols()) + "), }";
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');
  std::string out("\x93NUMPY\x01\x00", 8);
  out.push_back(static_cast<char>(header.size() & 0xFF));
  out.push_back(static_cast<char>((header.size() >> 8) & 0xFF));
  out += header;
  out.reserve(out.size() + 8 * static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const auto bits = std::bit_cast<std::uint64_t>(m(i, j));
      for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateCmd {
  Common common;
  bca::SimulationConfig config;
  Overrides ov;
  std::string kind;
  CLI::Option* kind_opt = nullptr;
};

void setup_simulate(CLI::App* sub, SimulateCmd& c) {
  add_common(sub, c.common);
  auto& s = c.config;
  c.ov.option(sub, "--n", s.n, "Dimension");
  c.ov.option(sub, "--block-sizes", s.block_sizes, "Block sizes to train")->delimiter(',');
  c.ov.option(sub, "--include-dense", s.include_dense, "Also train the dense model (true/false)");
  c.ov.option(sub, "--batch-size", s.batch_size, "Minibatch size");
  c.ov.option(sub, "--iterations", s.iterations, "Training iterations");
  c.ov.option(sub, "--noise-std", s.noise_std, "Label noise standard deviation");
  c.ov.option(sub, "--record-every", s.record_every, "Record every k-th iteration");
  c.ov.option(sub, "--target-block-size", s.target_block_size, "Use a block-circulant target with this p (0: dense)");
  c.ov.option(sub, "--early-window", s.early_window, "Iterations averaged for the early gradient statistic");
  c.ov.option(sub, "--lr", s.optimizer.base_lr, "Base learning rate");
  c.ov.option(sub, "--rho", s.optimizer.rho, "Adadelta decay");
  c.ov.option(sub, "--eps", s.optimizer.eps, "Adadelta epsilon");
  c.ov.option(sub, "--clip-norm", s.optimizer.clip_norm, "Gradient norm clip (0: off)");
  c.ov.flag(sub, "--heuristic,!--no-heuristic", s.optimizer.heuristic_enabled, "Divide the learning rate by p");
  c.kind_opt = sub->add_option("--optimizer", c.kind, "sgd or adadelta");
}

void read_simulation(const json& file, bca::SimulationConfig& s) {
  if (!file.contains("simulation")) return;
  const json& j = file.at("simulation");
  require_object(j, "simulation");
  const std::string p = "simulation.";
  reject_unknown(j, p,
                 {"n", "block_sizes", "include_dense", "batch_size", "iterations", "optimizer", "noise_std",
                  "record_every", "target_block_size", "early_window"});
  read(j, p, "n", s.n);
  read(j, p, "block_sizes", s.block_sizes);
  read(j, p, "include_dense", s.include_dense);
  read(j, p, "batch_size", s.batch_size);
  read(j, p, "iterations", s.iterations);
  read(j, p, "noise_std", s.noise_std);
  read(j, p, "record_every", s.record_every);
  read(j, p, "target_block_size", s.target_block_size);
  read(j, p, "early_window", s.early_window);
  if (j.contains("optimizer")) read_optimizer(j.at("optimizer"), "simulation.optimizer", s.optimizer);
}

json simulation_config_json(const bca::SimulationConfig& s) {
  return {{"n", s.n},
          {"block_sizes", s.block_sizes},
          {"include_dense", s.include_dense},
          {"batch_size", s.batch_size},
          {"iterations", s.iterations},
          {"optimizer", optimizer_json(s.optimizer)},
          {"noise_std", s.noise_std},
          {"seed", s.seed},
          {"record_every", s.record_every},
          {"target_block_size", s.target_block_size},
          {"early_window", s.early_window}};
}

int run_simulate(SimulateCmd& c) {
  const json file = load_config_file(c.common.config);
  bca::SimulationConfig& s = c.config;
  read_simulation(file, s);
  c.ov.apply();
  if (c.kind_opt->count() > 0) s.optimizer.kind = bca::parse_optimizer_kind(c.kind);
  s.seed = resolve_seed(c.common, file);
  const fs::path out = resolve_out(c.common, file, "simulate");
  s.validate();
  s.optimizer.validate();

  const bca::SimulationReport report = bca::run_simulation(s);

  OutputSet files;
  json runs = json::array();
  for (const auto& r : report.runs) {
    files.add(r.label + ".csv", sim_csv(r, "simulate"));
    json rj = run_json(r);
    rj["csv"] = r.label + ".csv";
    runs.push_back(std::move(rj));
  }
  json summary = {{"schema_version", kSchemaVersion},
                  {"command", "simulate"},
                  {"config", simulation_config_json(s)},
                  {"runs", runs}};
  if (const auto slope = bca::gradient_scaling_exponent(report)) summary["gradient_scaling_exponent"] = *slope;
  files.add("summary.json", summary.dump(2) + "\n");
  files.write(out);

  if (c.common.json) {
    std::cout << summary.dump(2) << "\n";
    return 0;
  }
  std::printf("%-8s %12s %14s %14s %16s %9s\n", "run", "lr", "initial_mse", "final_mse", "early_grad_mean",
              "diverged");
  for (const auto& r : report.runs) {
    std::printf("%-8s %12.6g %14.6g %14.6g %16.6g %9s\n", r.label.c_str(), r.lr, r.initial_mse, r.final_mse,
                r.early_grad_mean, r.diverged ? "yes" : "no");
  }
  if (const auto slope = bca::gradient_scaling_exponent(report)) {
    std::printf("early gradient scaling exponent (log-log slope over p): %.4f\n", *slope);
  }
  std::printf("wrote %zu files to %s\n", report.runs.size() + 1, out.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// demo-divergence
// ---------------------------------------------------------------------------

struct DivergenceCmd {
  Common common;
  bca::DivergenceConfig config;
  Overrides ov;
  std::string kind;
  CLI::Option* kind_opt = nullptr;
};

void setup_divergence(CLI::App* sub, DivergenceCmd& c) {
  add_common(sub, c.common);
  auto& d = c.config;
  c.ov.option(sub, "--n", d.n, "Dimension");
  c.ov.option(sub, "--p", d.p, "Block size");
  c.ov.option(sub, "--lr", d.lr, "Base learning rate (0: calibrate on the dense model)");
  c.ov.option(sub, "--iterations", d.iterations, "Training iterations per run");
  c.ov.option(sub, "--calibration-iterations", d.calibration_iterations, "Iterations per calibration probe");
  c.ov.option(sub, "--calibration-ratio", d.calibration_ratio, "Bisection stops below this bracket ratio");
  c.ov.option(sub, "--batch-size", d.batch_size, "Minibatch size");
  c.ov.option(sub, "--noise-std", d.noise_std, "Label noise standard deviation");
  c.ov.option(sub, "--record-every", d.record_every, "Record every k-th iteration");
  c.ov.option(sub, "--converged-mse", d.converged_mse, "Final MSE that counts as converged");
  c.kind_opt = sub->add_option("--optimizer", c.kind, "sgd or adadelta");
}

void read_divergence(const json& file, bca::DivergenceConfig& d) {
  if (!file.contains("divergence")) return;
  const json& j = file.at("divergence");
  require_object(j, "divergence");
  const std::string p = "divergence.";
  reject_unknown(j, p,
                 {"n", "p", "lr", "optimizer", "iterations", "calibration_iterations", "calibration_ratio",
                  "batch_size", "noise_std", "record_every", "converged_mse"});
  read(j, p, "n", d.n);
  read(j, p, "p", d.p);
  read(j, p, "lr", d.lr);
  if (j.contains("optimizer")) {
    std::string kind;
    read(j, p, "optimizer", kind);
    try {
      d.optimizer_kind = bca::parse_optimizer_kind(kind);
    } catch (const bca::ConfigError& e) {
      throw bca::ConfigError(p + "optimizer", e.what());
    }
  }
  read(j, p, "iterations", d.iterations);
  read(j, p, "calibration_iterations", d.calibration_iterations);
  read(j, p, "calibration_ratio", d.calibration_ratio);
  read(j, p, "batch_size", d.batch_size);
  read(j, p, "noise_std", d.noise_std);
  read(j, p, "record_every", d.record_every);
  read(j, p, "converged_mse", d.converged_mse);
}

int run_divergence(DivergenceCmd& c) {
  const json file = load_config_file(c.common.config);
  read_divergence(file, c.config);
  c.ov.apply();
  bca::DivergenceConfig& d = c.config;
  if (c.kind_opt->count() > 0) d.optimizer_kind = bca::parse_optimizer_kind(c.kind);
  d.seed = resolve_seed(c.common, file);
  const fs::path out = resolve_out(c.common, file, "demo-divergence");
  d.validate();

  const bca::DivergenceVerdict v = bca::divergence_verdict(d);

  OutputSet files;
  files.add("dense.csv", loss_csv(mse_curve(v.dense), "demo-divergence", "dense"));
  files.add("without_heuristic.csv", loss_csv(mse_curve(v.without_heuristic), "demo-divergence", "without_heuristic"));
  files.add("with_heuristic.csv", loss_csv(mse_curve(v.with_heuristic), "demo-divergence", "with_heuristic"));
  const json verdict = {
      {"schema_version", kSchemaVersion},
      {"command", "demo-divergence"},
      {"config",
       {{"n", d.n},
        {"p", d.p},
        {"optimizer", bca::to_string(d.optimizer_kind)},
        {"iterations", d.iterations},
        {"calibration_iterations", d.calibration_iterations},
        {"calibration_ratio", d.calibration_ratio},
        {"batch_size", d.batch_size},
        {"noise_std", d.noise_std},
        {"seed", d.seed},
        {"converged_mse", d.converged_mse}}},
      {"lr", v.lr},
      {"lr_source", d.lr > 0.0 ? "given" : "calibrated"},
      {"heuristic_factor", 1.0 / static_cast<double>(d.p)},
      {"heuristic_lr", v.heuristic_lr},
      {"diverged_without", v.diverged_without},
      {"converged_with", v.converged_with},
      {"diverged_with", v.with_heuristic.diverged},
      {"runs", {run_json(v.dense), run_json(v.without_heuristic), run_json(v.with_heuristic)}}};
  files.add("verdict.json", verdict.dump(2) + "\n");
  files.write(out);

  if (c.common.json) {
    std::cout << verdict.dump(2) << "\n";
    return 0;
  }
  std::printf("%s lr = %.6g\n", d.lr > 0.0 ? "given" : "largest dense-converging", v.lr);
  std::printf("heuristic: lr / p = %.6g / %zu = %.6g\n", v.lr, d.p, v.heuristic_lr);
  auto line = [](const char* name, const bca::ConfigurationResult& r) {
    std::printf("%-20s initial %.6g  final %.6g  %s\n", name, r.initial_mse, r.final_mse,
                r.diverged ? "diverged" : "stable");
  };
  line("dense", v.dense);
  line("heuristic off", v.without_heuristic);
  line("heuristic on", v.with_heuristic);
  std::printf("verdict: diverged_without=%s converged_with=%s\n", v.diverged_without ? "true" : "false",
              v.converged_with ? "true" : "false");
  std::printf("wrote 4 files to %s\n", out.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train-toy
// ---------------------------------------------------------------------------

struct ToyCmd {
  Common common;
  bca::ToyTaskConfig task;
  bca::ToyTrainConfig train;
  Overrides ov;
  std::string kind;
  CLI::Option* kind_opt = nullptr;
  CLI::Option* task_seed_opt = nullptr;
  bool merge = false;
  std::string resume;
};

void setup_toy(CLI::App* sub, ToyCmd& c) {
  add_common(sub, c.common);
  c.ov.option(sub, "--input-dim", c.task.input_dim, "Input width");
  c.ov.option(sub, "--output-dim", c.task.output_dim, "Output width");
  c.ov.option(sub, "--frozen-layers", c.task.frozen_layers, "Frozen tanh layers before the adapted one");
  c.ov.option(sub, "--dataset-size", c.task.dataset_size, "Training examples");
  c.task_seed_opt = c.ov.option(sub, "--task-seed", c.task.task_seed, "Task seed (defaults to --seed)");
  c.ov.option(sub, "--label-noise", c.task.label_noise, "Target noise standard deviation");
  c.ov.option(sub, "--perturbation-scale", c.task.perturbation_scale, "Scale of the hidden change");
  c.ov.option(sub, "--p", c.train.block_size, "Adapter block size");
  c.ov.option(sub, "--steps", c.train.steps, "Total training steps");
  c.ov.option(sub, "--batch-size", c.train.batch_size, "Minibatch size");
  c.ov.option(sub, "--record-every", c.train.record_every, "Record every k-th step");
  c.ov.option(sub, "--stop-loss", c.train.stop_loss, "Stop once the full loss is below this (0: off)");
  c.ov.option(sub, "--lr", c.train.optimizer.base_lr, "Base learning rate");
  c.ov.option(sub, "--rho", c.train.optimizer.rho, "Adadelta decay");
  c.ov.option(sub, "--eps", c.train.optimizer.eps, "Adadelta epsilon");
  c.ov.option(sub, "--clip-norm", c.train.optimizer.clip_norm, "Gradient norm clip (0: off)");
  c.ov.flag(sub, "--heuristic,!--no-heuristic", c.train.optimizer.heuristic_enabled, "Divide the learning rate by p");
  c.kind_opt = sub->add_option("--optimizer", c.kind, "sgd or adadelta");
  sub->add_flag("--merge", c.merge, "Also write the merged dense matrix and check merge equivalence");
  sub->add_option("--resume", c.resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
}

void read_toy(const json& file, bca::ToyTaskConfig& task, bca::ToyTrainConfig& train, bool& task_seed_set) {
  if (!file.contains("toy")) return;
  const json& j = file.at("toy");
  require_object(j, "toy");
  reject_unknown(j, "toy.", {"task", "train"});
  if (j.contains("task")) {
    const json& t = j.at("task");
    require_object(t, "toy.task");
    const std::string p = "toy.task.";
    reject_unknown(t, p,
                   {"input_dim", "output_dim", "frozen_layers", "dataset_size", "task_seed", "label_noise",
                    "perturbation_scale"});
    read(t, p, "input_dim", task.input_dim);
    read(t, p, "output_dim", task.output_dim);
    read(t, p, "frozen_layers", task.frozen_layers);
    read(t, p, "dataset_size", task.dataset_size);
    read(t, p, "task_seed", task.task_seed);
    task_seed_set = t.contains("task_seed");
    read(t, p, "label_noise", task.label_noise);
    read(t, p, "perturbation_scale", task.perturbation_scale);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    require_object(t, "toy.train");
    const std::string p = "toy.train.";
    reject_unknown(t, p, {"block_size", "steps", "batch_size", "optimizer", "record_every", "stop_loss"});
    read(t, p, "block_size", train.block_size);
    read(t, p, "steps", train.steps);
    read(t, p, "batch_size", train.batch_size);
    read(t, p, "record_every", train.record_every);
    read(t, p, "stop_loss", train.stop_loss);
    if (t.contains("optimizer")) read_optimizer(t.at("optimizer"), "toy.train.optimizer", train.optimizer);
  }
}

int run_toy(ToyCmd& c) {
  const json file = load_config_file(c.common.config);
  bool task_seed_set = false;
  read_toy(file, c.task, c.train, task_seed_set);
  c.ov.apply();
  if (c.kind_opt->count() > 0) c.train.optimizer.kind = bca::parse_optimizer_kind(c.kind);
  task_seed_set = task_seed_set || c.task_seed_opt->count() > 0;
  const bool seed_given = c.common.seed_opt->count() > 0 || file.contains("seed");
  c.train.seed = resolve_seed(c.common, file);
  const fs::path out = resolve_out(c.common, file, "train-toy");

  std::optional<bca::ToyResumeState> resume;
  if (!c.resume.empty()) {
    const bca::AdapterCheckpoint ck = bca::load_checkpoint(c.resume);
    const bca::BlockCirculantMatrix expected(c.task.output_dim, c.task.input_dim, c.train.block_size);
    if (ck.delta.rows() != expected.rows() || ck.delta.cols() != expected.cols() ||
        ck.delta.block_size() != expected.block_size()) {
      throw bca::CompatibilityError("checkpoint holds " + ck.delta.shape_string() + " but the configured adapter is " +
                                    expected.shape_string());
    }
    if (seed_given && ck.metadata.seed != c.train.seed) {
      throw bca::ConfigError("seed", "checkpoint was trained with seed " + std::to_string(ck.metadata.seed) +
                                         " but --seed is " + std::to_string(c.train.seed));
    }
    c.train.seed = ck.metadata.seed;
    bca::ToyResumeState r{ck.delta, {}, ck.metadata.step};
    if (ck.optimizer_state.size() == 2) {
      r.optimizer.mean_sq_grad = ck.optimizer_state[0];
      r.optimizer.mean_sq_update = ck.optimizer_state[1];
    }
    r.optimizer.step = ck.metadata.step;
    resume = std::move(r);
  }
  if (!task_seed_set) c.task.task_seed = c.train.seed;
  c.train.optimizer.block_size = c.train.block_size;
  c.train.validate();
  c.task.validate(c.train.block_size);

  const bca::ToyResult result = bca::train_toy_adapter(c.task, c.train, resume);
  const bca::ToyReport& rep = result.report;

  std::optional<double> merge_dev;
  bca::DenseMatrix merged;
  if (c.merge) {
    const bca::ToyTask task = bca::make_toy_task(c.task, c.train.block_size);
    merged = bca::merge(result.layer);
    const bca::Batch a = bca::adapter_forward_batch(result.layer, task.features);
    const bca::Batch m = merged * task.features;
    merge_dev = (a - m).cwiseAbs().maxCoeff();
  }

  json report = {{"schema_version", kSchemaVersion},
                 {"command", "train-toy"},
                 {"task",
                  {{"input_dim", c.task.input_dim},
                   {"output_dim", c.task.output_dim},
                   {"frozen_layers", c.task.frozen_layers},
                   {"dataset_size", c.task.dataset_size},
                   {"task_seed", c.task.task_seed},
                   {"label_noise", c.task.label_noise},
                   {"perturbation_scale", c.task.perturbation_scale}}},
                 {"train",
                  {{"block_size", c.train.block_size},
                   {"steps", c.train.steps},
                   {"batch_size", c.train.batch_size},
                   {"seed", c.train.seed},
                   {"optimizer", optimizer_json(c.train.optimizer)},
                   {"record_every", c.train.record_every},
                   {"stop_loss", c.train.stop_loss}}},
                 {"resumed_from_step", resume ? json(resume->step) : json(nullptr)},
                 {"step", result.step},
                 {"steps_run", rep.steps_run},
                 {"initial_loss", rep.initial_loss},
                 {"final_loss", std::isfinite(rep.final_loss) ? json(rep.final_loss) : json(nullptr)},
                 {"diverged", rep.diverged},
                 {"base_intact", rep.base_intact},
                 {"trainable_parameters", rep.trainable_parameters},
                 {"effective_lr", rep.effective_lr},
                 {"checkpoint", "adapter.bin"}};
  if (merge_dev) {
    report["merge_max_deviation"] = *merge_dev;
    report["merged"] = "merged.npy";
  }

  OutputSet files;
  files.add("loss.csv", loss_csv(rep.curve, "train-toy", "adapter"));
  files.add("report.json", report.dump(2) + "\n");
  if (merge_dev) files.add("merged.npy", npy(merged));
  files.write(out);
  bca::CheckpointMetadata meta;
  meta.seed = c.train.seed;
  meta.step = result.step;
  meta.optimizer = c.train.optimizer;
  bca::save_checkpoint(result.layer, meta, out / "adapter.bin", &result.optimizer);

  if (c.common.json) {
    std::cout << report.dump(2) << "\n";
    return 0;
  }
  std::printf("trainable parameters: %zu\n", rep.trainable_parameters);
  std::printf("effective lr: %.6g%s\n", rep.effective_lr, c.train.optimizer.heuristic_enabled ? " (lr / p)" : "");
  std::printf("steps: %zu run, now at step %llu\n", rep.steps_run, static_cast<unsigned long long>(result.step));
  std::printf("loss: initial %.6g  final %.6g%s\n", rep.initial_loss, rep.final_loss,
              rep.diverged ? "  (diverged)" : "");
  if (merge_dev) std::printf("merge max deviation: %.3e\n", *merge_dev);
  std::printf("wrote checkpoint %s\n", (out / "adapter.bin").string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// complexity
// ---------------------------------------------------------------------------

struct ComplexityCmd {
  Common common;
  std::string preset = "llama2-7b-qv";
  std::uint64_t d = 0, d_out = 0, d_in = 0, layers = 0, matrices = 0;
  std::vector<std::uint64_t> p{128, 256, 512, 1024};
  std::vector<std::string> methods{"bca"};
  Overrides ov;
};

void setup_complexity(CLI::App* sub, ComplexityCmd& c) {
  add_common(sub, c.common);
  c.ov.option(sub, "--preset", c.preset, "llama2-7b-qv, roberta-base-qv or roberta-large-qv");
  c.ov.option(sub, "--d", c.d, "Square matrix dimension (sets d_out and d_in)");
  c.ov.option(sub, "--d-out", c.d_out, "Output dimension");
  c.ov.option(sub, "--d-in", c.d_in, "Input dimension");
  c.ov.option(sub, "--layers", c.layers, "Number of layers");
  c.ov.option(sub, "--matrices", c.matrices, "Adapted matrices per layer");
  c.ov.option(sub, "--p", c.p, "Block sizes for bca rows")->delimiter(',');
  c.ov.option(sub, "--methods", c.methods, "Rows: bca, lora:R, vera:R, fourierft:N, full")->delimiter(',');
}

void read_complexity(const json& file, ComplexityCmd& c) {
  if (!file.contains("complexity")) return;
  const json& j = file.at("complexity");
  require_object(j, "complexity");
  const std::string p = "complexity.";
  reject_unknown(j, p, {"preset", "d", "d_out", "d_in", "layers", "matrices", "p", "methods"});
  read(j, p, "preset", c.preset);
  read(j, p, "d", c.d);
  read(j, p, "d_out", c.d_out);
  read(j, p, "d_in", c.d_in);
  read(j, p, "layers", c.layers);
  read(j, p, "matrices", c.matrices);
  read(j, p, "p", c.p);
  read(j, p, "methods", c.methods);
}

bca::LayerSpec resolve_spec(const ComplexityCmd& c) {
  bca::LayerSpec s;
  if (c.preset == "llama2-7b-qv") {
    s = bca::llama2_7b_qv();
  } else if (c.preset == "roberta-base-qv") {
    s = bca::roberta_base_qv();
  } else if (c.preset == "roberta-large-qv") {
    s = bca::roberta_large_qv();
  } else {
    throw bca::ConfigError("preset", "unknown preset '" + c.preset + "'");
  }
  if (c.d) s.d_out = s.d_in = c.d;
  if (c.d_out) s.d_out = c.d_out;
  if (c.d_in) s.d_in = c.d_in;
  if (c.layers) s.num_layers = c.layers;
  if (c.matrices) s.matrices_per_layer = c.matrices;
  s.validate();
  return s;
}

std::vector<bca::MethodSpec> resolve_methods(const ComplexityCmd& c) {
  std::vector<bca::MethodSpec> out;
  for (const std::string& m : c.methods) {
    const auto colon = m.find(':');
    const std::string name = m.substr(0, colon);
    if (colon == std::string::npos) {
      if (name == "bca") {
        for (std::uint64_t p : c.p) out.push_back({"bca", p});
      } else if (name == "full") {
        out.push_back({"full", 0});
      } else {
        throw bca::ConfigError("methods", "method '" + name + "' needs a size, e.g. " + name + ":64");
      }
      continue;
    }
    std::uint64_t knob = 0;
    try {
      std::size_t used = 0;
      knob = std::stoull(m.substr(colon + 1), &used);
      if (used != m.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw bca::ConfigError("methods", "bad size in '" + m + "'");
    }
    out.push_back({name, knob});
  }
  return out;
}

int run_complexity(ComplexityCmd& c) {
  const json file = load_config_file(c.common.config);
  read_complexity(file, c);
  c.ov.apply();
  const bca::LayerSpec spec = resolve_spec(c);
  const auto rows = bca::report(resolve_methods(c), spec);
  const json j = bca::to_json(rows);
  const std::string table = bca::render_table(rows);

  const bool write = c.common.out_opt->count() > 0 || file.contains("out");
  if (write) {
    OutputSet files;
    files.add("complexity.json", j.dump(2) + "\n");
    files.add("complexity.txt", table);
    files.write(resolve_out(c.common, file, "complexity"));
  }
  if (c.common.json) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::printf("d_out=%llu d_in=%llu matrices/layer=%llu layers=%llu\n", static_cast<unsigned long long>(spec.d_out),
                static_cast<unsigned long long>(spec.d_in), static_cast<unsigned long long>(spec.matrices_per_layer),
                static_cast<unsigned long long>(spec.num_layers));
    std::cout << table;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block-circulant adapter experiments"};
  app.require_subcommand(1);

  SimulateCmd sim;
  DivergenceCmd div;
  ToyCmd toy;
  ComplexityCmd cx;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Single-layer regression: dense vs block-circulant");
  CLI::App* div_cmd = app.add_subcommand("demo-divergence", "Learning-rate divergence with and without lr / p");
  CLI::App* toy_cmd = app.add_subcommand("train-toy", "Train an adapter on a synthetic frozen model");
  CLI::App* cx_cmd = app.add_subcommand("complexity", "Parameter and FLOP table");

  int code = 0;
  try {
    setup_simulate(sim_cmd, sim);
    setup_divergence(div_cmd, div);
    setup_toy(toy_cmd, toy);
    setup_complexity(cx_cmd, cx);
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int rc = app.exit(e);
      return rc == 0 ? 0 : kExitConfig;
    }
    if (*sim_cmd) code = run_simulate(sim);
    if (*div_cmd) code = run_divergence(div);
    if (*toy_cmd) code = run_toy(toy);
    if (*cx_cmd) code = run_complexity(cx);
  } catch (const bca::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const bca::CompatibilityError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const bca::SizeError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const bca::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const bca::IntegrityError& e) {
    std::fprintf(stderr, "checkpoint error: %s\n", e.what());
    return kExitIo;
  } catch (const bca::VersionError& e) {
    std::fprintf(stderr, "checkpoint error: %s\n", e.what());
    return kExitIo;
  } catch (const bca::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return code;
}
