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

#ifndef BCA_COMPLEXITY_HPP_
#define BCA_COMPLEXITY_HPP_

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bca/error.hpp"

namespace bca {

/// The adapted weight matrices of a model: `matrices_per_layer` matrices of
/// shape d_out x d_in in each of `num_layers` layers.
struct LayerSpec {
  std::uint64_t d_out = 0;
  std::uint64_t d_in = 0;
  std::uint64_t matrices_per_layer = 0;
  std::uint64_t num_layers = 0;

  void validate() const {
    if (d_out == 0 || d_in == 0) throw ConfigError("d", "dimensions must be positive");
    if (matrices_per_layer == 0) throw ConfigError("matrices", "must be positive");
    if (num_layers == 0) throw ConfigError("layers", "must be positive");
  }

  std::uint64_t matrix_count() const { return matrices_per_layer * num_layers; }
};

/// Query and value projections of LLaMA2-7B.
inline LayerSpec llama2_7b_qv() { return {4096, 4096, 2, 32}; }
inline LayerSpec roberta_base_qv() { return {768, 768, 2, 12}; }
inline LayerSpec roberta_large_qv() { return {1024, 1024, 2, 24}; }

namespace detail {

inline void require_divisible(const LayerSpec& spec, std::uint64_t p) {
  spec.validate();
  if (p == 0 || spec.d_out % p != 0 || spec.d_in % p != 0) {
    std::string d = spec.d_out == spec.d_in ? "d=" + std::to_string(spec.d_in)
                                            : "d_out=" + std::to_string(spec.d_out) + ", d_in=" + std::to_string(spec.d_in);
    throw ConfigError("p", "block size p=" + std::to_string(p) + " does not divide " + d);
  }
}

}  // namespace detail

/// Trainable coefficients: d_out * d_in / p per matrix.
inline std::uint64_t bca_params(const LayerSpec& spec, std::uint64_t p) {
  detail::require_divisible(spec, p);
  return spec.matrix_count() * (spec.d_out / p) * (spec.d_in / p) * p;
}

/// Cost of one complex FFT of length n under the 5 n log2 n convention.
inline std::uint64_t fft_flops(std::uint64_t n) {
  if (n <= 1) return 0;
  return static_cast<std::uint64_t>(std::llround(5.0 * static_cast<double>(n) * std::log2(static_cast<double>(n))));
}

/// Forward FLOPs per token. Per matrix: q_out*q_in coefficient FFTs, q_in
/// input FFTs and q_out inverse FFTs at 5 p log2 p each, 6 FLOPs per complex
/// multiply (q_out*q_in*p of them) and 2 per complex add in the spectral
/// accumulation (q_out*(q_in-1)*p of them).
inline std::uint64_t bca_flops(const LayerSpec& spec, std::uint64_t p) {
  detail::require_divisible(spec, p);
  const std::uint64_t q_out = spec.d_out / p;
  const std::uint64_t q_in = spec.d_in / p;
  const std::uint64_t transforms = q_out * q_in + q_in + q_out;
  const std::uint64_t per_matrix = transforms * fft_flops(p) + q_out * q_in * 6 * p + q_out * (q_in - 1) * 2 * p;
  return spec.matrix_count() * per_matrix;
}

/// r (d_out + d_in) per matrix.
inline std::uint64_t lora_params(const LayerSpec& spec, std::uint64_t rank) {
  spec.validate();
  if (rank == 0) throw ConfigError("rank", "must be positive");
  return spec.matrix_count() * rank * (spec.d_out + spec.d_in);
}

/// Two dense low-rank matvecs at 2 FLOPs per multiply-add.
inline std::uint64_t lora_flops(const LayerSpec& spec, std::uint64_t rank) { return 2 * lora_params(spec, rank); }

/// Trainable scaling vectors of lengths r and d_out per matrix.
inline std::uint64_t vera_params(const LayerSpec& spec, std::uint64_t rank) {
  spec.validate();
  if (rank == 0) throw ConfigError("rank", "must be positive");
  return spec.matrix_count() * (rank + spec.d_out);
}

/// Spectral coefficients per matrix.
inline std::uint64_t fourierft_params(const LayerSpec& spec, std::uint64_t coefficients) {
  spec.validate();
  if (coefficients == 0) throw ConfigError("coefficients", "must be positive");
  return spec.matrix_count() * coefficients;
}

/// Documented model only: two 2D FFTs of a d_out x d_in grid per matrix, 5 N log2 N each with N = d_out * d_in.
inline std::uint64_t fourierft_flops(const LayerSpec& spec) {
  spec.validate();
  return spec.matrix_count() * 2 * fft_flops(spec.d_out * spec.d_in);
}

inline std::uint64_t full_params(const LayerSpec& spec) {
  spec.validate();
  return spec.matrix_count() * spec.d_out * spec.d_in;
}

/// One requested row: method name plus its size knob (p, rank or coefficient count).
struct MethodSpec {
  std::string method;  // bca | lora | vera | fourierft | full
  std::uint64_t knob = 0;
};

struct ComplexityReport {
  std::string method;
  std::string label;
  std::uint64_t parameters = 0;
  std::optional<std::uint64_t> flops;  // per token, forward
  LayerSpec spec;
  std::uint64_t knob = 0;
};

/// Human-readable count with decimal K/M/G units and two decimals.
inline std::string format_si(std::uint64_t value) {
  char buf[32];
  const auto v = static_cast<double>(value);
  if (value >= 1'000'000'000ULL) {
    std::snprintf(buf, sizeof buf, "%.2fG", v / 1e9);
  } else if (value >= 1'000'000ULL) {
    std::snprintf(buf, sizeof buf, "%.2fM", v / 1e6);
  } else if (value >= 1'000ULL) {
    std::snprintf(buf, sizeof buf, "%.2fK", v / 1e3);
  } else {
    std::snprintf(buf, sizeof buf, "%llu", static_cast<unsigned long long>(value));
  }
  return buf;
}

/// FLOP counts are shown in giga units throughout.
inline std::string format_giga(std::uint64_t value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2fG", static_cast<double>(value) / 1e9);
  return buf;
}

inline ComplexityReport complexity_row(const LayerSpec& spec, const MethodSpec& m) {
  ComplexityReport r{m.method, {}, 0, std::nullopt, spec, m.knob};
  if (m.method == "bca") {
    r.label = "bca p=" + std::to_string(m.knob);
    r.parameters = bca_params(spec, m.knob);
    r.flops = bca_flops(spec, m.knob);
  } else if (m.method == "lora") {
    r.label = "lora r=" + std::to_string(m.knob);
    r.parameters = lora_params(spec, m.knob);
    r.flops = lora_flops(spec, m.knob);
  } else if (m.method == "vera") {
    r.label = "vera r=" + std::to_string(m.knob);
    r.parameters = vera_params(spec, m.knob);
  } else if (m.method == "fourierft") {
    r.label = "fourierft n=" + std::to_string(m.knob);
    r.parameters = fourierft_params(spec, m.knob);
    r.flops = fourierft_flops(spec);
  } else if (m.method == "full") {
    r.label = "full";
    r.parameters = full_params(spec);
  } else {
    throw ConfigError("methods", "unknown method '" + m.method + "'");
  }
  return r;
}

/// Deterministic table, one row per requested method in request order.
inline std::vector<ComplexityReport> report(const std::vector<MethodSpec>& methods, const LayerSpec& spec) {
  std::vector<ComplexityReport> rows;
  rows.reserve(methods.size());
  for (const auto& m : methods) rows.push_back(complexity_row(spec, m));
  return rows;
}

inline std::string render_table(const std::vector<ComplexityReport>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-18s %14s %9s %14s %9s\n", "method", "params", "Param.", "flops", "FLOPs");
  out << line;
  for (const auto& r : rows) {
    const std::string flops = r.flops ? std::to_string(*r.flops) : "-";
    const std::string flops_h = r.flops ? format_giga(*r.flops) : "-";
    std::snprintf(line, sizeof line, "%-18s %14llu %9s %14s %9s\n", r.label.c_str(),
                  static_cast<unsigned long long>(r.parameters), format_si(r.parameters).c_str(), flops.c_str(),
                  flops_h.c_str());
    out << line;
  }
  return out.str();
}

inline nlohmann::json to_json(const std::vector<ComplexityReport>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j = {{"method", r.method},
                        {"label", r.label},
                        {"knob", r.knob},
                        {"parameters", r.parameters},
                        {"parameters_human", format_si(r.parameters)},
                        {"d_out", r.spec.d_out},
                        {"d_in", r.spec.d_in},
                        {"matrices_per_layer", r.spec.matrices_per_layer},
                        {"num_layers", r.spec.num_layers}};
    if (r.flops) {
      j["flops"] = *r.flops;
      j["flops_human"] = format_giga(*r.flops);
    } else {
      j["flops"] = nullptr;
    }
    arr.push_back(std::move(j));
  }
  return {{"schema_version", 1}, {"rows", std::move(arr)}};
}

}  // namespace bca

#endif  // BCA_COMPLEXITY_HPP_
