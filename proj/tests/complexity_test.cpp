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

#include "bca/complexity.hpp"

#include <cmath>

#include "bca/adapter.hpp"
#include "gtest/gtest.h"

namespace bca {
namespace {

double rel_gap(std::uint64_t value, double reference) {
  return std::abs(static_cast<double>(value) - reference) / reference;
}

TEST(BcaParamsTest, LlamaTable) {
  const LayerSpec s = llama2_7b_qv();
  EXPECT_EQ(bca_params(s, 128), 8388608u);
  EXPECT_EQ(bca_params(s, 256), 4194304u);
  EXPECT_EQ(bca_params(s, 512), 2097152u);
  EXPECT_EQ(bca_params(s, 1024), 1048576u);
  EXPECT_EQ(format_si(bca_params(s, 128)), "8.39M");
  EXPECT_EQ(format_si(bca_params(s, 256)), "4.19M");
  EXPECT_EQ(format_si(bca_params(s, 512)), "2.10M");
  EXPECT_EQ(format_si(bca_params(s, 1024)), "1.05M");
}

TEST(BcaParamsTest, RobertaBase) {
  EXPECT_EQ(bca_params(roberta_base_qv(), 768), 18432u);
  EXPECT_EQ(bca_params({768, 768, 1, 1}, 768), 768u);
}

TEST(BcaParamsTest, DivisibilityError) {
  try {
    bca_params(roberta_base_qv(), 100);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("768"), std::string::npos) << what;
    EXPECT_NE(what.find("100"), std::string::npos) << what;
  }
  EXPECT_THROW(bca_flops(llama2_7b_qv(), 3), ConfigError);
  EXPECT_THROW(bca_params(llama2_7b_qv(), 0), ConfigError);
  EXPECT_THROW(bca_params({0, 16, 1, 1}, 4), ConfigError);
}

TEST(BcaFlopsTest, LlamaWithinTolerance) {
  const LayerSpec s = llama2_7b_qv();
  EXPECT_LT(rel_gap(bca_flops(s, 128), 0.32e9), 0.25);
  EXPECT_LT(rel_gap(bca_flops(s, 256), 0.19e9), 0.25);
  EXPECT_LT(rel_gap(bca_flops(s, 512), 0.12e9), 0.25);
  EXPECT_LT(rel_gap(bca_flops(s, 1024), 0.08e9), 0.25);
}

TEST(BcaFlopsTest, SingleCirculantIsThreeFftsPlusProduct) {
  for (std::uint64_t p : {2u, 8u, 64u, 1024u}) {
    const double expected = 3.0 * 5.0 * static_cast<double>(p) * std::log2(static_cast<double>(p)) + 6.0 * p;
    EXPECT_EQ(bca_flops({p, p, 1, 1}, p), static_cast<std::uint64_t>(expected)) << p;
  }
}

TEST(BcaFlopsTest, HandCountedInstance) {
  // d=16, p=4: q=4, 16+4+4 FFTs of 40 FLOPs, 16*24 multiply, 4*3*8 add.
  EXPECT_EQ(bca_flops({16, 16, 1, 1}, 4), 24u * 40u + 16u * 24u + 4u * 3u * 8u);
}

TEST(LoraTest, Counts) {
  EXPECT_EQ(lora_params(llama2_7b_qv(), 64), 33554432u);
  EXPECT_EQ(format_si(lora_params(llama2_7b_qv(), 64)), "33.55M");
  EXPECT_EQ(lora_params({4, 4, 1, 1}, 1), 8u);
  EXPECT_EQ(lora_params(roberta_large_qv(), 16), 2 * lora_params(roberta_large_qv(), 8));
  EXPECT_EQ(lora_flops({4, 4, 1, 1}, 1), 16u);
  EXPECT_THROW(lora_params(llama2_7b_qv(), 0), ConfigError);
}

TEST(BaselineTest, OtherFormulas) {
  EXPECT_EQ(vera_params({8, 8, 1, 1}, 4), 12u);
  EXPECT_EQ(fourierft_params(llama2_7b_qv(), 1000), 64000u);
  EXPECT_EQ(full_params(llama2_7b_qv()), 64ull * 4096 * 4096);
  EXPECT_EQ(fourierft_flops({4, 4, 1, 1}), 2u * 320u);
}

TEST(BcaPropertyTest, StorageLaw) {
  for (const LayerSpec& s : {llama2_7b_qv(), roberta_base_qv(), roberta_large_qv(), LayerSpec{96, 48, 3, 5}}) {
    for (std::uint64_t p = 1; p <= std::min(s.d_out, s.d_in); ++p) {
      if (s.d_out % p || s.d_in % p) continue;
      EXPECT_EQ(bca_params(s, p) * p, s.matrix_count() * s.d_out * s.d_in) << p;
    }
    EXPECT_EQ(bca_params(s, 1), full_params(s));
  }
}

TEST(BcaPropertyTest, MonotoneInBlockSize) {
  const LayerSpec s = llama2_7b_qv();
  for (std::uint64_t p = 1; p < 4096; p *= 2) {
    EXPECT_GT(bca_params(s, p), bca_params(s, 2 * p)) << p;
    if (p >= 2) {
      EXPECT_GT(bca_flops(s, p), bca_flops(s, 2 * p)) << p;
    }
  }
}

TEST(BcaPropertyTest, AgreesWithAdapterCount) {
  for (std::size_t p : {1u, 2u, 4u, 8u, 16u, 32u}) {
    const AdapterLayer layer(DenseMatrix::Zero(64, 32), p);
    EXPECT_EQ(count_trainable(layer), bca_params({64, 32, 1, 1}, p)) << p;
  }
}

TEST(ReportTest, EmptyAndDeterministic) {
  EXPECT_TRUE(report({}, llama2_7b_qv()).empty());
  const std::vector<MethodSpec> methods{{"bca", 128}, {"bca", 256}, {"bca", 512}, {"bca", 1024}, {"lora", 64}};
  const auto a = report(methods, llama2_7b_qv());
  const auto b = report(methods, llama2_7b_qv());
  EXPECT_EQ(render_table(a), render_table(b));
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  const std::string table = render_table(a);
  for (const char* v : {"8.39M", "4.19M", "2.10M", "1.05M", "33.55M"}) {
    EXPECT_NE(table.find(v), std::string::npos) << v;
  }
  EXPECT_EQ(to_json(a)["schema_version"], 1);
  EXPECT_EQ(to_json(a)["rows"][0]["parameters"], 8388608u);
}

TEST(ReportTest, UnknownMethod) {
  EXPECT_THROW(report({{"adam", 1}}, llama2_7b_qv()), ConfigError);
}

TEST(FormatTest, Units) {
  EXPECT_EQ(format_si(999), "999");
  EXPECT_EQ(format_si(18432), "18.43K");
  EXPECT_EQ(format_si(1'650'000), "1.65M");
  EXPECT_EQ(format_si(2'290'000'000ULL), "2.29G");
  EXPECT_EQ(format_giga(80'000'000), "0.08G");
}

}  // namespace
}  // namespace bca
