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

#ifndef BCA_FFT_HPP_
#define BCA_FFT_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "bca/error.hpp"
#include "bca/types.hpp"

namespace bca {

constexpr bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

/// Precomputed transform of a fixed length.
///
/// Powers of two run an iterative radix-2 Cooley-Tukey kernel. Every other
/// length goes through Bluestein's chirp-z reformulation on top of a radix-2
/// plan of size >= 2n-1. The forward transform is unnormalized, the inverse
/// carries the 1/n factor. A plan is immutable once built, so one instance
/// may be shared by any number of threads.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n) {
    if (n == 0) throw SizeError("FFT length must be positive");
    if (is_power_of_two(n)) {
      init_radix2();
    } else {
      init_bluestein();
    }
  }

  std::size_t size() const noexcept { return n_; }
  bool is_radix2() const noexcept { return inner_ == nullptr; }

  void forward(std::span<Complex> data) const {
    check(data);
    if (is_radix2()) {
      radix2(data, false);
    } else {
      bluestein(data);
    }
  }

  void inverse(std::span<Complex> data) const {
    check(data);
    if (is_radix2()) {
      radix2(data, true);
    } else {
      // ifft(X) = conj(fft(conj(X))) / n
      for (Complex& z : data) z = std::conj(z);
      bluestein(data);
      for (Complex& z : data) z = std::conj(z);
    }
    const double scale = 1.0 / static_cast<double>(n_);
    for (Complex& z : data) z *= scale;
  }

 private:
  void check(std::span<const Complex> data) const {
    if (data.size() != n_) {
      throw SizeError("FFT plan of length " + std::to_string(n_) + " applied to buffer of length " +
                      std::to_string(data.size()));
    }
  }

  void init_radix2() {
    unsigned bits = 0;
    while ((std::size_t{1} << bits) < n_) ++bits;
    bitrev_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      std::uint32_t r = 0;
      for (unsigned b = 0; b < bits; ++b) {
        if (i & (std::size_t{1} << b)) r |= std::uint32_t{1} << (bits - 1 - b);
      }
      bitrev_[i] = r;
    }
    twiddle_.resize(n_ / 2);
    for (std::size_t k = 0; k < n_ / 2; ++k) {
      twiddle_[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_));
    }
  }

  void init_bluestein() {
    std::size_t m = 1;
    while (m < 2 * n_ - 1) m <<= 1;
    inner_ = std::make_shared<const FftPlan>(m);
    // chirp[k] = exp(-i*pi*k^2/n); k^2 is reduced mod 2n to keep the angle small.
    chirp_.resize(n_);
    const std::uint64_t two_n = 2 * static_cast<std::uint64_t>(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      const std::uint64_t k2 = (static_cast<std::uint64_t>(k) * k) % two_n;
      chirp_[k] = std::polar(1.0, -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n_));
    }
    filter_.assign(m, Complex{});
    filter_[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n_; ++k) {
      filter_[k] = std::conj(chirp_[k]);
      filter_[m - k] = std::conj(chirp_[k]);
    }
    inner_->forward(filter_);
  }

  void radix2(std::span<Complex> a, bool inverse) const {
    const std::size_t n = n_;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = bitrev_[i];
      if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t stride = n / len;
      for (std::size_t start = 0; start < n; start += len) {
        for (std::size_t j = 0; j < half; ++j) {
          const Complex w = inverse ? std::conj(twiddle_[j * stride]) : twiddle_[j * stride];
          const Complex u = a[start + j];
          const Complex v = a[start + j + half] * w;
          a[start + j] = u + v;
          a[start + j + half] = u - v;
        }
      }
    }
  }

  void bluestein(std::span<Complex> a) const {
    const std::size_t m = inner_->size();
    ComplexVector work(m, Complex{});
    for (std::size_t k = 0; k < n_; ++k) work[k] = a[k] * chirp_[k];
    inner_->forward(work);
    for (std::size_t k = 0; k < m; ++k) work[k] *= filter_[k];
    inner_->inverse(work);
    for (std::size_t k = 0; k < n_; ++k) a[k] = work[k] * chirp_[k];
  }

  std::size_t n_;
  std::vector<std::uint32_t> bitrev_;
  ComplexVector twiddle_;
  // Bluestein only.
  std::shared_ptr<const FftPlan> inner_;
  ComplexVector chirp_;
  ComplexVector filter_;
};

/// Thread-safe memo of plans keyed by transform length.
class PlanCache {
 public:
  std::shared_ptr<const FftPlan> get(std::size_t n) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    auto plan = std::make_shared<const FftPlan>(n);
    plans_.emplace(n, plan);
    return plan;
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return plans_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::size_t, std::shared_ptr<const FftPlan>> plans_;
};

namespace detail {

inline void require_fft_operand(std::span<const Complex> x) {
  if (!is_power_of_two(x.size())) {
    throw SizeError("FFT length must be a power of two, got " + std::to_string(x.size()));
  }
  if (!all_finite(x)) throw NumericError("FFT input contains non-finite values");
}

}  // namespace detail

/// Unnormalized DFT, X[k] = sum_j x[j] exp(-2 pi i jk/n). Length must be a power of two.
inline ComplexVector fft(ComplexVector x) {
  detail::require_fft_operand(x);
  FftPlan(x.size()).forward(x);
  return x;
}

/// Inverse DFT with 1/n normalization, so ifft(fft(x)) == x.
inline ComplexVector ifft(ComplexVector x) {
  detail::require_fft_operand(x);
  FftPlan(x.size()).inverse(x);
  return x;
}

inline ComplexVector fft_real(std::span<const double> x) {
  ComplexVector z(x.begin(), x.end());
  return fft(std::move(z));
}

inline ComplexVector fft_real(const RealVector& x) { return fft_real(as_span(x)); }

}  // namespace bca

#endif  // BCA_FFT_HPP_
