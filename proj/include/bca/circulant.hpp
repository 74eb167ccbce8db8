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

#ifndef BCA_CIRCULANT_HPP_
#define BCA_CIRCULANT_HPP_

#include <algorithm>
#include <cassert>
#include <memory>
#include <string>
#include <utility>

#include "bca/fft.hpp"

namespace bca {

// circ(c)(i, j) = c[(i - j) mod n]
inline DenseMatrix circ_materialize(std::span<const double> c) {
  const auto n = static_cast<Eigen::Index>(c.size());
  DenseMatrix m(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) m(i, j) = c[static_cast<std::size_t>((i - j + n) % n)];
  }
  return m;
}

inline DenseMatrix circ_materialize(const RealVector& c) { return circ_materialize(as_span(c)); }

namespace detail {

inline void check_real_residue([[maybe_unused]] std::span<const Complex> z) {
#ifndef NDEBUG
  double max_re = 0.0;
  double max_im = 0.0;
  for (const Complex& v : z) {
    max_re = std::max(max_re, std::abs(v.real()));
    max_im = std::max(max_im, std::abs(v.imag()));
  }
  assert(max_im < 1e-8 * (1.0 + max_re) && "inverse transform left a large imaginary residue");
#endif
}

// Spectra of two real sequences from one complex transform: z = a + ib.
inline void forward_real_pair(const FftPlan& plan, const double* a, const double* b, Complex* out_a,
                              Complex* out_b, ComplexVector& scratch) {
  const std::size_t p = plan.size();
  scratch.resize(p);
  for (std::size_t t = 0; t < p; ++t) scratch[t] = Complex(a[t], b[t]);
  plan.forward(scratch);
  for (std::size_t k = 0; k < p; ++k) {
    const Complex zk = scratch[k];
    const Complex zr = std::conj(scratch[(p - k) % p]);
    out_a[k] = 0.5 * (zk + zr);
    out_b[k] = Complex(0.0, -0.5) * (zk - zr);
  }
}

inline void forward_real(const FftPlan& plan, const double* a, Complex* out) {
  const std::size_t p = plan.size();
  std::span<Complex> dst(out, p);
  for (std::size_t t = 0; t < p; ++t) dst[t] = Complex(a[t], 0.0);
  plan.forward(dst);
}

// Inverse of two Hermitian spectra in one transform; real parts only.
inline void inverse_real_pair(const FftPlan& plan, const Complex* sa, const Complex* sb, double* a, double* b,
                              ComplexVector& scratch) {
  const std::size_t p = plan.size();
  scratch.resize(p);
  for (std::size_t k = 0; k < p; ++k) scratch[k] = sa[k] + Complex(0.0, 1.0) * sb[k];
  plan.inverse(scratch);
  for (std::size_t t = 0; t < p; ++t) {
    a[t] = scratch[t].real();
    b[t] = scratch[t].imag();
  }
}

inline void inverse_real(const FftPlan& plan, const Complex* s, double* a, ComplexVector& scratch) {
  const std::size_t p = plan.size();
  scratch.assign(s, s + p);
  plan.inverse(scratch);
  check_real_residue(scratch);
  for (std::size_t t = 0; t < p; ++t) a[t] = scratch[t].real();
}

/// Forward-transforms `count` real sequences of length plan.size(); src(k) yields a pointer to sequence k.
template <class Source>
void forward_real_many(const FftPlan& plan, std::size_t count, Source src, Complex* out) {
  const std::size_t p = plan.size();
  ComplexVector scratch;
  std::size_t k = 0;
  for (; k + 1 < count; k += 2) forward_real_pair(plan, src(k), src(k + 1), out + k * p, out + (k + 1) * p, scratch);
  if (k < count) forward_real(plan, src(k), out + k * p);
}

/// Inverse of `count` Hermitian spectra stored contiguously; dst(k) yields the output pointer for sequence k.
template <class Sink>
void inverse_real_many(const FftPlan& plan, std::size_t count, const Complex* spectra, Sink dst) {
  const std::size_t p = plan.size();
  ComplexVector scratch;
  std::size_t k = 0;
  for (; k + 1 < count; k += 2) inverse_real_pair(plan, spectra + k * p, spectra + (k + 1) * p, dst(k), dst(k + 1), scratch);
  if (k < count) inverse_real(plan, spectra + k * p, dst(k), scratch);
}

}  // namespace detail

/// circ(c) x evaluated as IFFT(FFT(c) o FFT(x)). Any length is accepted.
inline RealVector circ_matvec(const RealVector& c, const RealVector& x) {
  if (c.size() != x.size()) {
    throw SizeError("circ_matvec: coefficient length " + std::to_string(c.size()) + " != input length " +
                    std::to_string(x.size()));
  }
  if (c.size() == 0) throw SizeError("circ_matvec: empty operands");
  const FftPlan plan(static_cast<std::size_t>(c.size()));
  const std::size_t n = plan.size();
  ComplexVector cs(n), xs(n), scratch;
  detail::forward_real_pair(plan, c.data(), x.data(), cs.data(), xs.data(), scratch);
  for (std::size_t k = 0; k < n; ++k) cs[k] *= xs[k];
  RealVector h(static_cast<Eigen::Index>(n));
  detail::inverse_real(plan, cs.data(), h.data(), scratch);
  return h;
}

/// A d_out x d_in matrix partitioned into p x p circulant blocks.
///
/// Block (i, j) is circ(c_ij). The coefficient vectors are stored
/// block-row-major and contiguous per block, so block (i, j) starts at
/// offset (i * q_in + j) * p. Copies share the (immutable) FFT plan.
class BlockCirculantMatrix {
 public:
  BlockCirculantMatrix(std::size_t d_out, std::size_t d_in, std::size_t p) : d_out_(d_out), d_in_(d_in), p_(p) {
    validate();
    coeffs_.assign(d_out_ / p_ * (d_in_ / p_) * p_, 0.0);
    plan_ = std::make_shared<const FftPlan>(p_);
  }

  BlockCirculantMatrix(std::size_t d_out, std::size_t d_in, std::size_t p, std::vector<double> coeffs)
      : BlockCirculantMatrix(d_out, d_in, p) {
    if (coeffs.size() != coeffs_.size()) {
      throw SizeError("block-circulant " + shape_string() + " expects " + std::to_string(coeffs_.size()) +
                      " coefficients, got " + std::to_string(coeffs.size()));
    }
    coeffs_ = std::move(coeffs);
  }

  std::size_t rows() const noexcept { return d_out_; }
  std::size_t cols() const noexcept { return d_in_; }
  std::size_t block_size() const noexcept { return p_; }
  std::size_t block_rows() const noexcept { return d_out_ / p_; }
  std::size_t block_cols() const noexcept { return d_in_ / p_; }
  std::size_t parameter_count() const noexcept { return coeffs_.size(); }

  std::span<double> coefficients() noexcept { return coeffs_; }
  std::span<const double> coefficients() const noexcept { return coeffs_; }

  std::span<double> block(std::size_t i, std::size_t j) noexcept {
    return {coeffs_.data() + (i * block_cols() + j) * p_, p_};
  }
  std::span<const double> block(std::size_t i, std::size_t j) const noexcept {
    return {coeffs_.data() + (i * block_cols() + j) * p_, p_};
  }

  const FftPlan& plan() const noexcept { return *plan_; }

  std::string shape_string() const {
    return std::to_string(d_out_) + "x" + std::to_string(d_in_) + " (p=" + std::to_string(p_) + ")";
  }

 private:
  void validate() const {
    if (p_ == 0) throw SizeError("block size must be positive");
    if (d_out_ == 0 || d_in_ == 0) throw SizeError("block-circulant dimensions must be positive");
    if (d_out_ % p_ != 0 || d_in_ % p_ != 0) {
      throw SizeError("block size p=" + std::to_string(p_) + " must divide both d_out=" + std::to_string(d_out_) +
                      " and d_in=" + std::to_string(d_in_));
    }
  }

  std::size_t d_out_;
  std::size_t d_in_;
  std::size_t p_;
  std::vector<double> coeffs_;
  std::shared_ptr<const FftPlan> plan_;
};

/// Assembles the q_out x q_in grid of circulant blocks.
inline DenseMatrix block_materialize(const BlockCirculantMatrix& b) {
  const auto p = static_cast<Eigen::Index>(b.block_size());
  DenseMatrix m(static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
  for (std::size_t i = 0; i < b.block_rows(); ++i) {
    for (std::size_t j = 0; j < b.block_cols(); ++j) {
      m.block(static_cast<Eigen::Index>(i) * p, static_cast<Eigen::Index>(j) * p, p, p) = circ_materialize(b.block(i, j));
    }
  }
  return m;
}

/// Frobenius-nearest block-circulant matrix: each coefficient is the mean of
/// its circulant diagonal inside the block. Exact round trip when p == 1.
inline BlockCirculantMatrix project_dense(const DenseMatrix& a, std::size_t p) {
  BlockCirculantMatrix b(static_cast<std::size_t>(a.rows()), static_cast<std::size_t>(a.cols()), p);
  const auto ip = static_cast<Eigen::Index>(p);
  for (std::size_t i = 0; i < b.block_rows(); ++i) {
    for (std::size_t j = 0; j < b.block_cols(); ++j) {
      auto c = b.block(i, j);
      const auto r0 = static_cast<Eigen::Index>(i) * ip;
      const auto c0 = static_cast<Eigen::Index>(j) * ip;
      for (Eigen::Index k = 0; k < ip; ++k) {
        double s = 0.0;
        for (Eigen::Index m = 0; m < ip; ++m) s += a(r0 + m, c0 + (m - k + ip) % ip);
        c[static_cast<std::size_t>(k)] = s / static_cast<double>(p);
      }
    }
  }
  return b;
}

/// Block (j, i) of the transpose is circ(c_ij)^T = circ(reverse(c_ij)), reverse(c)[k] = c[-k mod p].
inline BlockCirculantMatrix transpose(const BlockCirculantMatrix& b) {
  BlockCirculantMatrix t(b.cols(), b.rows(), b.block_size());
  const std::size_t p = b.block_size();
  for (std::size_t i = 0; i < b.block_rows(); ++i) {
    for (std::size_t j = 0; j < b.block_cols(); ++j) {
      auto src = b.block(i, j);
      auto dst = t.block(j, i);
      for (std::size_t k = 0; k < p; ++k) dst[k] = src[(p - k) % p];
    }
  }
  return t;
}

/// Spectra FFT(c_ij) of every block, laid out like the coefficients.
inline ComplexVector coefficient_spectra(const BlockCirculantMatrix& b) {
  const std::size_t p = b.block_size();
  const std::size_t blocks = b.block_rows() * b.block_cols();
  ComplexVector out(blocks * p);
  const double* base = b.coefficients().data();
  detail::forward_real_many(b.plan(), blocks, [&](std::size_t k) { return base + k * p; }, out.data());
  return out;
}

/// Intermediate spectra retained by a batched forward pass for reuse in the backward pass.
struct ForwardCache {
  ComplexVector coeff_spectra;
  ComplexVector input_spectra;  // [j][b] -> (j * batch + b) * p
  std::size_t batch = 0;
};

/// Batched product. Columns of `x` are independent inputs.
///
/// Output block i of sample b is IFFT(sum_j FFT(c_ij) o FFT(x_jb)): the
/// spectral products are accumulated first and a single inverse transform is
/// taken per output block. `frozen_spectra`, when given, replaces the
/// per-call coefficient transforms (inference mode).
inline Batch block_circ_matvec_batch(const BlockCirculantMatrix& b, const Batch& x, ForwardCache* cache = nullptr,
                                     const ComplexVector* frozen_spectra = nullptr) {
  if (static_cast<std::size_t>(x.rows()) != b.cols()) {
    throw SizeError("block_circ_matvec: input length " + std::to_string(x.rows()) + " != cols_in " +
                    std::to_string(b.cols()) + " of " + b.shape_string());
  }
  const std::size_t p = b.block_size();
  const std::size_t q_out = b.block_rows();
  const std::size_t q_in = b.block_cols();
  const auto batch = static_cast<std::size_t>(x.cols());
  Batch y(static_cast<Eigen::Index>(b.rows()), x.cols());
  if (batch == 0) {
    if (cache) *cache = ForwardCache{};
    return y;
  }

  ForwardCache local;
  ForwardCache& work = cache ? *cache : local;
  if (frozen_spectra) {
    if (frozen_spectra->size() != b.parameter_count()) throw SizeError("frozen spectra do not match matrix shape");
    work.coeff_spectra = *frozen_spectra;
  } else {
    work.coeff_spectra = coefficient_spectra(b);
  }
  work.batch = batch;
  work.input_spectra.resize(q_in * batch * p);
  detail::forward_real_many(
      b.plan(), q_in * batch,
      [&](std::size_t k) { return x.data() + (k % batch) * b.cols() + (k / batch) * p; }, work.input_spectra.data());

  ComplexVector acc(q_out * batch * p);
  for (std::size_t i = 0; i < q_out; ++i) {
    for (std::size_t s = 0; s < batch; ++s) {
      Complex* out = acc.data() + (i * batch + s) * p;
      for (std::size_t j = 0; j < q_in; ++j) {
        const Complex* cs = work.coeff_spectra.data() + (i * q_in + j) * p;
        const Complex* xs = work.input_spectra.data() + (j * batch + s) * p;
        for (std::size_t k = 0; k < p; ++k) out[k] += cs[k] * xs[k];
      }
    }
  }
  const std::size_t rows = b.rows();
  detail::inverse_real_many(b.plan(), q_out * batch, acc.data(),
                            [&](std::size_t k) { return y.data() + (k % batch) * rows + (k / batch) * p; });
  return y;
}

/// Batch given as separate vectors; every vector must have length cols_in.
inline std::vector<RealVector> block_circ_matvec_batch(const BlockCirculantMatrix& b, const std::vector<RealVector>& xs) {
  Batch x(static_cast<Eigen::Index>(b.cols()), static_cast<Eigen::Index>(xs.size()));
  for (std::size_t s = 0; s < xs.size(); ++s) {
    if (static_cast<std::size_t>(xs[s].size()) != b.cols()) {
      throw SizeError("ragged batch: vector " + std::to_string(s) + " has length " + std::to_string(xs[s].size()) +
                      ", expected " + std::to_string(b.cols()));
    }
    x.col(static_cast<Eigen::Index>(s)) = xs[s];
  }
  const Batch y = block_circ_matvec_batch(b, x);
  std::vector<RealVector> out;
  out.reserve(xs.size());
  for (Eigen::Index s = 0; s < y.cols(); ++s) out.emplace_back(y.col(s));
  return out;
}

/// Single-vector product h = B x.
inline RealVector block_circ_matvec(const BlockCirculantMatrix& b, const RealVector& x) {
  if (static_cast<std::size_t>(x.size()) != b.cols()) {
    throw SizeError("block_circ_matvec: input length " + std::to_string(x.size()) + " != cols_in " +
                    std::to_string(b.cols()) + " of " + b.shape_string());
  }
  const std::size_t p = b.block_size();
  const std::size_t q_in = b.block_cols();
  ComplexVector cs = coefficient_spectra(b);
  ComplexVector xs(q_in * p);
  detail::forward_real_many(b.plan(), q_in, [&](std::size_t j) { return x.data() + j * p; }, xs.data());
  RealVector h(static_cast<Eigen::Index>(b.rows()));
  ComplexVector acc(p), scratch;
  for (std::size_t i = 0; i < b.block_rows(); ++i) {
    std::fill(acc.begin(), acc.end(), Complex{});
    for (std::size_t j = 0; j < q_in; ++j) {
      const Complex* c = cs.data() + (i * q_in + j) * p;
      const Complex* v = xs.data() + j * p;
      for (std::size_t k = 0; k < p; ++k) acc[k] += c[k] * v[k];
    }
    detail::inverse_real(b.plan(), acc.data(), h.data() + i * p, scratch);
  }
  return h;
}

}  // namespace bca

#endif  // BCA_CIRCULANT_HPP_
