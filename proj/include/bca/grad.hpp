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

#ifndef BCA_GRAD_HPP_
#define BCA_GRAD_HPP_

#include <functional>

#include "bca/circulant.hpp"

namespace bca {

struct CirculantGradients {
  RealVector grad_c;
  RealVector grad_x;
};

/// Gradients of f(h), h = circ(c) x, given grad_h = df/dh.
///
///   grad_c[i] = sum_j grad_h[j] x[(j - i) mod n] = IFFT(conj(FFT(x)) o FFT(grad_h))
///   grad_x    = circ(c)^T grad_h                  = IFFT(conj(FFT(c)) o FFT(grad_h))
inline CirculantGradients circ_matvec_backward(const RealVector& c, const RealVector& x, const RealVector& grad_h) {
  if (c.size() != x.size() || c.size() != grad_h.size()) {
    throw SizeError("circ_matvec_backward: lengths " + std::to_string(c.size()) + ", " + std::to_string(x.size()) +
                    ", " + std::to_string(grad_h.size()) + " differ");
  }
  if (c.size() == 0) throw SizeError("circ_matvec_backward: empty operands");
  const FftPlan plan(static_cast<std::size_t>(c.size()));
  const std::size_t n = plan.size();
  ComplexVector cs(n), xs(n), gs(n), scratch;
  detail::forward_real_pair(plan, c.data(), x.data(), cs.data(), xs.data(), scratch);
  detail::forward_real(plan, grad_h.data(), gs.data());
  for (std::size_t k = 0; k < n; ++k) {
    xs[k] = std::conj(xs[k]) * gs[k];
    cs[k] = std::conj(cs[k]) * gs[k];
  }
  CirculantGradients out{RealVector(c.size()), RealVector(c.size())};
  detail::inverse_real_pair(plan, xs.data(), cs.data(), out.grad_c.data(), out.grad_x.data(), scratch);
  return out;
}

/// Gradients of a block-circulant product for a single input vector.
struct MatvecGradients {
  std::vector<double> grad_coeffs;  // same block-row-major layout as the coefficients
  RealVector grad_input;
};

/// Gradients accumulated (summed) over a batch.
struct BatchGradients {
  std::vector<double> grad_coeffs;
  Batch grad_input;  // empty unless requested
};

/// Backward pass reusing the spectra recorded by block_circ_matvec_batch.
///
/// grad_c_ij = IFFT(sum_b conj(FFT(x_jb)) o FFT(g_ib)); the input gradient
/// grad_x_jb = IFFT(sum_i conj(FFT(c_ij)) o FFT(g_ib)) shares the fused
/// accumulation of the forward pass.
inline BatchGradients block_circ_matvec_backward_batch(const BlockCirculantMatrix& b, const ForwardCache& cache,
                                                       const Batch& grad_h, bool want_input_grad = true) {
  const auto batch = static_cast<std::size_t>(grad_h.cols());
  if (static_cast<std::size_t>(grad_h.rows()) != b.rows() || batch != cache.batch) {
    throw SizeError("block_circ_matvec_backward: upstream gradient is " + std::to_string(grad_h.rows()) + "x" +
                    std::to_string(grad_h.cols()) + ", expected " + std::to_string(b.rows()) + "x" +
                    std::to_string(cache.batch));
  }
  const std::size_t p = b.block_size();
  const std::size_t q_out = b.block_rows();
  const std::size_t q_in = b.block_cols();
  BatchGradients out;
  out.grad_coeffs.assign(b.parameter_count(), 0.0);
  if (batch == 0) {
    if (want_input_grad) out.grad_input = Batch::Zero(static_cast<Eigen::Index>(b.cols()), 0);
    return out;
  }

  const std::size_t rows = b.rows();
  ComplexVector gs(q_out * batch * p);
  detail::forward_real_many(
      b.plan(), q_out * batch, [&](std::size_t k) { return grad_h.data() + (k % batch) * rows + (k / batch) * p; },
      gs.data());

  ComplexVector acc(q_out * q_in * p);
  for (std::size_t i = 0; i < q_out; ++i) {
    for (std::size_t j = 0; j < q_in; ++j) {
      Complex* dst = acc.data() + (i * q_in + j) * p;
      for (std::size_t s = 0; s < batch; ++s) {
        const Complex* xs = cache.input_spectra.data() + (j * batch + s) * p;
        const Complex* g = gs.data() + (i * batch + s) * p;
        for (std::size_t k = 0; k < p; ++k) dst[k] += std::conj(xs[k]) * g[k];
      }
    }
  }
  detail::inverse_real_many(b.plan(), q_out * q_in, acc.data(),
                            [&](std::size_t k) { return out.grad_coeffs.data() + k * p; });

  if (want_input_grad) {
    const std::size_t cols = b.cols();
    out.grad_input.resize(static_cast<Eigen::Index>(cols), static_cast<Eigen::Index>(batch));
    ComplexVector accx(q_in * batch * p);
    for (std::size_t j = 0; j < q_in; ++j) {
      for (std::size_t s = 0; s < batch; ++s) {
        Complex* dst = accx.data() + (j * batch + s) * p;
        for (std::size_t i = 0; i < q_out; ++i) {
          const Complex* cs = cache.coeff_spectra.data() + (i * q_in + j) * p;
          const Complex* g = gs.data() + (i * batch + s) * p;
          for (std::size_t k = 0; k < p; ++k) dst[k] += std::conj(cs[k]) * g[k];
        }
      }
    }
    detail::inverse_real_many(b.plan(), q_in * batch, accx.data(), [&](std::size_t k) {
      return out.grad_input.data() + (k % batch) * cols + (k / batch) * p;
    });
  }
  return out;
}

inline BatchGradients block_circ_matvec_backward_batch(const BlockCirculantMatrix& b, const Batch& x,
                                                       const Batch& grad_h, bool want_input_grad = true) {
  if (x.cols() != grad_h.cols()) {
    throw SizeError("block_circ_matvec_backward: batch sizes " + std::to_string(x.cols()) + " and " +
                    std::to_string(grad_h.cols()) + " differ");
  }
  ForwardCache cache;
  block_circ_matvec_batch(b, x, &cache);
  return block_circ_matvec_backward_batch(b, cache, grad_h, want_input_grad);
}

inline MatvecGradients block_circ_matvec_backward(const BlockCirculantMatrix& b, const RealVector& x,
                                                  const RealVector& grad_h) {
  if (static_cast<std::size_t>(x.size()) != b.cols() || static_cast<std::size_t>(grad_h.size()) != b.rows()) {
    throw SizeError("block_circ_matvec_backward: expected x of length " + std::to_string(b.cols()) +
                    " and grad_h of length " + std::to_string(b.rows()) + " for " + b.shape_string());
  }
  BatchGradients g = block_circ_matvec_backward_batch(b, Batch(x), Batch(grad_h), true);
  return {std::move(g.grad_coeffs), g.grad_input.col(0)};
}

/// Gradient of a dense layer: grad_h x^T.
inline DenseMatrix dense_grad(const RealVector& grad_h, const RealVector& x) { return grad_h * x.transpose(); }

/// Largest deviation from the identity
///
///   grad_c_ij[k] = sum_m G_ij[m, (m - k) mod p],   G_ij = grad_h_i x_j^T,
///
/// i.e. each circulant coefficient gradient is the sum of the p dense-gradient
/// entries on its circulant diagonal.
inline double diagonal_sum_identity_check(const BlockCirculantMatrix& b, const RealVector& x, const RealVector& grad_h) {
  const MatvecGradients g = block_circ_matvec_backward(b, x, grad_h);
  const std::size_t p = b.block_size();
  const auto ip = static_cast<Eigen::Index>(p);
  double worst = 0.0;
  for (std::size_t i = 0; i < b.block_rows(); ++i) {
    for (std::size_t j = 0; j < b.block_cols(); ++j) {
      const DenseMatrix dense = dense_grad(grad_h.segment(static_cast<Eigen::Index>(i * p), ip),
                                           x.segment(static_cast<Eigen::Index>(j * p), ip));
      const double* gc = g.grad_coeffs.data() + (i * b.block_cols() + j) * p;
      for (Eigen::Index k = 0; k < ip; ++k) {
        double s = 0.0;
        for (Eigen::Index m = 0; m < ip; ++m) s += dense(m, (m - k + ip) % ip);
        worst = std::max(worst, std::abs(gc[k] - s));
      }
    }
  }
  return worst;
}

/// Central-difference gradient (L(t + s e_k) - L(t - s e_k)) / 2s for every coordinate.
template <class Loss>
RealVector finite_difference_oracle(Loss&& loss, RealVector params, double step = 1e-5) {
  if (!(step > 0.0)) throw ConfigError("step", "finite-difference step must be positive");
  RealVector grad(params.size());
  for (Eigen::Index k = 0; k < params.size(); ++k) {
    const double saved = params[k];
    params[k] = saved + step;
    const double up = loss(static_cast<const RealVector&>(params));
    params[k] = saved - step;
    const double down = loss(static_cast<const RealVector&>(params));
    params[k] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_difference_oracle: loss is non-finite at coordinate " + std::to_string(k));
    }
    grad[k] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace bca

#endif  // BCA_GRAD_HPP_
