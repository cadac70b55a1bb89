// Copyright 2026 The ctxmt Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ctxmt/tensor.hpp"

// Differentiable primitives. Every function records its backward step on the
// active GradTape when some input requires a gradient. Matrices are 2-D
// row-major; "rows" are token positions and "cols" are features.
namespace ctxmt::ops {

// [n,k] x [k,m] -> [n,m]
Tensor matmul(const Tensor& a, const Tensor& b);
// [n,k] x [m,k]^T -> [n,m]
Tensor matmul_bt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[n,d] + bias[d], bias broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& bias);
// x[n,d] * g[n,1], g broadcast over columns.
Tensor mul_col(const Tensor& x, const Tensor& g);
// scale * x + shift, elementwise.
Tensor affine(const Tensor& x, double scale, double shift);

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
// tanh approximation.
Tensor gelu(const Tensor& x);

Tensor softmax_rows(const Tensor& x);
// allowed has rows*cols entries; disallowed entries get exactly zero weight
// and receive no gradient. A row with nothing allowed becomes all zeros.
Tensor masked_softmax_rows(const Tensor& x, std::span<const std::uint8_t> allowed);

inline constexpr double kLayerNormEpsilon = 1e-5;
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double epsilon = kLayerNormEpsilon);

// Mean over non-pad rows of -sum_v q_v log softmax(logits)_v with
// q = (1 - smoothing) * onehot(target) + smoothing / V. Rows whose target is
// pad_id contribute nothing; an all-pad input yields 0.
Tensor cross_entropy_smoothed(const Tensor& logits, std::span<const TokenId> targets,
                              double smoothing, TokenId pad_id);

Tensor sum(const Tensor& x);
// Weighted sum of scalars: sum_i weights[i] * terms[i].
Tensor weighted_sum(std::span<const Tensor> terms, std::span<const double> weights);

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);

// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_row(matmul(x, weight), bias);
}

}  // namespace ctxmt::ops
