#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>

#include "seqtx/common.hpp"
#include "seqtx/tensor.hpp"

// Differentiable operations. Each records its backward step onto the active
// Graph when any input requires a gradient.
namespace seqtx::ops {

// [..., m, p] x [..., p, n] -> [..., m, n]; leading dims broadcast from 1.
// A rank-2 right operand is shared by every leading index of the left one.
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise a + b where b broadcasts to a's shape (numpy rules, b's rank
// no larger than a's).
Tensor add(const Tensor& a, const Tensor& b);

// Elementwise product of equal shapes.
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, float factor);

// Sum of all entries, shape [1].
Tensor sum(const Tensor& x);

Tensor transpose_last2(const Tensor& x);
Tensor permute(const Tensor& x, std::span<const std::size_t> axes);
Tensor permute(const Tensor& x, std::initializer_list<std::size_t> axes);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_last(std::span<const Tensor> parts);

// Rows of table[rows, d] selected by ids; result shape is index_shape + [d].
// Gradients scatter-add back into the selected rows.
Tensor embedding_lookup(const Tensor& table, std::span<const std::int32_t> ids,
                        const Shape& index_shape);

Tensor relu(const Tensor& x);

// Inverted dropout: survivors are scaled by 1/(1-rate). Identity when
// rate == 0 or train is false.
Tensor dropout(const Tensor& x, float rate, bool train, Rng& rng);

// Max-subtracted softmax along axis.
Tensor softmax(const Tensor& x, std::size_t axis);

// Normalizes over the last axis, then applies gain and bias (both [d]).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);

// x[..., d_in] * w[d_in, d_out] (+ bias[d_out]).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = Tensor());

// Mean label-smoothed cross entropy over positions whose target is not
// pad_id. The smoothed target puts 1-epsilon on the true class and
// epsilon/(V-1) on each other class. logits: [..., V], one target per row.
Tensor cross_entropy_ls(const Tensor& logits, std::span<const TokenId> targets, float epsilon,
                        TokenId pad_id);

}  // namespace seqtx::ops
