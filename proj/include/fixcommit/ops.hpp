#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fixcommit/random.hpp"
#include "fixcommit/tensor.hpp"

namespace fixcommit {

// Differentiable operations. Matrices are rank-2 row-major tensors; there is
// no implicit broadcasting apart from add_row.

Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// x[p×q] + bias[q] added to every row.
Tensor add_row(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);

Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);

Tensor softmax_rows(const Tensor& x);
/// Entries where keep[i] == 0 are replaced by a large negative constant, so a
/// following softmax assigns them exactly zero probability.
Tensor mask_fill(const Tensor& x, std::span<const std::uint8_t> keep);

inline constexpr double kLayerNormEpsilon = 1e-5;
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

/// Rows of table selected by index (embedding lookup).
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, std::size_t offset, std::size_t width);

/// Rounds every entry to the nearest multiple of 2^exponent. The gradient
/// passes straight through.
Tensor snap_to_grid(const Tensor& x, int exponent);
/// Inverted dropout; identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Mean over non-ignored rows of -log softmax(logits)[t, target_t].
/// Returns 0 with zero gradient when every row is ignored.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets, std::int32_t ignore_index);

/// Mean over rows with keep[t] != 0 of KL(target_t || softmax(logits)_t).
/// target is treated as constant.
Tensor kl_divergence(const Tensor& target_probs, const Tensor& logits, std::span<const std::uint8_t> keep);

}  // namespace fixcommit
