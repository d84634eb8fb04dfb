#pragma once

#include <string>

#include "fixcommit/checkpoint.hpp"
#include "fixcommit/random.hpp"
#include "fixcommit/tensor.hpp"

namespace fixcommit {

/// Gate and fusion weights of the changes-aware attention. b_g is one 2H
/// vector shared by every decoder position.
struct ChangesAwareAttentionParams {
  Tensor w_g;  // 2H x 2H
  Tensor b_g;  // 2H
  Tensor w_o;  // H x H

  ChangesAwareAttentionParams() = default;
  ChangesAwareAttentionParams(ParameterSet& params, const std::string& name, std::size_t hidden, Rng& rng);
  std::size_t hidden() const { return w_o.rows(); }
};

/// Every intermediate of one evaluation, for inspection and tests.
struct ChangesAwareTrace {
  Tensor c_b, c_f;     // attended contexts, l x H
  Tensor delta, zeta;  // c_b - c_f and c_b + c_f
  Tensor gates;        // sigmoid([delta, zeta] W_gᵀ + b_g), l x 2H
  Tensor g_delta, g_zeta;
  Tensor fused;        // g_delta * delta + g_zeta * zeta
  Tensor output;       // z_c + fused W_oᵀ
};

/// Single-head scaled dot-product attention of the commit decoder states z_c
/// (l x H) over the buggy encoding z_b (n x H) and the fixed decoder states
/// z_f (m x H), fused through change (delta) and summary (zeta) gates.
ChangesAwareTrace changes_aware_attention_trace(const ChangesAwareAttentionParams& params, const Tensor& z_c,
                                                const Tensor& z_b, const Tensor& z_f);
Tensor changes_aware_attention(const ChangesAwareAttentionParams& params, const Tensor& z_c, const Tensor& z_b,
                               const Tensor& z_f);

}  // namespace fixcommit
