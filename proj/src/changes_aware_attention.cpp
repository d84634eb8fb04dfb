#include "fixcommit/changes_aware_attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fixcommit/errors.hpp"
#include "fixcommit/layers.hpp"
#include "fixcommit/ops.hpp"

namespace fixcommit {

ChangesAwareAttentionParams::ChangesAwareAttentionParams(ParameterSet& params, const std::string& name,
                                                         std::size_t hidden, Rng& rng)
    : w_g(params.add(name + ".w_g", xavier_normal(2 * hidden, 2 * hidden, rng))),
      b_g(params.add(name + ".b_g", Tensor::zeros({2 * hidden}, true))),
      w_o(params.add(name + ".w_o", xavier_normal(hidden, hidden, rng))) {}

namespace {

void require_hidden(const Tensor& t, std::size_t hidden, const char* what) {
  if (!t.defined() || t.rank() != 2 || t.cols() != hidden || t.rows() == 0) {
    throw ShapeError(std::string("changes-aware attention: ") + what + " must be a non-empty matrix with " +
                     std::to_string(hidden) + " columns, got " + (t.defined() ? shape_string(t.shape()) : "undefined"));
  }
}

Tensor attend(const Tensor& queries, const Tensor& memory) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
  return matmul(softmax_rows(scale(matmul_nt(queries, memory), inv_sqrt)), memory);
}

// Exponent of a grid on which both contexts are integers below 2^51, so
// their sum and difference are exact and (zeta +- delta) / 2 recovers them.
int shared_grid_exponent(const Tensor& a, const Tensor& b) {
  double top = 0.0;
  for (const Tensor* t : {&a, &b})
    for (double v : t->values()) top = std::max(top, std::abs(v));
  if (top == 0.0) return 0;
  return std::max(std::ilogb(top) + 1 - 51, std::numeric_limits<double>::min_exponent - 1);
}

}  // namespace

ChangesAwareTrace changes_aware_attention_trace(const ChangesAwareAttentionParams& params, const Tensor& z_c,
                                                const Tensor& z_b, const Tensor& z_f) {
  const std::size_t hidden = params.hidden();
  if (params.w_g.shape() != Shape{2 * hidden, 2 * hidden} || params.b_g.shape() != Shape{2 * hidden} ||
      params.w_o.shape() != Shape{hidden, hidden}) {
    throw ShapeError("changes-aware attention: inconsistent parameter shapes");
  }
  require_hidden(z_c, hidden, "z_c");
  require_hidden(z_b, hidden, "z_b");
  require_hidden(z_f, hidden, "z_f");

  ChangesAwareTrace t;
  const Tensor raw_b = attend(z_c, z_b);
  const Tensor raw_f = attend(z_c, z_f);
  const int grid = shared_grid_exponent(raw_b, raw_f);
  t.c_b = snap_to_grid(raw_b, grid);
  t.c_f = snap_to_grid(raw_f, grid);
  t.delta = sub(t.c_b, t.c_f);
  t.zeta = add(t.c_b, t.c_f);
  const std::vector<Tensor> both = {t.delta, t.zeta};
  t.gates = sigmoid(add_row(matmul_nt(concat_cols(both), params.w_g), params.b_g));
  t.g_delta = slice_cols(t.gates, 0, hidden);
  t.g_zeta = slice_cols(t.gates, hidden, hidden);
  t.fused = add(mul(t.g_delta, t.delta), mul(t.g_zeta, t.zeta));
  t.output = add(z_c, matmul_nt(t.fused, params.w_o));
  return t;
}

Tensor changes_aware_attention(const ChangesAwareAttentionParams& params, const Tensor& z_c, const Tensor& z_b,
                               const Tensor& z_f) {
  return changes_aware_attention_trace(params, z_c, z_b, z_f).output;
}

}  // namespace fixcommit
