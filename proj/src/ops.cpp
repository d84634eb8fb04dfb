#include "fixcommit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "fixcommit/errors.hpp"

namespace fixcommit {

using detail::Node;

namespace {

constexpr double kMaskedValue = -1e30;

Tensor make_result(Shape shape, std::vector<double> values, const char* op, std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  const bool needs_grad =
      grad_enabled() && std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
  if (needs_grad) {
    node->requires_grad = true;
    node->op = op;
    for (const Tensor* t : inputs) node->parents.push_back(t->node());
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void require_matrix(const Tensor& t, const char* op) {
  if (!t.defined() || t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " +
                     (t.defined() ? shape_string(t.shape()) : std::string("undefined")));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

// Accumulates into a parent's gradient when it participates in the graph.
template <typename Fn>
void accumulate(Node& node, std::size_t index, Fn&& fn) {
  Node& parent = *node.parents[index];
  if (parent.requires_grad) fn(parent.grad_buffer(), parent.values);
}

void require_finite(const Tensor& x, const char* op) {
  for (double v : x.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t p = a.rows(), q = a.cols(), r = b.cols();
  if (b.rows() != q) {
    throw ShapeError("matmul: inner dimensions differ for " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  std::vector<double> out(p * r, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < p; ++i) {
    double* row = &out[i * r];
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = av[i * q + k];
      const double* brow = &bv[k * r];
      for (std::size_t j = 0; j < r; ++j) row[j] += aik * brow[j];
    }
  }
  return make_result({p, r}, std::move(out), "matmul", {&a, &b}, [p, q, r](Node& node) {
    const auto& g = node.grad;
    const auto& av = node.parents[0]->values;
    const auto& bv = node.parents[1]->values;
    accumulate(node, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t k = 0; k < q; ++k) {
          double s = 0.0;
          for (std::size_t j = 0; j < r; ++j) s += g[i * r + j] * bv[k * r + j];
          ga[i * q + k] += s;
        }
    });
    accumulate(node, 1, [&](std::vector<double>& gb, const std::vector<double>&) {
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t k = 0; k < q; ++k) {
          const double aik = av[i * q + k];
          for (std::size_t j = 0; j < r; ++j) gb[k * r + j] += aik * g[i * r + j];
        }
    });
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t p = a.rows(), q = a.cols(), r = b.rows();
  if (b.cols() != q) {
    throw ShapeError("matmul_nt: inner dimensions differ for " + shape_string(a.shape()) + " and transposed " +
                     shape_string(b.shape()));
  }
  std::vector<double> out(p * r, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < r; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < q; ++k) s += av[i * q + k] * bv[j * q + k];
      out[i * r + j] = s;
    }
  return make_result({p, r}, std::move(out), "matmul_nt", {&a, &b}, [p, q, r](Node& node) {
    const auto& g = node.grad;
    const auto& av = node.parents[0]->values;
    const auto& bv = node.parents[1]->values;
    accumulate(node, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < r; ++j) {
          const double gij = g[i * r + j];
          for (std::size_t k = 0; k < q; ++k) ga[i * q + k] += gij * bv[j * q + k];
        }
    });
    accumulate(node, 1, [&](std::vector<double>& gb, const std::vector<double>&) {
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < r; ++j) {
          const double gij = g[i * r + j];
          for (std::size_t k = 0; k < q; ++k) gb[j * q + k] += gij * av[i * q + k];
        }
    });
  });
}

Tensor transpose(const Tensor& x) {
  require_matrix(x, "transpose");
  const std::size_t p = x.rows(), q = x.cols();
  std::vector<double> out(p * q);
  const auto xv = x.values();
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < q; ++j) out[j * p + i] = xv[i * q + j];
  return make_result({q, p}, std::move(out), "transpose", {&x}, [p, q](Node& node) {
    accumulate(node, 0, [&](std::vector<double>& gx, const std::vector<double>&) {
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) gx[i * q + j] += node.grad[j * p + i];
    });
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result(a.shape(), std::move(out), "add", {&a, &b}, [](Node& node) {
    for (std::size_t p = 0; p < 2; ++p) {
      accumulate(node, p, [&](std::vector<double>& gp, const std::vector<double>&) {
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += node.grad[i];
      });
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result(a.shape(), std::move(out), "sub", {&a, &b}, [](Node& node) {
    accumulate(node, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += node.grad[i];
    });
    accumulate(node, 1, [&](std::vector<double>& gb, const std::vector<double>&) {
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= node.grad[i];
    });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_result(a.shape(), std::move(out), "mul", {&a, &b}, [](Node& node) {
    const auto& av = node.parents[0]->values;
    const auto& bv = node.parents[1]->values;
    accumulate(node, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += node.grad[i] * bv[i];
    });
    accumulate(node, 1, [&](std::vector<double>& gb, const std::vector<double>&) {
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += node.grad[i] * av[i];
    });
  });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_row");
  const std::size_t p = x.rows(), q = x.cols();
  if (bias.numel() != q || bias.rank() != 1) {
    throw ShapeError("add_row: bias " + shape_string(bias.shape()) + " does not match rows of " +
                     shape_string(x.shape()));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  const auto bv = bias.values();
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < q; ++j) out[i * q + j] += bv[j];
  return make_result(x.shape(), std::move(out), "add_row", {&x, &bias}, [p, q](Node& node) {
    accumulate(node, 0, [&](std::vector<double>& gx, const std::vector<double>&) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += node.grad[i];
    });
    accumulate(node, 1, [&](std::vector<double>& gb, const std::vector<double>&) {
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) gb[j] += node.grad[i * q + j];
    });
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v *= factor;
  return make_result(x.shape(), std::move(out), "scale", {&x}, [factor](Node& node) {
    accumulate(node, 0, [&](std::vector<double>& gx, const std::vector<double>&) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * node.grad[i];
    });
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    // split on sign so exp never overflows
    if (v >= 0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  return make_result(x.shape(), out, "sigmoid", {&x}, [y = out](Node& node) {
    accumulate(node, 0, [&](std::vector<double>& gx, const std::vector<double>&) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += node.grad[i] * y[i] * (1.0 - y[i]);
    });
  });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] / std::numbers::sqrt2));
  return make_result(x.shape(), std::move(out), "gelu", {&x}, [](Node& node) {
    accumulate(node, 0, [&](std::vector<double>& gx, const std::vector<double>& xv) {
      const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const double v = xv[i];
        const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        gx[i] += node.grad[i] * (cdf + v * pdf);
      }
    });
  });
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  require_finite(x, "softmax_rows");
  const std::size_t p = x.rows(), q = x.cols();
  std::vector<double> out(p * q);
  const auto xv = x.values();
  for (std::size_t i = 0; i < p; ++i) {
    const double* row = &xv[i * q];
    const double peak = *std::max_element(row, row + q);
    double total = 0.0;
    for (std::size_t j = 0; j < q; ++j) total += out[i * q + j] = std::exp(row[j] - peak);
    for (std::size_t j = 0; j < q; ++j) out[i * q + j] /= total;
  }
  return make_result(x.shape(), out, "softmax_rows", {&x}, [p, q, y = out](Node& node) {
    accumulate(node, 0, [&](std::vector<double>& gx, const std::vector<double>&) {
      for (std::size_t i = 0; i < p; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < q; ++j) dot += node.grad[i * q + j] * y[i * q + j];
        for (std::size_t j = 0; j < q; ++j) gx[i * q + j] += y[i * q + j] * (node.grad[i * q + j] - dot);
      }
    });
  });
}

Tensor mask_fill(const Tensor& x, std::span<const std::uint8_t> keep) {
  if (keep.size() != x.numel()) {
    throw ShapeError("mask_fill: mask of " + std::to_string(keep.size()) + " entries for " + shape_string(x.shape()));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!keep[i]) out[i] = kMaskedValue;
  return make_result(x.shape(), std::move(out), "mask_fill", {&x},
                     [mask = std::vector<std::uint8_t>(keep.begin(), keep.end())](Node& node) {
                       accumulate(node, 0, [&](std::vector<double>& gx, const std::vector<double>&) {
                         for (std::size_t i = 0; i < gx.size(); ++i)
                           if (mask[i]) gx[i] += node.grad[i];
                       });
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  require_matrix(x, "layer_norm");
  const std::size_t p = x.rows(), h = x.cols();
  if (h < 2) throw ShapeError("layer_norm: hidden size must be at least 2, got " + shape_string(x.shape()));
  if (gain.numel() != h || bias.numel() != h) {
    throw ShapeError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " + shape_string(bias.shape()) +
                     " do not match " + shape_string(x.shape()));
  }
  std::vector<double> normalized(p * h), inv_std(p), out(p * h);
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  for (std::size_t i = 0; i < p; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < h; ++j) mu += xv[i * h + j];
    mu /= static_cast<double>(h);
    double var = 0.0;
    for (std::size_t j = 0; j < h; ++j) var += (xv[i * h + j] - mu) * (xv[i * h + j] - mu);
    var /= static_cast<double>(h);
    inv_std[i] = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    for (std::size_t j = 0; j < h; ++j) {
      normalized[i * h + j] = (xv[i * h + j] - mu) * inv_std[i];
      out[i * h + j] = normalized[i * h + j] * gv[j] + bv[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), "layer_norm", {&x, &gain, &bias},
      [p, h, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& node) {
        const auto& g = node.grad;
        const auto& gv = node.parents[1]->values;
        accumulate(node, 0, [&](std::vector<double>& gx, const std::vector<double>&) {
          const double n = static_cast<double>(h);
          for (std::size_t i = 0; i < p; ++i) {
            double sum_d = 0.0, sum_dx = 0.0;
            for (std::size_t j = 0; j < h; ++j) {
              const double d = g[i * h + j] * gv[j];
              sum_d += d;
              sum_dx += d * normalized[i * h + j];
            }
            for (std::size_t j = 0; j < h; ++j) {
              const double d = g[i * h + j] * gv[j];
              gx[i * h + j] += inv_std[i] / n * (n * d - sum_d - normalized[i * h + j] * sum_dx);
            }
          }
        });
        accumulate(node, 1, [&](std::vector<double>& gg, const std::vector<double>&) {
          for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < h; ++j) gg[j] += g[i * h + j] * normalized[i * h + j];
        });
        accumulate(node, 2, [&](std::vector<double>& gb, const std::vector<double>&) {
          for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < h; ++j) gb[j] += g[i * h + j];
        });
      });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows) {
  require_matrix(table, "gather_rows");
  if (rows.empty()) throw ShapeError("gather_rows: no rows requested");
  const std::size_t v = table.rows(), h = table.cols();
  std::vector<double> out(rows.size() * h);
  const auto tv = table.values();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= v) {
      throw IndexError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                       shape_string(table.shape()));
    }
    std::copy_n(&tv[rows[i] * h], h, &out[i * h]);
  }
  return make_result({rows.size(), h}, std::move(out), "gather_rows", {&table},
                     [h, index = std::vector<std::size_t>(rows.begin(), rows.end())](Node& node) {
                       accumulate(node, 0, [&](std::vector<double>& gt, const std::vector<double>&) {
                         for (std::size_t i = 0; i < index.size(); ++i)
                           for (std::size_t j = 0; j < h; ++j) gt[index[i] * h + j] += node.grad[i * h + j];
                       });
                     });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const std::size_t p = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& part : parts) {
    require_matrix(part, "concat_cols");
    if (part.rows() != p) {
      throw ShapeError("concat_cols: row mismatch " + shape_string(parts[0].shape()) + " vs " +
                       shape_string(part.shape()));
    }
    widths.push_back(part.cols());
    total += part.cols();
  }
  std::vector<double> out(p * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].values();
    for (std::size_t i = 0; i < p; ++i) std::copy_n(&pv[i * widths[k]], widths[k], &out[i * total + offset]);
    offset += widths[k];
  }

  auto node = std::make_shared<Node>();
  node->shape = {p, total};
  node->values = std::move(out);
  const bool needs_grad =
      grad_enabled() && std::any_of(parts.begin(), parts.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (needs_grad) {
    node->requires_grad = true;
    node->op = "concat_cols";
    for (const auto& part : parts) node->parents.push_back(part.node());
    node->backward = [p, total, widths](Node& self) {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        accumulate(self, k, [&](std::vector<double>& gp, const std::vector<double>&) {
          for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < widths[k]; ++j) gp[i * widths[k] + j] += self.grad[i * total + offset + j];
        });
        offset += widths[k];
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor slice_cols(const Tensor& x, std::size_t offset, std::size_t width) {
  require_matrix(x, "slice_cols");
  const std::size_t p = x.rows(), q = x.cols();
  if (width == 0 || offset + width > q) {
    throw ShapeError("slice_cols: columns [" + std::to_string(offset) + ", " + std::to_string(offset + width) +
                     ") outside " + shape_string(x.shape()));
  }
  std::vector<double> out(p * width);
  const auto xv = x.values();
  for (std::size_t i = 0; i < p; ++i) std::copy_n(&xv[i * q + offset], width, &out[i * width]);
  return make_result({p, width}, std::move(out), "slice_cols", {&x}, [p, q, offset, width](Node& node) {
    accumulate(node, 0, [&](std::vector<double>& gx, const std::vector<double>&) {
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < width; ++j) gx[i * q + offset + j] += node.grad[i * width + j];
    });
  });
}

Tensor snap_to_grid(const Tensor& x, int exponent) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v = std::ldexp(std::nearbyint(std::ldexp(v, -exponent)), exponent);
  return make_result(x.shape(), std::move(out), "snap_to_grid", {&x}, [](Node& node) {
    accumulate(node, 0, [&](std::vector<double>& gx, const std::vector<double>&) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += node.grad[i];
    });
  });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw ContractError("dropout probability must be below 1");
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> factor(x.numel());
  for (double& f : factor) f = rng.uniform() < p ? 0.0 : keep_scale;
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  return make_result(x.shape(), std::move(out), "dropout", {&x}, [factor = std::move(factor)](Node& node) {
    accumulate(node, 0, [&](std::vector<double>& gx, const std::vector<double>&) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += node.grad[i] * factor[i];
    });
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result({1}, {total}, "sum", {&x}, [](Node& node) {
    accumulate(node, 0, [&](std::vector<double>& gx, const std::vector<double>&) {
      for (double& g : gx) g += node.grad[0];
    });
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets, std::int32_t ignore_index) {
  require_matrix(logits, "cross_entropy");
  require_finite(logits, "cross_entropy");
  const std::size_t t_len = logits.rows(), v = logits.cols();
  if (targets.size() != t_len) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_string(logits.shape()));
  }
  const auto lv = logits.values();
  std::vector<double> probs(t_len * v, 0.0);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < t_len; ++i) {
    if (targets[i] == ignore_index) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
      throw IndexError("cross_entropy: target " + std::to_string(targets[i]) + " outside vocabulary of " +
                       std::to_string(v));
    }
    const double* row = &lv[i * v];
    const double peak = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += probs[i * v + j] = std::exp(row[j] - peak);
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= z;
    total += -(row[targets[i]] - peak - std::log(z));
    ++counted;
  }
  const double loss = counted ? total / static_cast<double>(counted) : 0.0;
  return make_result({1}, {loss}, "cross_entropy", {&logits},
                     [v, counted, probs = std::move(probs),
                      target = std::vector<std::int32_t>(targets.begin(), targets.end()), ignore_index](Node& node) {
                       if (counted == 0) return;
                       accumulate(node, 0, [&](std::vector<double>& gl, const std::vector<double>&) {
                         const double coeff = node.grad[0] / static_cast<double>(counted);
                         for (std::size_t i = 0; i < target.size(); ++i) {
                           if (target[i] == ignore_index) continue;
                           for (std::size_t j = 0; j < v; ++j) gl[i * v + j] += coeff * probs[i * v + j];
                           gl[i * v + static_cast<std::size_t>(target[i])] -= coeff;
                         }
                       });
                     });
}

Tensor kl_divergence(const Tensor& target_probs, const Tensor& logits, std::span<const std::uint8_t> keep) {
  require_matrix(logits, "kl_divergence");
  require_same_shape(target_probs, logits, "kl_divergence");
  require_finite(logits, "kl_divergence");
  const std::size_t t_len = logits.rows(), v = logits.cols();
  if (keep.size() != t_len) throw ShapeError("kl_divergence: mask length does not match rows");
  const auto lv = logits.values();
  const auto pv = target_probs.values();
  std::vector<double> q(t_len * v, 0.0);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < t_len; ++i) {
    if (!keep[i]) continue;
    const double* row = &lv[i * v];
    const double peak = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += q[i * v + j] = std::exp(row[j] - peak);
    const double log_z = std::log(z);
    for (std::size_t j = 0; j < v; ++j) {
      q[i * v + j] /= z;
      const double p = pv[i * v + j];
      if (p > 0.0) total += p * (std::log(p) - (row[j] - peak - log_z));
    }
    ++counted;
  }
  const double loss = counted ? total / static_cast<double>(counted) : 0.0;
  // Only the logits take part in the graph; the target is a constant.
  return make_result({1}, {loss}, "kl_divergence", {&logits},
                     [v, counted, q = std::move(q), p = std::vector<double>(pv.begin(), pv.end()),
                      mask = std::vector<std::uint8_t>(keep.begin(), keep.end())](Node& node) {
                       if (counted == 0) return;
                       accumulate(node, 0, [&](std::vector<double>& gl, const std::vector<double>&) {
                         const double coeff = node.grad[0] / static_cast<double>(counted);
                         for (std::size_t i = 0; i < mask.size(); ++i) {
                           if (!mask[i]) continue;
                           double mass = 0.0;
                           for (std::size_t j = 0; j < v; ++j) mass += p[i * v + j];
                           for (std::size_t j = 0; j < v; ++j)
                             gl[i * v + j] += coeff * (q[i * v + j] * mass - p[i * v + j]);
                         }
                       });
                     });
}

}  // namespace fixcommit
