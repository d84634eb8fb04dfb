#include "fixcommit/layers.hpp"

#include <cmath>

#include "fixcommit/errors.hpp"

namespace fixcommit {

Tensor ForwardMode::apply_dropout(const Tensor& x) const {
  if (!training || dropout <= 0.0) return x;
  if (rng == nullptr) throw ContractError("training-mode dropout needs a random generator");
  return fixcommit::dropout(x, dropout, *rng, true);
}

Tensor xavier_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  const double std_dev = std::sqrt(2.0 / static_cast<double>(rows + cols));
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.normal() * std_dev;
  return Tensor::from({rows, cols}, std::move(v), true);
}

Linear::Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : weight(params.add(name + ".weight", xavier_normal(out, in, rng))),
      bias(params.add(name + ".bias", Tensor::zeros({out}, true))) {}

Tensor Linear::operator()(const Tensor& x) const { return add_row(matmul_nt(x, weight), bias); }

LayerNorm::LayerNorm(ParameterSet& params, const std::string& name, std::size_t width)
    : gain(params.add(name + ".gain", Tensor::filled({width}, 1.0, true))),
      bias(params.add(name + ".bias", Tensor::zeros({width}, true))) {}

AttentionMask causal_mask(std::size_t length) {
  AttentionMask keep(length * length, 0);
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = 0; j <= i; ++j) keep[i * length + j] = 1;
  return keep;
}

AttentionMask key_padding_mask(std::size_t queries, std::span<const std::int32_t> key_ids, std::int32_t pad_id) {
  bool any_pad = false;
  for (auto id : key_ids) any_pad = any_pad || id == pad_id;
  if (!any_pad) return {};
  AttentionMask keep(queries * key_ids.size());
  for (std::size_t i = 0; i < queries; ++i)
    for (std::size_t j = 0; j < key_ids.size(); ++j) keep[i * key_ids.size() + j] = key_ids[j] != pad_id;
  return keep;
}

MultiHeadAttention::MultiHeadAttention(ParameterSet& params, const std::string& name, std::size_t hidden,
                                       std::size_t heads_, Rng& rng)
    : query(params, name + ".query", hidden, hidden, rng),
      key(params, name + ".key", hidden, hidden, rng),
      value(params, name + ".value", hidden, hidden, rng),
      output(params, name + ".output", hidden, hidden, rng),
      heads(heads_) {
  if (heads == 0 || hidden % heads != 0) throw ContractError("hidden size must be divisible by the head count");
}

Tensor MultiHeadAttention::operator()(const Tensor& queries, const Tensor& memory, const AttentionMask& mask) const {
  const Tensor q = query(queries);
  const Tensor k = key(memory);
  const Tensor v = value(memory);
  const std::size_t width = q.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(width));
  std::vector<Tensor> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t offset = h * width;
    Tensor scores = scale(matmul_nt(slice_cols(q, offset, width), slice_cols(k, offset, width)), inv_sqrt);
    if (!mask.empty()) scores = mask_fill(scores, mask);
    outputs.push_back(matmul(softmax_rows(scores), slice_cols(v, offset, width)));
  }
  return output(heads == 1 ? outputs[0] : concat_cols(outputs));
}

FeedForward::FeedForward(ParameterSet& params, const std::string& name, std::size_t hidden, std::size_t width,
                         Rng& rng)
    : inner(params, name + ".inner", hidden, width, rng), outer(params, name + ".outer", width, hidden, rng) {}

EncoderLayer::EncoderLayer(ParameterSet& params, const std::string& name, std::size_t hidden, std::size_t heads,
                           std::size_t ffn_width, Rng& rng)
    : self_attention(params, name + ".self_attention", hidden, heads, rng),
      norm1(params, name + ".norm1", hidden),
      norm2(params, name + ".norm2", hidden),
      ffn(params, name + ".ffn", hidden, ffn_width, rng) {}

Tensor EncoderLayer::operator()(const Tensor& x, const AttentionMask& mask, const ForwardMode& mode) const {
  Tensor h = norm1(add(x, mode.apply_dropout(self_attention(x, x, mask))));
  return norm2(add(h, mode.apply_dropout(ffn(h))));
}

DecoderLayer::DecoderLayer(ParameterSet& params, const std::string& name, std::size_t hidden, std::size_t heads,
                           std::size_t ffn_width, bool cross, Rng& rng)
    : self_attention(params, name + ".self_attention", hidden, heads, rng), has_cross(cross) {
  norm1 = LayerNorm(params, name + ".norm1", hidden);
  if (has_cross) {
    cross_attention = MultiHeadAttention(params, name + ".cross_attention", hidden, heads, rng);
    norm2 = LayerNorm(params, name + ".norm2", hidden);
  }
  ffn = FeedForward(params, name + ".ffn", hidden, ffn_width, rng);
  norm3 = LayerNorm(params, name + ".norm3", hidden);
}

Tensor DecoderLayer::operator()(const Tensor& x, const Tensor& memory, const AttentionMask& self_mask,
                                const AttentionMask& memory_mask, const ForwardMode& mode) const {
  Tensor h = norm1(add(x, mode.apply_dropout(self_attention(x, x, self_mask))));
  if (has_cross) h = norm2(add(h, mode.apply_dropout(cross_attention(h, memory, memory_mask))));
  return norm3(add(h, mode.apply_dropout(ffn(h))));
}

}  // namespace fixcommit
