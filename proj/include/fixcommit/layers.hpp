#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fixcommit/checkpoint.hpp"
#include "fixcommit/ops.hpp"
#include "fixcommit/random.hpp"

namespace fixcommit {

/// Training flag plus the dropout source. Eval mode never touches rng.
struct ForwardMode {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;

  Tensor apply_dropout(const Tensor& x) const;
};

/// Normal init with variance 2 / (fan_in + fan_out).
Tensor xavier_normal(std::size_t rows, std::size_t cols, Rng& rng);

struct Linear {
  Tensor weight;  // out x in
  Tensor bias;    // out

  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& name, std::size_t width);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

/// keep[i * keys + j] != 0 lets query i attend to key j.
using AttentionMask = std::vector<std::uint8_t>;

AttentionMask causal_mask(std::size_t length);
/// Every query may attend to every non-PAD key.
AttentionMask key_padding_mask(std::size_t queries, std::span<const std::int32_t> key_ids, std::int32_t pad_id);

struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& params, const std::string& name, std::size_t hidden, std::size_t heads, Rng& rng);
  /// Empty mask means unrestricted attention.
  Tensor operator()(const Tensor& queries, const Tensor& memory, const AttentionMask& mask) const;
};

struct FeedForward {
  Linear inner, outer;

  FeedForward() = default;
  FeedForward(ParameterSet& params, const std::string& name, std::size_t hidden, std::size_t width, Rng& rng);
  Tensor operator()(const Tensor& x) const { return outer(gelu(inner(x))); }
};

/// Post-norm self-attention block.
struct EncoderLayer {
  MultiHeadAttention self_attention;
  LayerNorm norm1, norm2;
  FeedForward ffn;

  EncoderLayer() = default;
  EncoderLayer(ParameterSet& params, const std::string& name, std::size_t hidden, std::size_t heads, std::size_t ffn,
               Rng& rng);
  Tensor operator()(const Tensor& x, const AttentionMask& mask, const ForwardMode& mode) const;
};

/// Post-norm decoder block; without cross attention it is a causal encoder
/// block.
struct DecoderLayer {
  MultiHeadAttention self_attention, cross_attention;
  LayerNorm norm1, norm2, norm3;
  FeedForward ffn;
  bool has_cross = true;

  DecoderLayer() = default;
  DecoderLayer(ParameterSet& params, const std::string& name, std::size_t hidden, std::size_t heads, std::size_t ffn,
               bool cross, Rng& rng);
  Tensor operator()(const Tensor& x, const Tensor& memory, const AttentionMask& self_mask,
                    const AttentionMask& memory_mask, const ForwardMode& mode) const;
};

}  // namespace fixcommit
