#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fixcommit/bpe.hpp"
#include "fixcommit/changes_aware_attention.hpp"
#include "fixcommit/checkpoint.hpp"
#include "fixcommit/decoding.hpp"
#include "fixcommit/layers.hpp"

namespace fixcommit {

/// seq2seq: encoder + one decoder (repair, cascaded commit, teacher and
/// back-translation models). joint: adds the commit decoder bridged to both
/// sides through changes-aware attention.
enum class Architecture { seq2seq, joint };

std::string architecture_name(Architecture a);
Architecture parse_architecture(std::string_view name);

struct ModelConfig {
  Architecture architecture = Architecture::joint;
  std::size_t vocab_size = 0;
  std::size_t hidden = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn = 0;  // 0 = 4 * hidden
  std::size_t max_len = 128;
  double dropout = 0.1;

  std::size_t ffn_width() const { return ffn ? ffn : 4 * hidden; }
  /// Throws ContractError when a field is out of range.
  void validate() const;
  std::string to_json() const;
  /// Missing fields keep their defaults; unknown fields are rejected.
  static ModelConfig from_json(std::string_view text);
};

struct FixedDecoding {
  Tensor hidden;  // z_f, m x H
  Tensor logits;  // m x V
};

struct Generation {
  TokenIds fixed;
  TokenIds commit;             // empty for seq2seq models
  std::vector<int> line_tags;  // argmax per "[CLS]" of the source
  std::vector<double> tag_probabilities;
};

/// Decoder input ([BOS] + target) and labels (target + [EOS]).
struct TeacherForcing {
  TokenIds input;
  TokenIds labels;
};
TeacherForcing teacher_forcing(std::span<const TokenId> target);

/// Transformer encoder-decoder with a line-tagging head. Token and position
/// embeddings are shared by every stack; each decoder has its own output
/// projection. Parameters are registered in a ParameterSet under stable
/// names, so a checkpoint is the parameter file plus the config.
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const ChangesAwareAttentionParams& changes_aware() const;

  /// z_b, n x H. PAD positions are hidden from attention.
  Tensor encode_buggy(std::span<const TokenId> ids, const ForwardMode& mode = {}) const;
  /// Two-class logits per "[CLS]" row of z_b.
  Tensor tag_logits(const Tensor& z_b, std::span<const std::size_t> cls_positions) const;
  /// Probability of tag 1 for every line.
  std::vector<double> tag_lines(const Tensor& z_b, std::span<const std::size_t> cls_positions) const;
  /// Causal decoder over prefix with cross attention into z_b. source_ids (if
  /// given) masks PAD keys of z_b.
  FixedDecoding decode_fixed(const Tensor& z_b, std::span<const TokenId> prefix, const ForwardMode& mode = {},
                             std::span<const TokenId> source_ids = {}) const;
  /// Causal commit decoder whose states reach z_b and z_f only through the
  /// changes-aware attention.
  Tensor decode_commit(const Tensor& z_b, const Tensor& z_f, std::span<const TokenId> prefix,
                       const ForwardMode& mode = {}) const;

  /// Decodes F̂ (and for joint models Ĉ conditioned on z_b and z_f(F̂)).
  Generation generate(std::span<const TokenId> source, const DecodeStrategy& strategy = {}) const;
  TokenIds generate_fixed(std::span<const TokenId> source, const DecodeStrategy& strategy = {}) const;

  /// Count of optimizer steps applied; zero for a fresh model.
  std::size_t trained_steps() const { return trained_steps_; }
  void add_trained_steps(std::size_t n) { trained_steps_ += n; }

  void save(const std::filesystem::path& path, std::map<std::string, std::string> meta = {}) const;
  static Model load(const std::filesystem::path& path);
  /// Config stored in a checkpoint, without loading the weights.
  static ModelConfig read_config(const std::filesystem::path& path);

 private:
  void check_length(std::size_t n, const char* what) const;
  Tensor embed(std::span<const TokenId> ids, const ForwardMode& mode) const;

  ModelConfig config_;
  ParameterSet params_;
  Tensor token_embedding_, position_embedding_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> fixed_decoder_;
  Linear fixed_output_;
  Linear tagger_;
  std::vector<DecoderLayer> commit_decoder_;
  ChangesAwareAttentionParams changes_aware_;
  Linear commit_output_;
  std::size_t trained_steps_ = 0;
};

}  // namespace fixcommit
