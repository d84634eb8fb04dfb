#include "fixcommit/joint_model.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "fixcommit/dataset.hpp"
#include "fixcommit/errors.hpp"
#include "fixcommit/ops.hpp"

namespace fixcommit {

using nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = 0x1417;

Tensor normal_table(std::size_t rows, std::size_t cols, double std_dev, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.normal() * std_dev;
  return Tensor::from({rows, cols}, std::move(v), true);
}

std::vector<std::size_t> as_rows(std::span<const TokenId> ids, std::size_t vocab) {
  std::vector<std::size_t> rows(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw IndexError("token id " + std::to_string(ids[i]) + " outside vocabulary of " + std::to_string(vocab));
    }
    rows[i] = static_cast<std::size_t>(ids[i]);
  }
  return rows;
}

std::vector<double> last_row(const Tensor& logits) {
  const std::size_t v = logits.cols();
  const auto vals = logits.values();
  return std::vector<double>(vals.end() - static_cast<std::ptrdiff_t>(v), vals.end());
}

}  // namespace

std::string architecture_name(Architecture a) { return a == Architecture::joint ? "joint" : "seq2seq"; }

Architecture parse_architecture(std::string_view name) {
  if (name == "joint") return Architecture::joint;
  if (name == "seq2seq") return Architecture::seq2seq;
  throw InputError("unknown architecture: " + std::string(name));
}

void ModelConfig::validate() const {
  if (vocab_size == 0) throw ContractError("model vocab_size must be positive");
  if (hidden < 2 || layers == 0 || heads == 0) throw ContractError("hidden >= 2, layers and heads must be positive");
  if (hidden % heads != 0) throw ContractError("hidden size must be divisible by heads");
  if (max_len < 2) throw ContractError("max_len must be at least 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("dropout must lie in [0, 1)");
}

std::string ModelConfig::to_json() const {
  json j = {{"architecture", architecture_name(architecture)},
            {"vocab_size", vocab_size},
            {"hidden", hidden},
            {"layers", layers},
            {"heads", heads},
            {"ffn", ffn},
            {"max_len", max_len},
            {"dropout", dropout}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("model config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw InputError("model config must be a JSON object");
  ModelConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "architecture") c.architecture = parse_architecture(value.get<std::string>());
      else if (key == "vocab_size") c.vocab_size = value.get<std::size_t>();
      else if (key == "hidden") c.hidden = value.get<std::size_t>();
      else if (key == "layers") c.layers = value.get<std::size_t>();
      else if (key == "heads") c.heads = value.get<std::size_t>();
      else if (key == "ffn") c.ffn = value.get<std::size_t>();
      else if (key == "max_len") c.max_len = value.get<std::size_t>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else throw InputError("unknown model config field: " + key);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("bad model config field: ") + e.what());
  }
  return c;
}

TeacherForcing teacher_forcing(std::span<const TokenId> target) {
  TeacherForcing tf;
  tf.input.reserve(target.size() + 1);
  tf.input.push_back(kBosId);
  tf.input.insert(tf.input.end(), target.begin(), target.end());
  tf.labels.assign(target.begin(), target.end());
  tf.labels.push_back(kEosId);
  return tf;
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng = Rng::stream(seed, kInitStream);
  const std::size_t h = config_.hidden, v = config_.vocab_size, f = config_.ffn_width();
  token_embedding_ = params_.add("embed.token", normal_table(v, h, 1.0, rng));
  position_embedding_ = params_.add("embed.position", normal_table(config_.max_len, h, 0.5, rng));
  for (std::size_t i = 0; i < config_.layers; ++i) {
    encoder_.emplace_back(params_, "encoder." + std::to_string(i), h, config_.heads, f, rng);
  }
  for (std::size_t i = 0; i < config_.layers; ++i) {
    fixed_decoder_.emplace_back(params_, "fixed_decoder." + std::to_string(i), h, config_.heads, f, true, rng);
  }
  fixed_output_ = Linear(params_, "fixed_output", h, v, rng);
  tagger_ = Linear(params_, "tagger", h, 2, rng);
  if (config_.architecture == Architecture::joint) {
    for (std::size_t i = 0; i < config_.layers; ++i) {
      commit_decoder_.emplace_back(params_, "commit_decoder." + std::to_string(i), h, config_.heads, f, false, rng);
    }
    changes_aware_ = ChangesAwareAttentionParams(params_, "changes_aware", h, rng);
    commit_output_ = Linear(params_, "commit_output", h, v, rng);
  }
}

const ChangesAwareAttentionParams& Model::changes_aware() const {
  if (config_.architecture != Architecture::joint) throw ContractError("seq2seq models have no changes-aware attention");
  return changes_aware_;
}

void Model::check_length(std::size_t n, const char* what) const {
  if (n == 0) throw InputError(std::string(what) + " is empty");
  if (n > config_.max_len) {
    throw InputError(std::string(what) + " has " + std::to_string(n) + " tokens; the limit is " +
                     std::to_string(config_.max_len));
  }
}

Tensor Model::embed(std::span<const TokenId> ids, const ForwardMode& mode) const {
  std::vector<std::size_t> positions(ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
  const Tensor x = add(gather_rows(token_embedding_, as_rows(ids, config_.vocab_size)),
                       gather_rows(position_embedding_, positions));
  return mode.apply_dropout(x);
}

Tensor Model::encode_buggy(std::span<const TokenId> ids, const ForwardMode& mode) const {
  check_length(ids.size(), "source sequence");
  const AttentionMask mask = key_padding_mask(ids.size(), ids, kPadId);
  Tensor x = embed(ids, mode);
  for (const auto& layer : encoder_) x = layer(x, mask, mode);
  return x;
}

Tensor Model::tag_logits(const Tensor& z_b, std::span<const std::size_t> cls_positions) const {
  for (std::size_t p : cls_positions) {
    if (p >= z_b.rows()) {
      throw IndexError("[CLS] position " + std::to_string(p) + " outside encoding of " +
                       std::to_string(z_b.rows()) + " rows");
    }
  }
  if (cls_positions.empty()) throw ContractError("no [CLS] positions to tag");
  return tagger_(gather_rows(z_b, cls_positions));
}

std::vector<double> Model::tag_lines(const Tensor& z_b, std::span<const std::size_t> cls_positions) const {
  if (cls_positions.empty()) return {};
  NoGradGuard no_grad;
  const Tensor logits = tag_logits(z_b, cls_positions);
  std::vector<double> out;
  for (std::size_t i = 0; i < cls_positions.size(); ++i) {
    const double row[2] = {logits.at(i, 0), logits.at(i, 1)};
    out.push_back(std::exp(log_softmax(row)[1]));
  }
  return out;
}

FixedDecoding Model::decode_fixed(const Tensor& z_b, std::span<const TokenId> prefix, const ForwardMode& mode,
                                  std::span<const TokenId> source_ids) const {
  check_length(prefix.size(), "decoder prefix");
  const AttentionMask self_mask = causal_mask(prefix.size());
  const AttentionMask memory_mask =
      source_ids.empty() ? AttentionMask{} : key_padding_mask(prefix.size(), source_ids, kPadId);
  Tensor x = embed(prefix, mode);
  for (const auto& layer : fixed_decoder_) x = layer(x, z_b, self_mask, memory_mask, mode);
  return {x, fixed_output_(x)};
}

Tensor Model::decode_commit(const Tensor& z_b, const Tensor& z_f, std::span<const TokenId> prefix,
                            const ForwardMode& mode) const {
  const auto& caa = changes_aware();
  check_length(prefix.size(), "commit prefix");
  const AttentionMask self_mask = causal_mask(prefix.size());
  Tensor x = embed(prefix, mode);
  for (const auto& layer : commit_decoder_) x = layer(x, x, self_mask, {}, mode);
  return commit_output_(changes_aware_attention(caa, x, z_b, z_f));
}

TokenIds Model::generate_fixed(std::span<const TokenId> source, const DecodeStrategy& strategy) const {
  NoGradGuard no_grad;
  const Tensor z_b = encode_buggy(source);
  const StepFunction step = [&](std::span<const TokenId> generated) {
    TokenIds input = {kBosId};
    input.insert(input.end(), generated.begin(), generated.end());
    return log_softmax(last_row(decode_fixed(z_b, input, {}, source).logits));
  };
  return decode_sequence(step, strategy, config_.max_len - 1, kEosId);
}

Generation Model::generate(std::span<const TokenId> source, const DecodeStrategy& strategy) const {
  NoGradGuard no_grad;
  Generation out;
  const Tensor z_b = encode_buggy(source);
  out.fixed = generate_fixed(source, strategy);
  const auto cls = cls_positions(source);
  out.tag_probabilities = tag_lines(z_b, cls);
  for (double p : out.tag_probabilities) out.line_tags.push_back(p > 0.5 ? 1 : 0);
  if (config_.architecture == Architecture::joint) {
    TokenIds fixed_input = {kBosId};
    fixed_input.insert(fixed_input.end(), out.fixed.begin(), out.fixed.end());
    const Tensor z_f = decode_fixed(z_b, fixed_input, {}, source).hidden;
    const StepFunction step = [&](std::span<const TokenId> generated) {
      TokenIds input = {kBosId};
      input.insert(input.end(), generated.begin(), generated.end());
      return log_softmax(last_row(decode_commit(z_b, z_f, input)));
    };
    out.commit = decode_sequence(step, strategy, config_.max_len - 1, kEosId);
  }
  return out;
}

void Model::save(const std::filesystem::path& path, std::map<std::string, std::string> meta) const {
  meta["model_config"] = config_.to_json();
  meta["trained_steps"] = std::to_string(trained_steps_);
  save_parameters(path, params_, meta);
}

ModelConfig Model::read_config(const std::filesystem::path& path) {
  const TensorFile file = load_tensor_file(path);
  const auto it = file.meta.find("model_config");
  if (it == file.meta.end()) throw ContractError(path.string() + " is not a model checkpoint (no model_config)");
  return ModelConfig::from_json(it->second);
}

Model Model::load(const std::filesystem::path& path) {
  Model model(read_config(path), 0);
  const auto meta = load_parameters(path, model.params_);
  if (auto it = meta.find("trained_steps"); it != meta.end()) model.trained_steps_ = std::stoull(it->second);
  return model;
}

}  // namespace fixcommit
