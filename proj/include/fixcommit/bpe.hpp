#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fixcommit {

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;

// Fixed ids of the special tokens; every BpeModel registers them first, in
// this order, followed by one tag per language.
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kEosId = 2;
inline constexpr TokenId kUnkId = 3;
inline constexpr TokenId kClsId = 4;
inline constexpr TokenId kSepId = 5;

inline constexpr std::string_view kClsSurface = "[CLS]";
inline constexpr std::string_view kSepSurface = "[SEP]";

std::vector<std::string> default_languages();

/// Byte-pair-encoding model over whitespace-separated words.
///
/// Text is pre-tokenized into words on spaces and tabs with each newline kept
/// as its own atomic symbol. A word is split into characters, the last one
/// carrying an end-of-word marker, and merges are applied in learned order.
/// Whole words equal to a special surface ("[CLS]", "[SEP]", "<java>", ...)
/// encode to that special id. decode joins words with single spaces, so
/// decode(encode(t)) == t for text whose lines are single-space separated.
class BpeModel {
 public:
  static constexpr std::string_view kEndOfWord = "</w>";

  /// Learns up to num_merges merges. Ties in pair frequency go to the
  /// lexicographically smallest (left, right) pair. A merge whose result
  /// would collide with an existing symbol is rejected and never retried.
  static BpeModel learn(std::span<const std::string> corpus, std::size_t num_merges,
                        std::vector<std::string> languages = default_languages());

  TokenIds encode(std::string_view text, std::optional<std::string_view> language = std::nullopt) const;
  std::string decode(std::span<const TokenId> ids) const;

  TokenId language_id(std::string_view language) const;
  const std::vector<std::string>& languages() const { return languages_; }

  std::size_t vocab_size() const { return tokens_.size(); }
  std::size_t special_count() const { return specials_; }
  std::size_t alphabet_size() const { return alphabet_; }
  std::size_t merge_count() const { return merges_.size(); }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

  bool is_special(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < specials_; }
  /// Vocabulary string for an id (word-final pieces end with "</w>").
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view token) const;
  TokenId newline_id() const { return newline_id_; }

  void save(const std::filesystem::path& path) const;
  static BpeModel load(const std::filesystem::path& path);

 private:
  BpeModel() = default;
  void build_index();
  std::vector<std::string> segment(std::string_view word) const;
  void add_token(std::string token);

  std::vector<std::string> languages_;
  std::vector<std::string> tokens_;  // id -> string
  std::unordered_map<std::string, TokenId> ids_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::unordered_map<std::string, std::size_t> merge_rank_;  // "left\x1fright" -> rank
  std::size_t specials_ = 0;
  std::size_t alphabet_ = 0;
  TokenId newline_id_ = kUnkId;
};

}  // namespace fixcommit
