#include "fixcommit/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "fixcommit/errors.hpp"

namespace fixcommit {

namespace {

constexpr const char* kMagic = "fixcommit-bpe";
constexpr int kVersion = 1;
constexpr std::string_view kNewline = "\n";
constexpr char kPairSeparator = '\x1f';

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

// Words and newline markers, in order.
std::vector<std::string_view> pre_tokenize(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\n') {
      out.push_back(kNewline);
      ++i;
    } else if (is_space(c)) {
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size() && text[j] != '\n' && !is_space(text[j])) ++j;
      out.push_back(text.substr(i, j - i));
      i = j;
    }
  }
  return out;
}

// Splits a word into UTF-8 code points so multi-byte characters stay whole.
std::vector<std::string> characters(std::string_view word) {
  std::vector<std::string> chars;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto lead = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    len = std::min(len, word.size() - i);
    chars.emplace_back(word.substr(i, len));
    i += len;
  }
  chars.back() += BpeModel::kEndOfWord;
  return chars;
}

std::string pair_key(const std::string& left, const std::string& right) {
  std::string key = left;
  key += kPairSeparator;
  key += right;
  return key;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '\\') out += "\\\\";
    else if (c == '\n') out += "\\n";
    else if (c == ' ') out += "\\s";
    else out += c;
  }
  return out;
}

std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char n = s[++i];
      out += n == 'n' ? '\n' : n == 's' ? ' ' : n;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::vector<std::string> special_surfaces(const std::vector<std::string>& languages) {
  std::vector<std::string> out = {"<pad>", "<s>", "</s>", "<unk>", std::string(kClsSurface), std::string(kSepSurface)};
  for (const auto& lang : languages) out.push_back("<" + lang + ">");
  return out;
}

}  // namespace

std::vector<std::string> default_languages() { return {"java", "python", "javascript", "csharp", "cpp"}; }

void BpeModel::add_token(std::string token) {
  const auto id = static_cast<TokenId>(tokens_.size());
  if (!ids_.emplace(token, id).second) throw ContractError("duplicate vocabulary entry: " + escape(token));
  tokens_.push_back(std::move(token));
}

void BpeModel::build_index() {
  merge_rank_.clear();
  for (std::size_t r = 0; r < merges_.size(); ++r) merge_rank_[pair_key(merges_[r].first, merges_[r].second)] = r;
  newline_id_ = ids_.count(std::string(kNewline)) ? ids_.at(std::string(kNewline)) : kUnkId;
}

BpeModel BpeModel::learn(std::span<const std::string> corpus, std::size_t num_merges,
                         std::vector<std::string> languages) {
  if (corpus.empty()) throw InputError("cannot learn BPE from an empty corpus");
  {
    std::set<std::string> unique(languages.begin(), languages.end());
    if (unique.size() != languages.size()) throw InputError("duplicate language tag");
  }

  BpeModel model;
  model.languages_ = std::move(languages);
  const auto specials = special_surfaces(model.languages_);
  const std::unordered_set<std::string> special_set(specials.begin(), specials.end());

  // Word frequencies; a std::map keeps everything independent of corpus order.
  std::map<std::string, std::size_t> word_counts;
  for (const auto& text : corpus) {
    for (auto word : pre_tokenize(text)) {
      if (word == kNewline || special_set.count(std::string(word))) continue;
      ++word_counts[std::string(word)];
    }
  }

  // Symbols are interned as ints; the alphabet is sorted for determinism.
  std::vector<std::string> symbols;
  std::unordered_map<std::string, int> symbol_ids;
  auto intern = [&](const std::string& s) {
    auto [it, inserted] = symbol_ids.emplace(s, static_cast<int>(symbols.size()));
    if (inserted) symbols.push_back(s);
    return it->second;
  };
  std::set<std::string> alphabet = {std::string(kNewline)};
  for (const auto& [word, count] : word_counts)
    for (auto& ch : characters(word)) alphabet.insert(ch);
  for (const auto& s : alphabet) intern(s);

  struct Word {
    std::vector<int> parts;
    std::size_t count;
  };
  std::vector<Word> words;
  for (const auto& [word, count] : word_counts) {
    Word w{{}, count};
    for (auto& ch : characters(word)) w.parts.push_back(symbol_ids.at(ch));
    words.push_back(std::move(w));
  }

  auto key_of = [](int a, int b) { return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b); };
  std::unordered_set<std::uint64_t> rejected;
  std::vector<std::pair<std::string, std::string>> merges;
  while (merges.size() < num_merges) {
    std::unordered_map<std::uint64_t, std::size_t> pair_counts;
    for (const auto& w : words)
      for (std::size_t i = 0; i + 1 < w.parts.size(); ++i) pair_counts[key_of(w.parts[i], w.parts[i + 1])] += w.count;

    std::optional<std::uint64_t> best;
    std::size_t best_count = 0;
    for (const auto& [key, count] : pair_counts) {
      if (rejected.count(key)) continue;
      if (!best || count > best_count) {
        best = key;
        best_count = count;
        continue;
      }
      if (count < best_count) continue;
      const auto& l = symbols[key >> 32];
      const auto& r = symbols[key & 0xffffffffu];
      const auto& bl = symbols[*best >> 32];
      const auto& br = symbols[*best & 0xffffffffu];
      if (std::tie(l, r) < std::tie(bl, br)) best = key;
    }
    if (!best) break;

    const int left = static_cast<int>(*best >> 32);
    const int right = static_cast<int>(*best & 0xffffffffu);
    const std::string merged = symbols[left] + symbols[right];
    if (symbol_ids.count(merged)) {
      rejected.insert(*best);
      continue;
    }
    const int merged_id = intern(merged);
    merges.emplace_back(symbols[left], symbols[right]);
    for (auto& w : words) {
      std::vector<int> next;
      next.reserve(w.parts.size());
      for (std::size_t i = 0; i < w.parts.size(); ++i) {
        if (i + 1 < w.parts.size() && w.parts[i] == left && w.parts[i + 1] == right) {
          next.push_back(merged_id);
          ++i;
        } else {
          next.push_back(w.parts[i]);
        }
      }
      w.parts = std::move(next);
    }
  }

  for (const auto& s : specials) model.add_token(s);
  model.specials_ = specials.size();
  for (const auto& s : alphabet) model.add_token(s);
  model.alphabet_ = alphabet.size();
  for (const auto& [l, r] : merges) model.add_token(l + r);
  model.merges_ = std::move(merges);
  model.build_index();
  return model;
}

std::vector<std::string> BpeModel::segment(std::string_view word) const {
  std::vector<std::string> parts = characters(word);
  while (parts.size() > 1) {
    std::size_t best_rank = merges_.size();
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      auto it = merge_rank_.find(pair_key(parts[i], parts[i + 1]));
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_at = i;
      }
    }
    if (best_rank == merges_.size()) break;
    const auto& [left, right] = merges_[best_rank];
    std::vector<std::string> next;
    next.reserve(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (i >= best_at && i + 1 < parts.size() && parts[i] == left && parts[i + 1] == right) {
        next.push_back(left + right);
        ++i;
      } else {
        next.push_back(std::move(parts[i]));
      }
    }
    parts = std::move(next);
  }
  return parts;
}

TokenIds BpeModel::encode(std::string_view text, std::optional<std::string_view> language) const {
  TokenIds ids;
  if (language) ids.push_back(language_id(*language));
  for (auto word : pre_tokenize(text)) {
    if (word == kNewline) {
      ids.push_back(newline_id_);
      continue;
    }
    if (auto it = ids_.find(std::string(word)); it != ids_.end() && is_special(it->second)) {
      ids.push_back(it->second);
      continue;
    }
    for (const auto& piece : segment(word)) {
      auto it = ids_.find(piece);
      ids.push_back(it == ids_.end() ? kUnkId : it->second);
    }
  }
  return ids;
}

std::string BpeModel::decode(std::span<const TokenId> ids) const {
  std::string out;
  bool line_start = true;
  bool in_word = false;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(tokens_.size()));
    }
    if (is_special(id) && id != kClsId) continue;
    if (id == newline_id_) {
      out += '\n';
      line_start = true;
      in_word = false;
      continue;
    }
    std::string_view piece = tokens_[static_cast<std::size_t>(id)];
    bool final_piece = true;
    if (!is_special(id)) {
      final_piece = piece.ends_with(kEndOfWord);
      if (final_piece) piece.remove_suffix(kEndOfWord.size());
    }
    if (!in_word && !line_start) out += ' ';
    out += piece;
    in_word = !final_piece;
    line_start = false;
  }
  return out;
}

TokenId BpeModel::language_id(std::string_view language) const {
  for (std::size_t i = 0; i < languages_.size(); ++i) {
    if (languages_[i] == language) return static_cast<TokenId>(kSepId + 1 + i);
  }
  throw InputError("unknown language tag: " + std::string(language));
}

const std::string& BpeModel::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> BpeModel::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

void BpeModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << kMagic << ' ' << kVersion << '\n';
  out << "languages " << languages_.size() << '\n';
  for (const auto& l : languages_) out << escape(l) << '\n';
  out << "specials " << specials_ << '\n';
  for (std::size_t i = 0; i < specials_; ++i) out << escape(tokens_[i]) << '\n';
  out << "alphabet " << alphabet_ << '\n';
  for (std::size_t i = specials_; i < specials_ + alphabet_; ++i) out << escape(tokens_[i]) << '\n';
  out << "merges " << merges_.size() << '\n';
  for (const auto& [l, r] : merges_) out << escape(l) << ' ' << escape(r) << '\n';
  out << "vocab " << tokens_.size() << '\n';
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << escape(tokens_[i]) << ' ' << i << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

BpeModel BpeModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kMagic) throw InputError(path.string() + " is not a BPE model file");
  if (version != kVersion) throw InputError(path.string() + ": unsupported BPE model version " + std::to_string(version));

  auto section = [&](const char* name) {
    std::string label;
    std::size_t count = 0;
    in >> label >> count;
    if (!in || label != name) throw InputError(path.string() + ": expected section '" + name + "'");
    return count;
  };
  auto read_word = [&]() {
    std::string w;
    if (!(in >> w)) throw InputError(path.string() + ": truncated");
    return unescape(w);
  };

  BpeModel model;
  for (std::size_t n = section("languages"), i = 0; i < n; ++i) model.languages_.push_back(read_word());
  const std::size_t n_specials = section("specials");
  for (std::size_t i = 0; i < n_specials; ++i) model.add_token(read_word());
  model.specials_ = n_specials;
  if (special_surfaces(model.languages_) != model.tokens_) {
    throw InputError(path.string() + ": special-token block does not match the language list");
  }
  const std::size_t n_alphabet = section("alphabet");
  for (std::size_t i = 0; i < n_alphabet; ++i) model.add_token(read_word());
  model.alphabet_ = n_alphabet;
  for (std::size_t n = section("merges"), i = 0; i < n; ++i) {
    std::string l = read_word();
    std::string r = read_word();
    model.add_token(l + r);
    model.merges_.emplace_back(std::move(l), std::move(r));
  }
  const std::size_t n_vocab = section("vocab");
  if (n_vocab != model.tokens_.size()) throw InputError(path.string() + ": vocabulary size disagrees with merges");
  for (std::size_t i = 0; i < n_vocab; ++i) {
    std::string tok = read_word();
    std::size_t id = 0;
    in >> id;
    if (!in || id != i || model.tokens_[i] != tok) {
      throw InputError(path.string() + ": vocabulary entry " + std::to_string(i) + " inconsistent");
    }
  }
  model.build_index();
  return model;
}

}  // namespace fixcommit
