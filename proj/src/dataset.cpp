#include "fixcommit/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "fixcommit/errors.hpp"
#include "fixcommit/random.hpp"

namespace fixcommit {

using nlohmann::json;

namespace {

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out += ' ';
      out += c;
      pending_space = false;
    }
  }
  return out;
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

bool is_change_id(const std::string& token) {
  std::string_view t = token;
  // Gerrit style "I<40 hex>"
  if (t.size() == 41 && t[0] == 'i') t.remove_prefix(1);
  if (t.size() < 7) return false;
  bool has_digit = false;
  for (char c : t) {
    if (!std::isxdigit(static_cast<unsigned char>(c))) return false;
    has_digit = has_digit || std::isdigit(static_cast<unsigned char>(c));
  }
  return has_digit;
}

double average(std::size_t total, std::size_t count) {
  return count ? static_cast<double>(total) / static_cast<double>(count) : 0.0;
}

}  // namespace

std::string strip_urls(std::string_view text) {
  static const std::regex url(R"((https?://|ftp://|www\.)[^\s]+)", std::regex::icase);
  return std::regex_replace(std::string(text), url, "");
}

std::string message_key(std::string_view message) { return to_lower(collapse_whitespace(message)); }

std::map<std::string, std::size_t> message_frequencies(std::span<const CommitRecord> records) {
  std::map<std::string, std::size_t> freq;
  for (const auto& r : records) ++freq[message_key(r.message)];
  return freq;
}

MessageVerdict filter_message(std::string_view message, const std::map<std::string, std::size_t>& corpus_frequency) {
  MessageVerdict verdict;
  verdict.cleaned = collapse_whitespace(strip_urls(message));
  const auto words = lexical_tokens(verdict.cleaned).size();
  if (words < kMinMessageWords || words > kMaxMessageWords) {
    verdict.reason = "length";
    return verdict;
  }
  if (auto it = corpus_frequency.find(message_key(message));
      it != corpus_frequency.end() && it->second > kMaxMessageRepeats) {
    verdict.reason = "repeated";
    return verdict;
  }
  const std::string lowered = to_lower(verdict.cleaned);
  if (lowered.find("fix") == std::string::npos && lowered.find("solve") == std::string::npos) {
    verdict.reason = "no repair pattern";
    return verdict;
  }
  verdict.accepted = true;
  return verdict;
}

const std::vector<std::string>& stop_words() {
  static const std::vector<std::string> words = {
      "a",       "about",  "above",  "after",   "again",   "against", "all",     "am",      "an",     "and",
      "any",     "are",    "as",     "at",      "be",      "because", "been",    "before",  "being",  "below",
      "between", "both",   "but",    "by",      "can",     "could",   "did",     "do",      "does",   "doing",
      "down",    "during", "each",   "few",     "for",     "from",    "further", "had",     "has",    "have",
      "having",  "he",     "her",    "here",    "hers",    "herself", "him",     "himself", "his",    "how",
      "i",       "if",     "in",     "into",    "is",      "it",      "its",     "itself",  "just",   "me",
      "more",    "most",   "my",     "myself",  "no",      "nor",     "not",     "now",     "of",     "off",
      "on",      "once",   "only",   "or",      "other",   "our",     "ours",    "out",     "over",   "own",
      "same",    "she",    "should", "so",      "some",    "such",    "than",    "that",    "the",    "their",
      "theirs",  "them",   "then",   "there",   "these",   "they",    "this",    "those",   "through", "to",
      "too",     "under",  "until",  "up",      "very",    "was",     "we",      "were",    "what",   "when",
      "where",   "which",  "while",  "who",     "whom",    "why",     "will",    "with",    "would",  "you",
      "your",    "yours",  "s",      "t",       "don",     "should",  "ve",      "ll",      "re",     "d",
      "m",       "o",      "y"};
  return words;
}

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::vector<std::string> message_content_tokens(std::string_view message) {
  static const std::unordered_set<std::string> stops(stop_words().begin(), stop_words().end());
  std::vector<std::string> out;
  for (auto& tok : word_tokens(strip_urls(message))) {
    if (stops.count(tok) || is_change_id(tok)) continue;
    out.push_back(std::move(tok));
  }
  return out;
}

bool lexical_overlap_filter(std::string_view message, std::string_view buggy, std::string_view fixed) {
  const auto content = message_content_tokens(message);
  if (content.empty()) return false;
  std::unordered_set<std::string> code;
  for (auto& t : word_tokens(buggy)) code.insert(std::move(t));
  for (auto& t : word_tokens(fixed)) code.insert(std::move(t));
  return std::any_of(content.begin(), content.end(), [&](const std::string& t) { return code.count(t) != 0; });
}

std::string tagged_buggy_text(std::string_view buggy) {
  auto lines = split_lines(buggy);
  for (auto& line : lines) line = std::string(kClsSurface) + (line.empty() ? "" : " ") + line;
  return join_lines(lines);
}

std::vector<int> line_tags_from_diff(const LineDiff& diff) {
  std::vector<int> tags;
  for (const auto& l : diff.lines) {
    if (l.marker == LineMarker::unchanged) tags.push_back(0);
    else if (l.marker == LineMarker::buggy_only) tags.push_back(1);
  }
  return tags;
}

std::vector<std::size_t> cls_positions(std::span<const TokenId> tokens) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] == kClsId) out.push_back(i);
  return out;
}

TaggedBuggy build_tagged_buggy(std::string_view buggy, const LineDiff& diff, const BpeModel& bpe,
                               std::optional<std::string_view> language) {
  if (diff.buggy_text() != buggy) throw ContractError("line diff was not produced from this buggy text");
  TaggedBuggy out;
  out.line_tags = line_tags_from_diff(diff);
  out.tokens = bpe.encode(tagged_buggy_text(buggy), language);
  out.cls_positions = cls_positions(out.tokens);
  if (out.cls_positions.size() != out.line_tags.size()) {
    throw ContractError("buggy text contains a literal [CLS] token; cannot align line tags");
  }
  return out;
}

std::string build_change_input(std::string_view buggy, std::string_view fixed) {
  const LineDiff diff = line_diff(buggy, fixed);
  std::string out;
  for (const auto& l : diff.lines) {
    if (l.marker == LineMarker::unchanged) continue;
    if (!out.empty()) out += ' ';
    out += l.marker == LineMarker::buggy_only ? kRemovedMarker : kAddedMarker;
    if (!l.text.empty()) {
      out += ' ';
      out += l.text;
    }
  }
  return out;
}

void encode_example(TripleExample& example, const BpeModel& bpe, bool language_tags) {
  std::optional<std::string_view> lang;
  if (language_tags) lang = example.language;
  example.buggy_tokens = bpe.encode(tagged_buggy_text(example.buggy), lang);
  const auto cls = cls_positions(example.buggy_tokens);
  if (!example.line_tags.empty() && cls.size() != example.line_tags.size()) {
    throw ContractError("line tags (" + std::to_string(example.line_tags.size()) + ") do not match buggy lines (" +
                        std::to_string(cls.size()) + ")");
  }
  example.fixed_tokens = bpe.encode(example.fixed);
  example.message_tokens = bpe.encode(example.message);
  example.change_tokens = bpe.encode(example.change_input, lang);
}

CuratedCorpus curate(std::span<const CommitRecord> records) {
  CuratedCorpus corpus;
  const auto freq = message_frequencies(records);
  std::vector<MonolingualSnippet> pool;
  for (const auto& r : records) {
    ++corpus.counters.raw;
    if (blank(r.buggy) || blank(r.fixed) || blank(r.message) || blank(r.language)) {
      ++corpus.counters.empty_field;
      continue;
    }
    const auto verdict = filter_message(r.message, freq);
    if (!verdict.accepted) {
      if (verdict.reason == "length") ++corpus.counters.message_length;
      else if (verdict.reason == "repeated") ++corpus.counters.message_repeated;
      else ++corpus.counters.no_repair_pattern;
      pool.push_back({r.fixed, r.language});
      continue;
    }
    if (!lexical_overlap_filter(verdict.cleaned, r.buggy, r.fixed)) {
      ++corpus.counters.no_lexical_overlap;
      pool.push_back({r.fixed, r.language});
      continue;
    }
    const LineDiff diff = line_diff(r.buggy, r.fixed);
    auto tags = line_tags_from_diff(diff);
    if (std::find(tags.begin(), tags.end(), 1) == tags.end()) {
      ++corpus.counters.no_buggy_line;
      continue;
    }
    TripleExample ex;
    ex.buggy = r.buggy;
    ex.fixed = r.fixed;
    ex.message = verdict.cleaned;
    ex.language = r.language;
    ex.change_input = build_change_input(r.buggy, r.fixed);
    ex.line_tags = std::move(tags);
    corpus.examples.push_back(std::move(ex));
    ++corpus.counters.accepted;
  }
  std::unordered_set<std::string> seen;
  for (const auto& ex : corpus.examples) seen.insert(ex.fixed);
  for (auto& f : pool)
    if (seen.insert(f.code).second) corpus.monolingual_fixed.push_back(std::move(f));
  return corpus;
}

std::vector<std::string> lexical_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

CorpusSplit split_corpus(std::vector<TripleExample> examples, std::array<double, 3> ratios, std::uint64_t seed) {
  if (examples.empty()) throw InputError("cannot split an empty corpus");
  for (double r : ratios)
    if (r < 0.0) throw InputError("split ratios must be non-negative");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw InputError("split ratios must sum to 1");
  for (const auto& ex : examples)
    if (ex.pseudo) throw ContractError("pseudo (back-translated) examples may not enter the train/valid/test split");

  Rng rng = Rng::stream(seed, 0x5b1f);
  for (std::size_t i = examples.size(); i > 1; --i) std::swap(examples[i - 1], examples[rng.below(i)]);

  const std::size_t n = examples.size();
  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(n))));
  const auto n_valid =
      std::min(n - n_train, static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(n))));
  CorpusSplit split;
  auto begin = std::make_move_iterator(examples.begin());
  split.train.assign(begin, begin + static_cast<std::ptrdiff_t>(n_train));
  split.valid.assign(begin + static_cast<std::ptrdiff_t>(n_train),
                     begin + static_cast<std::ptrdiff_t>(n_train + n_valid));
  split.test.assign(begin + static_cast<std::ptrdiff_t>(n_train + n_valid), std::make_move_iterator(examples.end()));
  return split;
}

StatsReport corpus_stats(std::span<const TripleExample> examples) {
  struct Totals {
    std::size_t count = 0, tokens = 0, lines = 0, commit = 0;
  };
  StatsReport report;
  Totals all;
  std::map<std::string, Totals> by_language;
  for (const auto& ex : examples) {
    const std::size_t tokens = lexical_tokens(ex.buggy).size();
    const std::size_t lines = split_lines(ex.buggy).size();
    const std::size_t commit = lexical_tokens(ex.message).size();
    for (Totals* t : {&all, &by_language[ex.language]}) {
      ++t->count;
      t->tokens += tokens;
      t->lines += lines;
      t->commit += commit;
    }
    ++report.buggy_token_histogram[tokens];
    ++report.commit_token_histogram[commit];
    const auto first = std::find(ex.line_tags.begin(), ex.line_tags.end(), 1);
    if (first != ex.line_tags.end()) {
      ++report.first_buggy_line_histogram[static_cast<std::size_t>(first - ex.line_tags.begin()) + 1];
    }
  }
  auto finish = [](const Totals& t) {
    return LanguageStats{t.count, average(t.tokens, t.count), average(t.lines, t.count), average(t.commit, t.count)};
  };
  report.total = all.count;
  report.overall = finish(all);
  for (const auto& [lang, t] : by_language) report.per_language[lang] = finish(t);
  return report;
}

std::pair<CorpusSplit, StatsReport> split_and_stats(std::vector<TripleExample> examples,
                                                    std::array<double, 3> ratios, std::uint64_t seed) {
  StatsReport stats = corpus_stats(examples);
  return {split_corpus(std::move(examples), ratios, seed), std::move(stats)};
}

std::vector<CommitRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<CommitRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    try {
      const json j = json::parse(line);
      records.push_back({j.at("buggy").get<std::string>(), j.at("fixed").get<std::string>(),
                         j.at("message").get<std::string>(), j.at("language").get<std::string>()});
    } catch (const json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void write_records(const std::filesystem::path& path, std::span<const CommitRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : records) {
    json j = {{"buggy", r.buggy}, {"fixed", r.fixed}, {"message", r.message}, {"language", r.language}};
    out << j.dump() << '\n';
  }
}

void write_examples(const std::filesystem::path& path, std::span<const TripleExample> examples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& ex : examples) {
    json j = {{"buggy", ex.buggy},         {"fixed", ex.fixed},
              {"message", ex.message},     {"language", ex.language},
              {"line_tags", ex.line_tags}, {"change_input", ex.change_input},
              {"pseudo", ex.pseudo}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<TripleExample> read_examples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<TripleExample> examples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    try {
      const json j = json::parse(line);
      TripleExample ex;
      ex.buggy = j.at("buggy").get<std::string>();
      ex.fixed = j.at("fixed").get<std::string>();
      ex.message = j.value("message", "");
      ex.language = j.at("language").get<std::string>();
      ex.line_tags = j.value("line_tags", std::vector<int>{});
      ex.change_input = j.contains("change_input") ? j["change_input"].get<std::string>()
                                                   : build_change_input(ex.buggy, ex.fixed);
      ex.pseudo = j.value("pseudo", false);
      examples.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return examples;
}

void write_monolingual(const std::filesystem::path& path, std::span<const MonolingualSnippet> snippets) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& s : snippets) out << json{{"code", s.code}, {"language", s.language}}.dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<MonolingualSnippet> read_monolingual(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<MonolingualSnippet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    try {
      const json j = json::parse(line);
      out.push_back({j.at("code").get<std::string>(), j.at("language").get<std::string>()});
    } catch (const json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

namespace {
json stats_json(const LanguageStats& s) {
  return {{"count", s.count},
          {"avg_tokens_per_buggy", s.avg_tokens_per_buggy},
          {"avg_lines_per_buggy", s.avg_lines_per_buggy},
          {"avg_tokens_per_commit", s.avg_tokens_per_commit}};
}
}  // namespace

void write_stats_json(const std::filesystem::path& path, const StatsReport& stats, const CurationCounters* counters) {
  json j;
  j["total"] = stats.total;
  j["overall"] = stats_json(stats.overall);
  j["per_language"] = json::object();
  for (const auto& [lang, s] : stats.per_language) j["per_language"][lang] = stats_json(s);
  json hist = json::object();
  for (const auto& [k, v] : stats.first_buggy_line_histogram) hist[std::to_string(k)] = v;
  j["first_buggy_line_histogram"] = hist;
  if (counters) {
    j["curation"] = {{"raw", counters->raw},
                     {"empty_field", counters->empty_field},
                     {"message_length", counters->message_length},
                     {"message_repeated", counters->message_repeated},
                     {"no_repair_pattern", counters->no_repair_pattern},
                     {"no_lexical_overlap", counters->no_lexical_overlap},
                     {"no_buggy_line", counters->no_buggy_line},
                     {"accepted", counters->accepted}};
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_stats_csv(const std::filesystem::path& path, const StatsReport& stats) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "language,count,avg_tokens_per_buggy,avg_lines_per_buggy,avg_tokens_per_commit\n";
  char buffer[256];
  for (const auto& [lang, s] : stats.per_language) {
    std::snprintf(buffer, sizeof buffer, "%s,%zu,%.4f,%.4f,%.4f\n", lang.c_str(), s.count, s.avg_tokens_per_buggy,
                  s.avg_lines_per_buggy, s.avg_tokens_per_commit);
    out << buffer;
  }
}

void write_histogram_csv(const std::filesystem::path& path, const std::string& key_column,
                         const std::map<std::size_t, std::size_t>& histogram) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << key_column << ",count\n";
  for (const auto& [k, v] : histogram) out << k << ',' << v << '\n';
}

}  // namespace fixcommit
