#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fixcommit/bpe.hpp"
#include "fixcommit/line_diff.hpp"

namespace fixcommit {

/// One raw (buggy, fixed, message, language) record at method granularity.
struct CommitRecord {
  std::string buggy;
  std::string fixed;
  std::string message;
  std::string language;
};

/// Curated sample. Texts are kept alongside token ids so metrics can score
/// pre-BPE lexical tokens; token fields are filled by encode_example.
struct TripleExample {
  std::string buggy;
  std::string fixed;
  std::string message;
  std::string language;
  std::string change_input;   // g(B, F), see build_change_input
  std::vector<int> line_tags;  // one per buggy line, 1 = line removed by the fix
  bool pseudo = false;         // produced by back-translation; training-only

  TokenIds buggy_tokens;  // optional language tag, then "[CLS]"-prefixed lines
  TokenIds fixed_tokens;
  TokenIds message_tokens;
  TokenIds change_tokens;
};

// ---- message filtering --------------------------------------------------

inline constexpr std::size_t kMinMessageWords = 3;
inline constexpr std::size_t kMaxMessageWords = 100;
inline constexpr std::size_t kMaxMessageRepeats = 3;

std::string strip_urls(std::string_view text);
/// Lowercased, whitespace-collapsed form used as the frequency key.
std::string message_key(std::string_view message);
std::map<std::string, std::size_t> message_frequencies(std::span<const CommitRecord> records);

struct MessageVerdict {
  bool accepted = false;
  std::string cleaned;  // URLs removed, whitespace collapsed
  std::string reason;   // empty when accepted
};

/// Length bounds are checked after URL removal; the repeat count uses the raw
/// message.
MessageVerdict filter_message(std::string_view message, const std::map<std::string, std::size_t>& corpus_frequency);

// ---- lexical overlap ----------------------------------------------------

/// Built-in English stop-word list used by the overlap filter.
const std::vector<std::string>& stop_words();
/// Lowercased identifier/number runs ([A-Za-z0-9_]+).
std::vector<std::string> word_tokens(std::string_view text);
/// Message tokens left after removing URLs, punctuation, stop words and
/// change ids (hex hashes of 7+ characters).
std::vector<std::string> message_content_tokens(std::string_view message);
bool lexical_overlap_filter(std::string_view message, std::string_view buggy, std::string_view fixed);

// ---- tagging and change input ----------------------------------------------

/// Buggy text with "[CLS] " at the start of every line.
std::string tagged_buggy_text(std::string_view buggy);

struct TaggedBuggy {
  TokenIds tokens;
  std::vector<int> line_tags;
  std::vector<std::size_t> cls_positions;
};

/// Tags every buggy line (1 iff BUGGY_ONLY) and encodes the "[CLS]"-prefixed
/// text. The diff must reconstruct this buggy text.
TaggedBuggy build_tagged_buggy(std::string_view buggy, const LineDiff& diff, const BpeModel& bpe,
                               std::optional<std::string_view> language = std::nullopt);
std::vector<int> line_tags_from_diff(const LineDiff& diff);

inline constexpr std::string_view kRemovedMarker = "REMOVED:";
inline constexpr std::string_view kAddedMarker = "ADDED:";

/// Changed lines only, each prefixed by its direction marker, in diff order,
/// separated by single spaces.
std::string build_change_input(std::string_view buggy, std::string_view fixed);

std::vector<std::size_t> cls_positions(std::span<const TokenId> tokens);

/// Fills the token fields. With language_tags the buggy sequence (and the
/// change input) start with the language tag.
void encode_example(TripleExample& example, const BpeModel& bpe, bool language_tags);

// ---- curation ----------------------------------------------------------------

struct CurationCounters {
  std::size_t raw = 0;
  std::size_t empty_field = 0;
  std::size_t message_length = 0;
  std::size_t message_repeated = 0;
  std::size_t no_repair_pattern = 0;
  std::size_t no_lexical_overlap = 0;
  std::size_t no_buggy_line = 0;
  std::size_t accepted = 0;
};

/// Fixed-side code without a usable message.
struct MonolingualSnippet {
  std::string code;
  std::string language;
  bool operator==(const MonolingualSnippet&) const = default;
};

struct CuratedCorpus {
  std::vector<TripleExample> examples;
  /// Fixed code of records dropped only for their message: a held-out pool
  /// for back-translation that never overlaps the triples.
  std::vector<MonolingualSnippet> monolingual_fixed;
  CurationCounters counters;
};

CuratedCorpus curate(std::span<const CommitRecord> records);

// ---- splitting and statistics --------------------------------------------------

struct CorpusSplit {
  std::vector<TripleExample> train;
  std::vector<TripleExample> valid;
  std::vector<TripleExample> test;
};

struct LanguageStats {
  std::size_t count = 0;
  double avg_tokens_per_buggy = 0.0;
  double avg_lines_per_buggy = 0.0;
  double avg_tokens_per_commit = 0.0;
};

struct StatsReport {
  std::size_t total = 0;
  LanguageStats overall;
  std::map<std::string, LanguageStats> per_language;
  /// 1-based index of the first tagged buggy line -> number of examples.
  std::map<std::size_t, std::size_t> first_buggy_line_histogram;
  std::map<std::size_t, std::size_t> buggy_token_histogram;   // lexical tokens -> count
  std::map<std::size_t, std::size_t> commit_token_histogram;  // lexical tokens -> count
};

/// Whitespace-separated tokens; the unit for statistics and code metrics.
std::vector<std::string> lexical_tokens(std::string_view text);

/// Seeded Fisher-Yates shuffle, then contiguous train/valid/test slices.
/// Pseudo examples are rejected so they can never reach valid/test.
CorpusSplit split_corpus(std::vector<TripleExample> examples, std::array<double, 3> ratios, std::uint64_t seed);
StatsReport corpus_stats(std::span<const TripleExample> examples);
std::pair<CorpusSplit, StatsReport> split_and_stats(std::vector<TripleExample> examples,
                                                    std::array<double, 3> ratios, std::uint64_t seed);

// ---- file formats ----------------------------------------------------------------

/// JSON lines with fields buggy, fixed, message, language.
std::vector<CommitRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, std::span<const CommitRecord> records);
/// Record fields plus line_tags, change_input and pseudo.
void write_examples(const std::filesystem::path& path, std::span<const TripleExample> examples);
std::vector<TripleExample> read_examples(const std::filesystem::path& path);
/// JSON lines with fields code, language.
void write_monolingual(const std::filesystem::path& path, std::span<const MonolingualSnippet> snippets);
std::vector<MonolingualSnippet> read_monolingual(const std::filesystem::path& path);

void write_stats_json(const std::filesystem::path& path, const StatsReport& stats, const CurationCounters* counters);
/// One "language,count,avg_tokens_per_buggy,..." row per language.
void write_stats_csv(const std::filesystem::path& path, const StatsReport& stats);
void write_histogram_csv(const std::filesystem::path& path, const std::string& key_column,
                         const std::map<std::size_t, std::size_t>& histogram);

}  // namespace fixcommit
