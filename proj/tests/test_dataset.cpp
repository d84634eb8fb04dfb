#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "fixcommit/dataset.hpp"
#include "fixcommit/errors.hpp"
#include "fixcommit/random.hpp"

using namespace fixcommit;

namespace {

TripleExample make_example(std::string buggy, std::string fixed, std::string message, std::string language) {
  TripleExample ex;
  ex.buggy = std::move(buggy);
  ex.fixed = std::move(fixed);
  ex.message = std::move(message);
  ex.language = std::move(language);
  ex.line_tags = line_tags_from_diff(line_diff(ex.buggy, ex.fixed));
  ex.change_input = build_change_input(ex.buggy, ex.fixed);
  return ex;
}

std::vector<TripleExample> numbered(std::size_t n) {
  std::vector<TripleExample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_example("x" + std::to_string(i), "y", "fix it now", "java"));
  return out;
}

std::vector<std::string> buggy_texts(const std::vector<TripleExample>& v) {
  std::vector<std::string> out;
  for (const auto& e : v) out.push_back(e.buggy);
  return out;
}

}  // namespace

TEST_CASE("message filter") {
  const std::map<std::string, std::size_t> none;
  SUBCASE("too short") {
    const auto v = filter_message("fix npe", none);
    CHECK_FALSE(v.accepted);
    CHECK(v.reason == "length");
  }
  SUBCASE("too long") {
    std::string msg = "fix";
    for (int i = 0; i < 100; ++i) msg += " word";
    CHECK_FALSE(filter_message(msg, none).accepted);
  }
  SUBCASE("frequent message") {
    std::vector<CommitRecord> records(57, CommitRecord{"a", "b", "fix bug.", "java"});
    records.push_back(CommitRecord{"a", "b", "fix the bug properly", "java"});
    const auto freq = message_frequencies(records);
    CHECK(freq.at("fix bug.") == 57);
    CHECK_FALSE(filter_message("fix bug.", freq).accepted);
    std::map<std::string, std::size_t> many{{"fix bug in loop", 57}};
    const auto v = filter_message("Fix  bug in loop", many);
    CHECK_FALSE(v.accepted);
    CHECK(v.reason == "repeated");
    std::map<std::string, std::size_t> three{{"fix bug in loop", 3}};
    CHECK(filter_message("fix bug in loop", three).accepted);
  }
  SUBCASE("url removed before counting") {
    const auto v = filter_message("fix overflow in parse loop see http://x.y", none);
    CHECK(v.accepted);
    CHECK(v.cleaned == "fix overflow in parse loop see");
    CHECK(lexical_tokens(v.cleaned).size() == 6);
  }
  SUBCASE("url-only words do not count") {
    CHECK_FALSE(filter_message("fix http://a.b https://c.d", none).accepted);
  }
  SUBCASE("repair pattern") {
    CHECK(filter_message("Solved crash on startup", none).accepted);
    CHECK(filter_message("BUGFIX for the parser", none).accepted);
    const auto v = filter_message("update readme file", none);
    CHECK_FALSE(v.accepted);
    CHECK(v.reason == "no repair pattern");
  }
  SUBCASE("idempotent on cleaned output") {
    for (std::string m : {"fix overflow in parse loop see http://x.y", "fix   spacing  in  code", "Fix A www.q.org B"}) {
      const auto first = filter_message(m, none);
      const auto second = filter_message(first.cleaned, none);
      CHECK(second.accepted == first.accepted);
      CHECK(second.cleaned == first.cleaned);
    }
  }
}

TEST_CASE("lexical overlap filter") {
  const std::string buggy = "public int multiplication ( int a , int b ) {\n  return a * b ;\n}";
  const std::string fixed = "public float multiplication ( float a , float b ) {\n  return a * b ;\n}";
  CHECK(lexical_overlap_filter("fix multiplication return type", buggy, fixed));
  CHECK_FALSE(lexical_overlap_filter("the and of to", buggy, fixed));
  CHECK(lexical_overlap_filter("fix float", buggy, fixed));
  CHECK_FALSE(lexical_overlap_filter("fix float", buggy, buggy));
  // change ids and urls never count as overlap
  CHECK_FALSE(lexical_overlap_filter("fix see 1a2b3c4d", "x 1a2b3c4d", "y"));
  CHECK_FALSE(lexical_overlap_filter("fix http://multiplication.org", buggy, fixed));
  CHECK(message_content_tokens("Fix the Overflow!").size() == 2);
}

TEST_CASE("tagged buggy sequence") {
  const BpeModel bpe = BpeModel::learn(std::vector<std::string>{"int a ;\nint b ;\nreturn a ;"}, 10);
  SUBCASE("all unchanged") {
    const auto t = build_tagged_buggy("int a ;\nint b ;", line_diff("int a ;\nint b ;", "int a ;\nint b ;"), bpe);
    CHECK(t.line_tags == std::vector<int>{0, 0});
    CHECK(t.cls_positions.size() == 2);
  }
  SUBCASE("one buggy line of three") {
    const std::string buggy = "int a ;\nint b ;\nreturn a ;";
    const auto t = build_tagged_buggy(buggy, line_diff(buggy, "int a ;\nint c ;\nreturn a ;"), bpe, "java");
    CHECK(t.line_tags == std::vector<int>{0, 1, 0});
    CHECK(t.tokens[0] == bpe.language_id("java"));
    CHECK(t.tokens[1] == kClsId);
  }
  SUBCASE("mismatched diff") {
    CHECK_THROWS_AS(build_tagged_buggy("a", line_diff("b", "c"), bpe), ContractError);
  }
  SUBCASE("tag count equals line count") {
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
      std::vector<std::string> a, b;
      for (std::size_t k = rng.below(6); k > 0; --k) a.push_back(rng.below(2) ? "int a ;" : "return a ;");
      for (std::size_t k = rng.below(6); k > 0; --k) b.push_back(rng.below(2) ? "int b ;" : "return a ;");
      const std::string buggy = join_lines(a);
      const auto t = build_tagged_buggy(buggy, line_diff(buggy, join_lines(b)), bpe);
      CHECK(t.line_tags.size() == split_lines(buggy).size());
      CHECK(t.cls_positions.size() == t.line_tags.size());
    }
  }
}

TEST_CASE("change input") {
  CHECK(build_change_input("a\nb", "a\nb").empty());
  CHECK(build_change_input("int a ;\nreturn a ;", "int a ;\nreturn b ;") == "REMOVED: return a ; ADDED: return b ;");
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    std::vector<std::string> a, b;
    for (std::size_t k = rng.below(5); k > 0; --k) a.push_back(std::string(1 + rng.below(3), 'p'));
    for (std::size_t k = rng.below(5); k > 0; --k) b.push_back(std::string(1 + rng.below(3), 'p'));
    const LineDiff d = line_diff(join_lines(a), join_lines(b));
    std::size_t bound = 0;
    for (const auto& l : d.lines)
      if (l.marker != LineMarker::unchanged) bound += l.text.size() + kRemovedMarker.size() + 2;
    CHECK(build_change_input(join_lines(a), join_lines(b)).size() <= bound);
  }
}

TEST_CASE("curation") {
  std::vector<CommitRecord> records = {
      {"int f ( ) {\n  return 1 ;\n}", "int f ( ) {\n  return 2 ;\n}", "fix return value of f", "java"},
      {"a", "b", "fix npe", "java"},                                  // length
      {"x = 1", "x = 2", "update the value of x", "python"},          // no repair pattern
      {"x = 1", "x = 1\ny = 2", "fix missing assignment after x", "python"}, // no buggy line
      {"q = 1", "q = 3", "fix the wrong constant", "python"},         // no lexical overlap
      {"", "x", "fix empty buggy code", "java"},
  };
  const CuratedCorpus c = curate(records);
  CHECK(c.counters.raw == 6);
  CHECK(c.counters.accepted == 1);
  CHECK(c.counters.message_length == 1);
  CHECK(c.counters.no_repair_pattern == 1);
  CHECK(c.counters.no_buggy_line == 1);
  CHECK(c.counters.no_lexical_overlap == 1);
  CHECK(c.counters.empty_field == 1);
  REQUIRE(c.examples.size() == 1);
  CHECK(c.examples[0].line_tags == std::vector<int>{0, 1, 0});
  for (const auto& ex : c.examples) CHECK(std::count(ex.line_tags.begin(), ex.line_tags.end(), 1) >= 1);
  CHECK(c.monolingual_fixed ==
        std::vector<MonolingualSnippet>{{"b", "java"}, {"x = 2", "python"}, {"q = 3", "python"}});
  // determinism
  const CuratedCorpus again = curate(records);
  CHECK(again.examples[0].change_input == c.examples[0].change_input);
}

TEST_CASE("split sizes and determinism") {
  const auto split = split_corpus(numbered(10), {0.8, 0.1, 0.1}, 7);
  CHECK(split.train.size() == 8);
  CHECK(split.valid.size() == 1);
  CHECK(split.test.size() == 1);
  const auto again = split_corpus(numbered(10), {0.8, 0.1, 0.1}, 7);
  CHECK(buggy_texts(split.train) == buggy_texts(again.train));
  CHECK(buggy_texts(split.test) == buggy_texts(again.test));
  // every example appears exactly once
  auto all = buggy_texts(split.train);
  for (auto& s : buggy_texts(split.valid)) all.push_back(s);
  for (auto& s : buggy_texts(split.test)) all.push_back(s);
  std::sort(all.begin(), all.end());
  auto expected = buggy_texts(numbered(10));
  std::sort(expected.begin(), expected.end());
  CHECK(all == expected);

  CHECK_THROWS_AS(split_corpus({}, {0.8, 0.1, 0.1}, 1), InputError);
  CHECK_THROWS_AS(split_corpus(numbered(3), {0.5, 0.1, 0.1}, 1), InputError);
  auto with_pseudo = numbered(3);
  with_pseudo[1].pseudo = true;
  CHECK_THROWS_AS(split_corpus(with_pseudo, {0.8, 0.1, 0.1}, 1), ContractError);
}

TEST_CASE("statistics match hand arithmetic") {
  std::vector<TripleExample> ex = {
      make_example("a b\nc", "a b\nd", "fix c to d", "java"),            // 3 tokens, 2 lines, 4 words, first bug line 2
      make_example("p q r s", "p q", "fix p q r", "python"),             // 4 tokens, 1 line, 4 words, first bug line 1
      make_example("x\ny\nz\nw", "x\ny\nz\nv", "fix w", "java"),         // 4 tokens, 4 lines, 2 words, first bug line 4
  };
  const auto [split, stats] = split_and_stats(ex, {1.0, 0.0, 0.0}, 3);
  CHECK(split.train.size() == 3);
  CHECK(stats.total == 3);
  CHECK(stats.overall.avg_tokens_per_buggy == doctest::Approx(11.0 / 3.0));
  CHECK(stats.overall.avg_lines_per_buggy == doctest::Approx(7.0 / 3.0));
  CHECK(stats.overall.avg_tokens_per_commit == doctest::Approx(10.0 / 3.0));
  CHECK(stats.per_language.at("java").count == 2);
  CHECK(stats.per_language.at("java").avg_tokens_per_buggy == doctest::Approx(3.5));
  CHECK(stats.per_language.at("java").avg_lines_per_buggy == doctest::Approx(3.0));
  CHECK(stats.per_language.at("python").avg_tokens_per_commit == doctest::Approx(4.0));
  CHECK(stats.first_buggy_line_histogram == std::map<std::size_t, std::size_t>{{1, 1}, {2, 1}, {4, 1}});
  CHECK(stats.buggy_token_histogram == std::map<std::size_t, std::size_t>{{3, 1}, {4, 2}});
}

TEST_CASE("jsonl round trips") {
  const auto dir = std::filesystem::temp_directory_path() / "fixcommit_dataset_test";
  std::filesystem::create_directories(dir);
  const std::vector<CommitRecord> records = {{"a\n\"b\"", "c", "fix d e", "cpp"}, {"x", "y", "fix ü ñ", "java"}};
  write_records(dir / "r.jsonl", records);
  const auto back = read_records(dir / "r.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].buggy == records[0].buggy);
  CHECK(back[1].message == records[1].message);

  auto ex = numbered(2);
  ex[1].pseudo = true;
  write_examples(dir / "e.jsonl", ex);
  const auto ex_back = read_examples(dir / "e.jsonl");
  REQUIRE(ex_back.size() == 2);
  CHECK(ex_back[1].pseudo);
  CHECK(ex_back[0].line_tags == ex[0].line_tags);
  CHECK(ex_back[0].change_input == ex[0].change_input);
  CHECK_THROWS_AS(read_records(dir / "missing.jsonl"), IoError);
  std::filesystem::remove_all(dir);
}
