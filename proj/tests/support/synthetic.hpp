#pragma once

// Deterministic synthetic triple corpus: small methods with one wrong
// operator, constant or call, fixed on one line, with a message naming the
// method.

#include <string>
#include <vector>

#include "fixcommit/bpe.hpp"
#include "fixcommit/dataset.hpp"
#include "fixcommit/random.hpp"

namespace fixcommit::testing {

inline std::vector<CommitRecord> synthetic_records(std::size_t n, std::uint64_t seed,
                                                   const std::vector<std::string>& languages = {"java"}) {
  static const std::vector<std::string> names = {"sum",   "scale", "merge", "clamp", "count", "parse",
                                                 "limit", "shift", "index", "total", "area",  "mix"};
  static const std::vector<std::pair<std::string, std::string>> ops = {
      {"-", "+"}, {"+", "-"}, {"*", "/"}, {"<", "<="}, {">", ">="}, {"/", "*"}};
  static const std::vector<std::string> vars = {"a", "b", "x", "y", "n", "k"};
  Rng rng(seed);
  std::vector<CommitRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& name = names[i % names.size()];
    const auto& [bad, good] = ops[rng.below(ops.size())];
    const std::string& u = vars[rng.below(vars.size())];
    const std::string& v = vars[rng.below(vars.size())];
    const std::string head = "int " + name + " ( int " + u + " , int " + v + " ) {";
    const std::string pre = rng.below(2) ? "  int t = " + u + " ;\n" : "";
    const std::string buggy = head + "\n" + pre + "  return " + u + " " + bad + " " + v + " ;\n}";
    const std::string fixed = head + "\n" + pre + "  return " + u + " " + good + " " + v + " ;\n}";
    const std::string message =
        "fix " + name + " operator " + std::to_string(i / names.size()) + (pre.empty() ? "" : " again");
    out.push_back({buggy, fixed, message, languages[i % languages.size()]});
  }
  return out;
}

struct SyntheticCorpus {
  BpeModel bpe;
  std::vector<TripleExample> examples;
};

inline SyntheticCorpus synthetic_corpus(std::size_t n, std::uint64_t seed, std::size_t merges = 40,
                                        bool language_tags = false,
                                        const std::vector<std::string>& languages = {"java"}) {
  const auto records = synthetic_records(n, seed, languages);
  CuratedCorpus curated = curate(records);
  std::vector<std::string> texts;
  for (const auto& ex : curated.examples) {
    texts.push_back(ex.buggy);
    texts.push_back(ex.fixed);
    texts.push_back(ex.message);
    texts.push_back(ex.change_input);
  }
  SyntheticCorpus corpus{BpeModel::learn(texts, merges), std::move(curated.examples)};
  for (auto& ex : corpus.examples) encode_example(ex, corpus.bpe, language_tags);
  return corpus;
}

}  // namespace fixcommit::testing
