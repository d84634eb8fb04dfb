#include "fixcommit/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fixcommit/errors.hpp"

namespace fixcommit {

std::vector<double> log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("log_softmax of an empty row");
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - top);
  const double log_total = std::log(total) + top;
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_total;
  return out;
}

TokenIds greedy_decode(const StepFunction& step, std::size_t max_tokens, TokenId eos) {
  TokenIds out;
  while (out.size() < max_tokens) {
    const auto scores = step(out);
    const auto best = static_cast<TokenId>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    if (best == eos) break;
    out.push_back(best);
  }
  return out;
}

namespace {

struct Hypothesis {
  TokenIds tokens;
  double score = 0.0;
};

struct Candidate {
  std::size_t parent;
  TokenId token;
  double last;
  double score;
};

}  // namespace

TokenIds beam_decode(const StepFunction& step, std::size_t width, std::size_t max_tokens, TokenId eos) {
  if (width == 0) throw ContractError("beam width must be positive");
  std::vector<Hypothesis> alive = {Hypothesis{}};
  std::vector<Hypothesis> finished;
  while (!alive.empty()) {
    if (alive.front().tokens.size() >= max_tokens) {
      for (auto& h : alive) finished.push_back(std::move(h));
      break;
    }
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < alive.size(); ++p) {
      const auto scores = step(alive[p].tokens);
      for (std::size_t t = 0; t < scores.size(); ++t) {
        candidates.push_back({p, static_cast<TokenId>(t), scores[t], alive[p].score + scores[t]});
      }
    }
    const std::size_t keep = std::min(width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        if (a.last != b.last) return a.last > b.last;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = candidates[i];
      Hypothesis h{alive[c.parent].tokens, c.score};
      if (c.token == eos) {
        finished.push_back(std::move(h));
      } else {
        h.tokens.push_back(c.token);
        next.push_back(std::move(h));
      }
    }
    alive = std::move(next);
    if (!alive.empty() && !finished.empty()) {
      double best_finished = -std::numeric_limits<double>::infinity();
      for (const auto& f : finished) best_finished = std::max(best_finished, f.score);
      // log-probabilities are non-positive, so alive scores can only drop
      if (best_finished >= alive.front().score) break;
    }
  }
  const auto best = std::max_element(finished.begin(), finished.end(),
                                     [](const Hypothesis& a, const Hypothesis& b) { return a.score < b.score; });
  return best->tokens;
}

TokenIds decode_sequence(const StepFunction& step, const DecodeStrategy& strategy, std::size_t max_tokens,
                         TokenId eos) {
  if (strategy.beam_width <= 1) return greedy_decode(step, max_tokens, eos);
  return beam_decode(step, strategy.beam_width, max_tokens, eos);
}

}  // namespace fixcommit
