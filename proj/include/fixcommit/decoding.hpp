#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fixcommit/bpe.hpp"

namespace fixcommit {

/// Log-probabilities of the next token given the tokens generated so far.
using StepFunction = std::function<std::vector<double>(std::span<const TokenId> prefix)>;

std::vector<double> log_softmax(std::span<const double> logits);

/// Argmax decoding; ties go to the smallest token id. Stops after eos (not
/// included in the result) or after max_tokens tokens.
TokenIds greedy_decode(const StepFunction& step, std::size_t max_tokens, TokenId eos);

/// Beam search ranking hypotheses by summed log-probability. Candidates with
/// equal score are ordered by their last-step log-probability, then by token
/// id, so width 1 reproduces greedy_decode exactly.
TokenIds beam_decode(const StepFunction& step, std::size_t width, std::size_t max_tokens, TokenId eos);

struct DecodeStrategy {
  std::size_t beam_width = 1;  // 1 = greedy

  static DecodeStrategy greedy() { return {}; }
  static DecodeStrategy beam(std::size_t width) { return {width}; }
};

TokenIds decode_sequence(const StepFunction& step, const DecodeStrategy& strategy, std::size_t max_tokens,
                         TokenId eos);

}  // namespace fixcommit
