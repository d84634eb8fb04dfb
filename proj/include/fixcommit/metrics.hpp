#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace fixcommit {

using Tokens = std::vector<std::string>;

/// Corpus-level BLEU-4 internals. Precisions for n >= 2 are smoothed by
/// adding one to both the clipped match count and the n-gram total; p1 is
/// unsmoothed, so a corpus without a single unigram match scores 0.
struct BleuStats {
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
  std::array<double, 4> precisions{};
  double brevity_penalty = 0.0;
  double score = 0.0;  // percentage
};

BleuStats bleu4_stats(std::span<const Tokens> candidates, std::span<const Tokens> references);
double bleu4(std::span<const Tokens> candidates, std::span<const Tokens> references);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);
/// F-measure of LCS precision and recall; beta = 1 is the harmonic mean.
/// Two empty sequences score 1.
double rouge_l_pair(std::span<const std::string> candidate, std::span<const std::string> reference, double beta = 1.0);
/// Mean pairwise ROUGE-L F, as a percentage.
double rouge_l(std::span<const Tokens> candidates, std::span<const Tokens> references, double beta = 1.0);

/// Percentage of candidates token-identical to their reference.
double exact_match(std::span<const Tokens> candidates, std::span<const Tokens> references);

using CorpusMetric = std::function<double(std::span<const Tokens>, std::span<const Tokens>)>;

struct BootstrapResult {
  double observed_delta = 0.0;  // metric(b) - metric(a) on the full corpus
  double ci_low = 0.0;          // 2.5th percentile of resampled deltas
  double ci_high = 0.0;         // 97.5th percentile
  double p_value = 0.0;         // fraction of resamples with delta <= 0
};

/// Paired bootstrap resampling of test items for two systems scored against
/// the same references.
BootstrapResult paired_bootstrap(std::span<const Tokens> system_a, std::span<const Tokens> system_b,
                                 std::span<const Tokens> references, const CorpusMetric& metric,
                                 std::size_t samples, std::uint64_t seed);

}  // namespace fixcommit
