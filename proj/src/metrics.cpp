#include "fixcommit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fixcommit/errors.hpp"
#include "fixcommit/random.hpp"

namespace fixcommit {

namespace {

void require_pairs(std::size_t candidates, std::size_t references, const char* metric) {
  if (candidates != references) {
    throw InputError(std::string(metric) + ": " + std::to_string(candidates) + " candidates for " +
                     std::to_string(references) + " references");
  }
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(const Tokens& tokens, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[Tokens(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

}  // namespace

BleuStats bleu4_stats(std::span<const Tokens> candidates, std::span<const Tokens> references) {
  require_pairs(candidates.size(), references.size(), "bleu4");
  BleuStats s;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    s.candidate_length += candidates[k].size();
    s.reference_length += references[k].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto cand = ngram_counts(candidates[k], n);
      const auto ref = ngram_counts(references[k], n);
      for (const auto& [gram, count] : cand) {
        s.totals[n - 1] += count;
        const auto it = ref.find(gram);
        if (it != ref.end()) s.matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  if (s.candidate_length == 0 || s.matches[0] == 0) return s;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    const double smooth = n == 0 ? 0.0 : 1.0;
    s.precisions[n] = (static_cast<double>(s.matches[n]) + smooth) / (static_cast<double>(s.totals[n]) + smooth);
    log_sum += std::log(s.precisions[n]);
  }
  const double c = static_cast<double>(s.candidate_length), r = static_cast<double>(s.reference_length);
  s.brevity_penalty = c > r ? 1.0 : std::exp(1.0 - r / c);
  s.score = 100.0 * s.brevity_penalty * std::exp(log_sum / 4.0);
  return s;
}

double bleu4(std::span<const Tokens> candidates, std::span<const Tokens> references) {
  return bleu4_stats(candidates, references).score;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_pair(std::span<const std::string> candidate, std::span<const std::string> reference, double beta) {
  if (candidate.empty() && reference.empty()) return 1.0;
  const std::size_t lcs = lcs_length(candidate, reference);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(candidate.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(reference.size());
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

double rouge_l(std::span<const Tokens> candidates, std::span<const Tokens> references, double beta) {
  require_pairs(candidates.size(), references.size(), "rouge_l");
  if (candidates.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < candidates.size(); ++k) total += rouge_l_pair(candidates[k], references[k], beta);
  return 100.0 * total / static_cast<double>(candidates.size());
}

double exact_match(std::span<const Tokens> candidates, std::span<const Tokens> references) {
  require_pairs(candidates.size(), references.size(), "exact_match");
  if (candidates.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < candidates.size(); ++k) hits += candidates[k] == references[k];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(candidates.size());
}

BootstrapResult paired_bootstrap(std::span<const Tokens> system_a, std::span<const Tokens> system_b,
                                 std::span<const Tokens> references, const CorpusMetric& metric,
                                 std::size_t samples, std::uint64_t seed) {
  require_pairs(system_a.size(), references.size(), "paired_bootstrap");
  require_pairs(system_b.size(), references.size(), "paired_bootstrap");
  if (references.empty() || samples == 0) throw InputError("paired_bootstrap needs items and samples");
  BootstrapResult result;
  result.observed_delta = metric(system_b, references) - metric(system_a, references);
  Rng rng(seed);
  const std::size_t n = references.size();
  std::vector<double> deltas;
  std::vector<Tokens> a(n), b(n), r(n);
  std::size_t not_better = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = rng.below(n);
      a[i] = system_a[k];
      b[i] = system_b[k];
      r[i] = references[k];
    }
    const double d = metric(b, r) - metric(a, r);
    deltas.push_back(d);
    not_better += d <= 0.0;
  }
  std::sort(deltas.begin(), deltas.end());
  const auto pick = [&](double q) {
    return deltas[std::min(deltas.size() - 1, static_cast<std::size_t>(q * static_cast<double>(deltas.size())))];
  };
  result.ci_low = pick(0.025);
  result.ci_high = pick(0.975);
  result.p_value = static_cast<double>(not_better) / static_cast<double>(samples);
  return result;
}

}  // namespace fixcommit
