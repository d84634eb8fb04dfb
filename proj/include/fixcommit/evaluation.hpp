#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fixcommit/bpe.hpp"
#include "fixcommit/dataset.hpp"
#include "fixcommit/decoding.hpp"
#include "fixcommit/metrics.hpp"
#include "fixcommit/training.hpp"

namespace fixcommit {

struct TaskMetrics {
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double exact_match = 0.0;
  std::size_t count = 0;
};

/// Metrics of pairs whose reference has [lower, upper) lexical tokens
/// (upper == 0 means unbounded). Empty buckets are flagged and score 0.
struct BucketReport {
  std::size_t lower = 0;
  std::size_t upper = 0;
  bool empty = true;
  TaskMetrics metrics;
};

struct EvalReport {
  std::size_t samples = 0;
  std::optional<TaskMetrics> repair;
  std::optional<TaskMetrics> commit;
  std::optional<double> tag_accuracy;  // percentage of lines
  std::vector<BucketReport> repair_buckets;
  std::vector<BucketReport> commit_buckets;
};

struct Prediction {
  std::string fixed;
  std::optional<std::string> commit;
  std::vector<int> line_tags;
};

/// Code and messages are both scored on whitespace-separated tokens.
TaskMetrics score_texts(std::span<const std::string> candidates, std::span<const std::string> references,
                        double rouge_beta = 1.0);
std::vector<BucketReport> length_bucket_report(std::span<const std::string> candidates,
                                               std::span<const std::string> references,
                                               std::span<const std::size_t> bucket_edges, double rouge_beta = 1.0);

/// Scores predictions against the examples; commit metrics only when every
/// prediction carries a message.
EvalReport build_report(std::span<const TripleExample> examples, std::span<const Prediction> predictions,
                        std::span<const std::size_t> bucket_edges, double rouge_beta = 1.0);

/// Copy-the-input repair baseline, scored for repair metrics only.
EvalReport naive_baseline(std::span<const TripleExample> examples, std::span<const std::size_t> bucket_edges);

/// Inference for one encoded example. oracle_fixed feeds the gold fixed code
/// to the cascaded commit model instead of the predicted one.
Prediction predict(const TrainedSystem& system, const TripleExample& example, const BpeModel& bpe,
                   const DecodeStrategy& strategy = {}, bool oracle_fixed = false);
std::vector<Prediction> predict_all(const TrainedSystem& system, std::span<const TripleExample> examples,
                                    const BpeModel& bpe, const DecodeStrategy& strategy = {},
                                    bool oracle_fixed = false);

/// Teacher-forced argmax accuracy (fractions in [0, 1]) over all target
/// tokens including EOS, plus line-tag accuracy.
struct ForcedAccuracy {
  double fixed = 0.0;
  double commit = 0.0;
  double tags = 0.0;
};
ForcedAccuracy teacher_forced_accuracy(const Model& model, std::span<const TrainItem> items);

void write_report_json(const std::filesystem::path& path, const EvalReport& report);
/// task,bleu4,rouge_l,exact_match,count
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
/// task,lower,upper,count,empty,bleu4,rouge_l,exact_match
void write_buckets_csv(const std::filesystem::path& path, const EvalReport& report);
void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions);

}  // namespace fixcommit
