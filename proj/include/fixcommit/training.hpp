#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fixcommit/bpe.hpp"
#include "fixcommit/dataset.hpp"
#include "fixcommit/joint_model.hpp"

namespace fixcommit {

struct LossWeights {
  double fixed = 1.0;
  double commit = 1.0;
  double tag = 1.0;
  double kl = 1.0;
};

struct TrainConfig {
  double learning_rate = 3e-4;
  std::size_t batch_size = 4;
  double dropout = 0.1;
  std::size_t max_epochs = 30;
  std::size_t max_steps = 0;  // 0 = no step limit
  std::size_t early_stop_patience = 10;
  std::uint64_t seed = 1;
  LossWeights weights;

  void validate() const;
  std::string to_json() const;
  /// Missing fields keep their defaults; unknown fields are rejected.
  static TrainConfig from_json(std::string_view text);
};

struct LossBreakdown {
  double l_fixed = 0.0;
  double l_commit = 0.0;
  double l_tag = 0.0;
  double l_kl = 0.0;
  double total = 0.0;

  bool finite() const {
    return std::isfinite(l_fixed) && std::isfinite(l_commit) && std::isfinite(l_tag) && std::isfinite(l_kl) &&
           std::isfinite(total);
  }
};

/// One model input/output pair. Which fields are used depends on the
/// objective.
struct TrainItem {
  TokenIds source;          // encoder input
  TokenIds target;          // fixed-decoder target, without BOS/EOS
  TokenIds commit;          // commit-decoder target (joint objective)
  std::vector<int> line_tags;
  TokenIds teacher_source;  // B ++ [SEP] ++ C (distillation)
};

/// B -> F with line tags. A positive teacher_max_len also fills
/// teacher_source, truncating the message part to fit.
std::vector<TrainItem> repair_items(std::span<const TripleExample> examples, std::size_t teacher_max_len = 0);
/// g(B,F) -> C for the cascaded commit model.
std::vector<TrainItem> commit_items(std::span<const TripleExample> examples);
/// (B ++ [SEP] ++ C) -> F for the distillation teacher.
std::vector<TrainItem> teacher_items(std::span<const TripleExample> examples, std::size_t max_len);
/// F -> B (without "[CLS]" or language tag) for the back-translation model.
std::vector<TrainItem> back_items(std::span<const TripleExample> examples);
/// B -> (F, C) with line tags.
std::vector<TrainItem> joint_items(std::span<const TripleExample> examples);

// ---- losses ---------------------------------------------------------------
// Each loss is the mean over the batch of the per-item loss.

/// Teacher-forced cross-entropy over target tokens (plus EOS).
Tensor loss_code_repair(const Model& model, std::span<const TrainItem> batch, const ForwardMode& mode = {});

enum class CommitMode { cascaded, joint };
/// cascaded: seq2seq model over item.source = g(B,F), target item.target.
/// joint: joint model, commit tokens item.commit, teacher-forced on the gold
/// fixed tokens item.target.
Tensor loss_commit(const Model& model, std::span<const TrainItem> batch, CommitMode mode,
                   const ForwardMode& fmode = {});
/// Cross-entropy over the two tag classes at "[CLS]" rows, averaged over the
/// lines of each item.
Tensor loss_tagging(const Model& model, std::span<const TrainItem> batch, const ForwardMode& mode = {});
/// Token-level KL(teacher || student) over the fixed-decoder positions. The
/// teacher reads item.teacher_source and receives no gradient.
Tensor loss_kl_distill(const Model& teacher, const Model& student, std::span<const TrainItem> batch,
                       const ForwardMode& mode = {});

// ---- training loop ------------------------------------------------------------

/// repair: l_fixed (+ l_tag, + l_kl with a teacher); commit_cascaded: l_commit
/// through the single decoder; joint: l_fixed + l_commit + l_tag.
enum class Objective { repair, commit_cascaded, joint };

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  LossBreakdown loss;
  double learning_rate = 0.0;
};

struct TrainOptions {
  const Model* teacher = nullptr;
  /// Per-epoch resumable state; empty disables it.
  std::filesystem::path state_path;
  bool resume = false;
  std::function<void(const StepLog&)> on_step;
  /// Runs after the epoch state is saved (NaN loss without validation data).
  std::function<void(std::size_t epoch, double valid_loss)> on_epoch;
};

struct TrainReport {
  std::size_t steps = 0;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  double best_valid_loss = NAN;
  std::vector<double> valid_losses;
  bool early_stopped = false;
  bool resumed = false;
};

/// Loss of one item with the weighted total; zero-weight components are not
/// computed at all.
LossBreakdown item_loss(const Model& model, Objective objective, const TrainItem& item, const LossWeights& weights,
                        const ForwardMode& mode, const Model* teacher, Tensor* total_out);
/// Mean item loss in evaluation mode.
LossBreakdown evaluate_loss(const Model& model, Objective objective, std::span<const TrainItem> items,
                            const LossWeights& weights, const Model* teacher = nullptr);

/// Shuffled mini-batch Adam training with per-epoch validation, early
/// stopping on the validation total and restoration of the best weights.
TrainReport train_model(Model& model, Objective objective, std::span<const TrainItem> train,
                        std::span<const TrainItem> valid, const TrainConfig& config, const TrainOptions& options = {});

/// Seed used to initialize the model in a given role.
std::uint64_t role_seed(std::uint64_t seed, std::string_view role);

// ---- regimes ----------------------------------------------------------------------

enum class Regime { cascaded, teacher_student, multitask, backtranslation, joint };
std::string regime_name(Regime r);
Regime parse_regime(std::string_view name);

/// Trained models of one regime. Joint regime fills joint; every other
/// regime fills repair and commit.
struct TrainedSystem {
  Regime regime = Regime::joint;
  std::optional<Model> joint;
  std::optional<Model> repair;
  std::optional<Model> commit;
  std::optional<Model> teacher;
  std::optional<Model> back;
  std::vector<TripleExample> augmented;  // back-translation training set
};

struct RegimeData {
  std::vector<TripleExample> train;
  std::vector<TripleExample> valid;
  std::vector<MonolingualSnippet> monolingual;
  const BpeModel* bpe = nullptr;
  bool language_tags = false;
};

/// Hooks for the multi-stage regimes: every stage (model role) trains with
/// its own state file under state_dir when set.
struct RegimeOptions {
  std::filesystem::path state_dir;
  bool resume = false;
  std::function<void(std::string_view role, const StepLog&)> on_step;
  /// Called once a stage finishes; completed stages are reloaded on resume.
  std::function<void(std::string_view role, const Model&)> on_model;
  std::function<std::optional<Model>(std::string_view role)> load_model;
};

/// Trains a seq2seq model for a role with the matching objective.
Model train_role(std::string_view role, const ModelConfig& model_config, const TrainConfig& config,
                 Objective objective, std::span<const TrainItem> train, std::span<const TrainItem> valid,
                 const Model* teacher = nullptr, const RegimeOptions& options = {}, TrainReport* report = nullptr);

Model train_teacher(const ModelConfig& model_config, const TrainConfig& config, const RegimeData& data,
                    const RegimeOptions& options = {});
/// L_F + L_KL against a trained teacher; throws ContractError for an
/// untrained teacher or mismatched vocabularies.
Model train_teacher_student(const Model& teacher, const ModelConfig& student_config, const TrainConfig& config,
                            const RegimeData& data, const RegimeOptions& options = {});
/// L_F + L_T; throws InputError when examples lack line tags.
Model train_multitask(const ModelConfig& model_config, const TrainConfig& config, const RegimeData& data,
                      const RegimeOptions& options = {});
Model train_joint(const ModelConfig& model_config, const TrainConfig& config, const RegimeData& data,
                  const RegimeOptions& options = {});

/// Appends one pseudo example (B̂, F) per monolingual snippet, B̂ greedily
/// decoded by the back model. Pseudo examples are flagged and carry no
/// message.
std::vector<TripleExample> augment_with_back_model(const Model& back_model, std::span<const TripleExample> parallel,
                                                   std::span<const MonolingualSnippet> monolingual,
                                                   const BpeModel& bpe, bool language_tags);
/// Trains the F -> B model on the parallel data and augments. An empty
/// monolingual set returns the parallel data unchanged without training.
std::vector<TripleExample> backtranslate_augment(const ModelConfig& back_config, const TrainConfig& config,
                                                 std::span<const TripleExample> parallel,
                                                 std::span<const MonolingualSnippet> monolingual,
                                                 const BpeModel& bpe, bool language_tags,
                                                 const RegimeOptions& options = {},
                                                 std::optional<Model>* back_model_out = nullptr);

/// Full regime: cascaded, teacher_student and multitask differ only in the
/// repair model objective; backtranslation trains repair on the augmented
/// set; joint trains the single joint model.
TrainedSystem train_regime(Regime regime, const ModelConfig& model_config, const TrainConfig& config,
                           const RegimeData& data, const RegimeOptions& options = {});

}  // namespace fixcommit
