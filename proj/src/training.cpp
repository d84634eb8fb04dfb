#include "fixcommit/training.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <sstream>

#include "fixcommit/errors.hpp"
#include "fixcommit/ops.hpp"
#include "fixcommit/optimizer.hpp"

namespace fixcommit {

using nlohmann::json;

// ---- config ----------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ContractError("learning_rate must be non-negative");
  if (batch_size == 0) throw ContractError("batch_size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("dropout must lie in [0, 1)");
  if (early_stop_patience < 1) throw ContractError("early_stop_patience must be at least 1");
  for (double w : {weights.fixed, weights.commit, weights.tag, weights.kl}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ContractError("loss weights must be finite and non-negative");
  }
}

std::string TrainConfig::to_json() const {
  json j = {{"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"dropout", dropout},
            {"max_epochs", max_epochs},
            {"max_steps", max_steps},
            {"early_stop_patience", early_stop_patience},
            {"seed", seed},
            {"loss_weights",
             {{"fixed", weights.fixed}, {"commit", weights.commit}, {"tag", weights.tag}, {"kl", weights.kl}}}};
  return j.dump();
}

TrainConfig TrainConfig::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("train config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw InputError("train config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
      else if (key == "max_steps") c.max_steps = value.get<std::size_t>();
      else if (key == "early_stop_patience") c.early_stop_patience = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "loss_weights") {
        for (const auto& [wk, wv] : value.items()) {
          if (wk == "fixed") c.weights.fixed = wv.get<double>();
          else if (wk == "commit") c.weights.commit = wv.get<double>();
          else if (wk == "tag") c.weights.tag = wv.get<double>();
          else if (wk == "kl") c.weights.kl = wv.get<double>();
          else throw InputError("unknown loss weight: " + wk);
        }
      } else {
        throw InputError("unknown train config field: " + key);
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("bad train config field: ") + e.what());
  }
  return c;
}

// ---- items -------------------------------------------------------------------------

namespace {

void require_tokens(const TripleExample& ex) {
  if (ex.buggy_tokens.empty() || ex.fixed_tokens.empty()) {
    throw InputError("example is not encoded; run encode_example first");
  }
}

TokenIds strip_tagging(const TokenIds& buggy_tokens) {
  TokenIds out;
  const std::size_t start = !buggy_tokens.empty() && buggy_tokens[0] != kClsId ? 1 : 0;
  for (std::size_t i = start; i < buggy_tokens.size(); ++i)
    if (buggy_tokens[i] != kClsId) out.push_back(buggy_tokens[i]);
  return out;
}

TokenIds teacher_source_for(const TripleExample& ex, std::size_t max_len) {
  TokenIds src = ex.buggy_tokens;
  src.push_back(kSepId);
  const std::size_t room = max_len > src.size() ? max_len - src.size() : 0;
  src.insert(src.end(), ex.message_tokens.begin(),
             ex.message_tokens.begin() + static_cast<std::ptrdiff_t>(std::min(room, ex.message_tokens.size())));
  if (src.size() > max_len) src.resize(max_len);
  return src;
}

}  // namespace

std::vector<TrainItem> repair_items(std::span<const TripleExample> examples, std::size_t teacher_max_len) {
  std::vector<TrainItem> items;
  for (const auto& ex : examples) {
    require_tokens(ex);
    TrainItem item;
    item.source = ex.buggy_tokens;
    item.target = ex.fixed_tokens;
    item.line_tags = ex.line_tags;
    if (teacher_max_len) item.teacher_source = teacher_source_for(ex, teacher_max_len);
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<TrainItem> commit_items(std::span<const TripleExample> examples) {
  std::vector<TrainItem> items;
  for (const auto& ex : examples) {
    if (ex.pseudo) continue;
    if (ex.change_tokens.empty()) throw InputError("example has no change input for the cascaded commit model");
    if (ex.message_tokens.empty()) throw InputError("example has no commit message tokens");
    items.push_back({ex.change_tokens, ex.message_tokens, {}, {}, {}});
  }
  return items;
}

std::vector<TrainItem> teacher_items(std::span<const TripleExample> examples, std::size_t max_len) {
  std::vector<TrainItem> items;
  for (const auto& ex : examples) {
    if (ex.pseudo) continue;
    require_tokens(ex);
    items.push_back({teacher_source_for(ex, max_len), ex.fixed_tokens, {}, {}, {}});
  }
  return items;
}

std::vector<TrainItem> back_items(std::span<const TripleExample> examples) {
  std::vector<TrainItem> items;
  for (const auto& ex : examples) {
    require_tokens(ex);
    TokenIds target = strip_tagging(ex.buggy_tokens);
    if (target.empty()) continue;
    items.push_back({ex.fixed_tokens, std::move(target), {}, {}, {}});
  }
  return items;
}

std::vector<TrainItem> joint_items(std::span<const TripleExample> examples) {
  std::vector<TrainItem> items;
  for (const auto& ex : examples) {
    require_tokens(ex);
    if (ex.message_tokens.empty()) throw InputError("joint training needs commit message tokens");
    items.push_back({ex.buggy_tokens, ex.fixed_tokens, ex.message_tokens, ex.line_tags, {}});
  }
  return items;
}

// ---- losses ---------------------------------------------------------------------------

namespace {

Tensor fixed_cross_entropy(const FixedDecoding& dec, const TeacherForcing& tf) {
  return cross_entropy(dec.logits, tf.labels, kPadId);
}

Tensor tagging_cross_entropy(const Model& model, const Tensor& z_b, const TrainItem& item) {
  const auto cls = cls_positions(item.source);
  if (item.line_tags.empty()) throw InputError("tagging loss needs line tags");
  if (cls.size() != item.line_tags.size()) {
    throw ContractError("line tags (" + std::to_string(item.line_tags.size()) + ") do not match [CLS] count (" +
                        std::to_string(cls.size()) + ")");
  }
  std::vector<std::int32_t> targets(item.line_tags.begin(), item.line_tags.end());
  return cross_entropy(model.tag_logits(z_b, cls), targets, -1);
}

Tensor teacher_probabilities(const Model& teacher, const TrainItem& item, const TeacherForcing& tf) {
  if (item.teacher_source.empty()) throw InputError("distillation needs the teacher source (B ++ [SEP] ++ C)");
  NoGradGuard no_grad;
  const Tensor z = teacher.encode_buggy(item.teacher_source);
  return softmax_rows(teacher.decode_fixed(z, tf.input, {}, item.teacher_source).logits);
}

void check_distill_pair(const Model& teacher, const Model& student) {
  if (teacher.config().vocab_size != student.config().vocab_size) {
    throw ContractError("teacher and student vocabularies differ (" + std::to_string(teacher.config().vocab_size) +
                        " vs " + std::to_string(student.config().vocab_size) + ")");
  }
}

Tensor batch_mean(std::span<const TrainItem> batch, const std::function<Tensor(const TrainItem&)>& per_item) {
  if (batch.empty()) throw InputError("empty batch");
  Tensor total;
  for (const auto& item : batch) {
    Tensor l = per_item(item);
    total = total.defined() ? add(total, l) : l;
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

}  // namespace

Tensor loss_code_repair(const Model& model, std::span<const TrainItem> batch, const ForwardMode& mode) {
  return batch_mean(batch, [&](const TrainItem& item) {
    const Tensor z_b = model.encode_buggy(item.source, mode);
    const auto tf = teacher_forcing(item.target);
    return fixed_cross_entropy(model.decode_fixed(z_b, tf.input, mode, item.source), tf);
  });
}

Tensor loss_commit(const Model& model, std::span<const TrainItem> batch, CommitMode mode, const ForwardMode& fmode) {
  return batch_mean(batch, [&](const TrainItem& item) {
    if (mode == CommitMode::cascaded) {
      if (item.source.empty()) throw InputError("cascaded commit loss needs the change input g(B,F)");
      const Tensor z = model.encode_buggy(item.source, fmode);
      const auto tf = teacher_forcing(item.target);
      return cross_entropy(model.decode_fixed(z, tf.input, fmode, item.source).logits, tf.labels, kPadId);
    }
    if (model.config().architecture != Architecture::joint) throw ContractError("joint commit loss needs a joint model");
    if (item.target.empty()) throw ContractError("joint commit loss is teacher-forced on the gold fixed code");
    const Tensor z_b = model.encode_buggy(item.source, fmode);
    const Tensor z_f = model.decode_fixed(z_b, teacher_forcing(item.target).input, fmode, item.source).hidden;
    const auto tc = teacher_forcing(item.commit);
    return cross_entropy(model.decode_commit(z_b, z_f, tc.input, fmode), tc.labels, kPadId);
  });
}

Tensor loss_tagging(const Model& model, std::span<const TrainItem> batch, const ForwardMode& mode) {
  return batch_mean(batch, [&](const TrainItem& item) {
    return tagging_cross_entropy(model, model.encode_buggy(item.source, mode), item);
  });
}

Tensor loss_kl_distill(const Model& teacher, const Model& student, std::span<const TrainItem> batch,
                       const ForwardMode& mode) {
  check_distill_pair(teacher, student);
  return batch_mean(batch, [&](const TrainItem& item) {
    const auto tf = teacher_forcing(item.target);
    const Tensor q = teacher_probabilities(teacher, item, tf);
    const Tensor z_b = student.encode_buggy(item.source, mode);
    const Tensor logits = student.decode_fixed(z_b, tf.input, mode, item.source).logits;
    const std::vector<std::uint8_t> keep(tf.input.size(), 1);
    return kl_divergence(q, logits, keep);
  });
}

LossBreakdown item_loss(const Model& model, Objective objective, const TrainItem& item, const LossWeights& w,
                        const ForwardMode& mode, const Model* teacher, Tensor* total_out) {
  LossBreakdown out;
  Tensor total;
  const auto accumulate = [&](double weight, const Tensor& part, double& slot) {
    slot = part.item();
    const Tensor weighted = weight == 1.0 ? part : scale(part, weight);
    total = total.defined() ? add(total, weighted) : weighted;
  };

  if (objective == Objective::commit_cascaded) {
    if (w.commit > 0.0) {
      if (item.source.empty()) throw InputError("cascaded commit training needs the change input g(B,F)");
      const Tensor z = model.encode_buggy(item.source, mode);
      const auto tf = teacher_forcing(item.target);
      accumulate(w.commit, cross_entropy(model.decode_fixed(z, tf.input, mode, item.source).logits, tf.labels, kPadId),
                 out.l_commit);
    }
  } else {
    const bool need_fixed = w.fixed > 0.0 || w.kl > 0.0 || (objective == Objective::joint && w.commit > 0.0);
    const bool need_tag = w.tag > 0.0;
    if (need_fixed || need_tag) {
      const Tensor z_b = model.encode_buggy(item.source, mode);
      const auto tf = teacher_forcing(item.target);
      FixedDecoding dec;
      if (need_fixed) dec = model.decode_fixed(z_b, tf.input, mode, item.source);
      if (w.fixed > 0.0) accumulate(w.fixed, fixed_cross_entropy(dec, tf), out.l_fixed);
      if (objective == Objective::joint && w.commit > 0.0) {
        const auto tc = teacher_forcing(item.commit);
        accumulate(w.commit, cross_entropy(model.decode_commit(z_b, dec.hidden, tc.input, mode), tc.labels, kPadId),
                   out.l_commit);
      }
      if (need_tag) accumulate(w.tag, tagging_cross_entropy(model, z_b, item), out.l_tag);
      if (objective == Objective::repair && w.kl > 0.0) {
        if (teacher == nullptr) throw ContractError("distillation weight set without a teacher model");
        check_distill_pair(*teacher, model);
        const std::vector<std::uint8_t> keep(tf.input.size(), 1);
        accumulate(w.kl, kl_divergence(teacher_probabilities(*teacher, item, tf), dec.logits, keep), out.l_kl);
      }
    }
  }
  out.total = total.defined() ? total.item() : 0.0;
  if (total_out) *total_out = total;
  return out;
}

LossBreakdown evaluate_loss(const Model& model, Objective objective, std::span<const TrainItem> items,
                            const LossWeights& weights, const Model* teacher) {
  NoGradGuard no_grad;
  LossBreakdown mean;
  for (const auto& item : items) {
    const LossBreakdown l = item_loss(model, objective, item, weights, {}, teacher, nullptr);
    mean.l_fixed += l.l_fixed;
    mean.l_commit += l.l_commit;
    mean.l_tag += l.l_tag;
    mean.l_kl += l.l_kl;
    mean.total += l.total;
  }
  if (!items.empty()) {
    const double n = static_cast<double>(items.size());
    for (double* v : {&mean.l_fixed, &mean.l_commit, &mean.l_tag, &mean.l_kl, &mean.total}) *v /= n;
  }
  return mean;
}

// ---- loop ------------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kShuffleStream = 0x5107;
constexpr std::uint64_t kDropoutStream = 0xd209;

std::string hex(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%a", v);
  return buffer;
}

double unhex(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

struct LoopState {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::size_t best_epoch = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;
  bool finished = false;
  bool early_stopped = false;
  std::vector<double> valid_losses;
};

void save_state(const std::filesystem::path& path, const Model& model, const Adam& adam, const Rng& shuffle,
                const Rng& drop, const LoopState& s, const ParameterSet* best) {
  TensorFile file;
  file.meta["epoch"] = std::to_string(s.epoch);
  file.meta["step"] = std::to_string(s.step);
  file.meta["best_epoch"] = std::to_string(s.best_epoch);
  file.meta["best_loss"] = hex(s.best_loss);
  file.meta["bad_epochs"] = std::to_string(s.bad_epochs);
  file.meta["finished"] = s.finished ? "1" : "0";
  file.meta["early_stopped"] = s.early_stopped ? "1" : "0";
  std::string losses;
  for (double v : s.valid_losses) losses += (losses.empty() ? "" : " ") + hex(v);
  file.meta["valid_losses"] = losses.empty() ? "-" : losses;
  file.meta["shuffle_rng"] = shuffle.state();
  file.meta["dropout_rng"] = drop.state();
  file.meta["trained_steps"] = std::to_string(model.trained_steps());
  file.meta["model_config"] = model.config().to_json();
  for (const auto& [name, t] : model.params().entries()) file.tensors.emplace_back("param." + name, t);
  if (best) {
    for (const auto& [name, t] : best->entries()) file.tensors.emplace_back("best." + name, t);
  }
  adam.save_state(file, "opt.");
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  save_tensor_file(tmp, file);
  std::filesystem::rename(tmp, path);
}

void load_values(const TensorFile& file, const std::string& prefix, ParameterSet& params) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : file.tensors) by_name[name] = &t;
  for (auto& [name, t] : params.entries()) {
    const auto it = by_name.find(prefix + name);
    if (it == by_name.end() || it->second->shape() != t.shape()) {
      throw ContractError("training state does not match parameter " + name);
    }
    std::copy(it->second->values().begin(), it->second->values().end(), t.mutable_values().begin());
  }
}

bool has_prefix(const TensorFile& file, const std::string& prefix) {
  return std::any_of(file.tensors.begin(), file.tensors.end(),
                     [&](const auto& e) { return e.first.rfind(prefix, 0) == 0; });
}

}  // namespace

TrainReport train_model(Model& model, Objective objective, std::span<const TrainItem> train,
                        std::span<const TrainItem> valid, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (train.empty()) throw InputError("no training items");
  if (objective == Objective::joint && model.config().architecture != Architecture::joint) {
    throw ContractError("joint objective needs a joint model");
  }
  if (options.teacher && config.weights.kl > 0.0 && options.teacher->trained_steps() == 0) {
    throw ContractError("distillation teacher has not been trained");
  }

  Rng shuffle = Rng::stream(config.seed, kShuffleStream);
  Rng drop = Rng::stream(config.seed, kDropoutStream);
  Adam adam(model.params(), {config.learning_rate});
  ParameterSet best;
  bool have_best = false;
  LoopState s;
  TrainReport report;

  if (options.resume && !options.state_path.empty() && std::filesystem::exists(options.state_path)) {
    const TensorFile file = load_tensor_file(options.state_path);
    if (file.meta.at("model_config") != model.config().to_json()) {
      throw ContractError("training state " + options.state_path.string() + " belongs to a different model config");
    }
    load_values(file, "param.", model.params());
    if (has_prefix(file, "best.")) {
      best = model.params().snapshot();
      load_values(file, "best.", best);
      have_best = true;
    }
    adam.load_state(file, "opt.");
    shuffle.restore(file.meta.at("shuffle_rng"));
    drop.restore(file.meta.at("dropout_rng"));
    s.epoch = std::stoull(file.meta.at("epoch"));
    s.step = std::stoull(file.meta.at("step"));
    s.best_epoch = std::stoull(file.meta.at("best_epoch"));
    s.best_loss = unhex(file.meta.at("best_loss"));
    s.bad_epochs = std::stoull(file.meta.at("bad_epochs"));
    s.finished = file.meta.at("finished") == "1";
    s.early_stopped = file.meta.at("early_stopped") == "1";
    if (file.meta.at("valid_losses") != "-") {
      std::istringstream in(file.meta.at("valid_losses"));
      for (std::string tok; in >> tok;) s.valid_losses.push_back(unhex(tok));
    }
    model.add_trained_steps(std::stoull(file.meta.at("trained_steps")) - model.trained_steps());
    report.resumed = true;
  }

  const ForwardMode mode{true, config.dropout, &drop};
  std::vector<std::size_t> order(train.size());
  const auto step_limit_hit = [&] { return config.max_steps && s.step >= config.max_steps; };

  while (!s.finished && s.epoch < config.max_epochs && !step_limit_hit() && !s.early_stopped) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    for (std::size_t begin = 0; begin < order.size() && !step_limit_hit(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      model.params().zero_grad();
      Tensor total;
      LossBreakdown sum;
      for (std::size_t k = begin; k < end; ++k) {
        Tensor t;
        const LossBreakdown l = item_loss(model, objective, train[order[k]], config.weights, mode, options.teacher, &t);
        if (!l.finite()) throw NumericError("non-finite loss at step " + std::to_string(s.step + 1));
        sum.l_fixed += l.l_fixed;
        sum.l_commit += l.l_commit;
        sum.l_tag += l.l_tag;
        sum.l_kl += l.l_kl;
        sum.total += l.total;
        if (t.defined()) total = total.defined() ? add(total, t) : t;
      }
      const double n = static_cast<double>(end - begin);
      if (total.defined()) backward(scale(total, 1.0 / n));
      adam.step();
      ++s.step;
      model.add_trained_steps(1);
      for (double* v : {&sum.l_fixed, &sum.l_commit, &sum.l_tag, &sum.l_kl, &sum.total}) *v /= n;
      if (options.on_step) options.on_step({s.step, s.epoch + 1, sum, config.learning_rate});
    }
    ++s.epoch;
    if (!valid.empty()) {
      const double v = evaluate_loss(model, objective, valid, config.weights, options.teacher).total;
      s.valid_losses.push_back(v);
      if (v < s.best_loss) {
        s.best_loss = v;
        s.best_epoch = s.epoch;
        s.bad_epochs = 0;
        if (!have_best) best = model.params().snapshot();
        else best.copy_values_from(model.params());
        have_best = true;
      } else if (++s.bad_epochs >= config.early_stop_patience) {
        s.early_stopped = true;
      }
    }
    if (!options.state_path.empty()) save_state(options.state_path, model, adam, shuffle, drop, s, have_best ? &best : nullptr);
    if (options.on_epoch) options.on_epoch(s.epoch, valid.empty() ? NAN : s.valid_losses.back());
  }

  if (have_best) model.params().copy_values_from(best);
  if (!s.finished && !options.state_path.empty()) {
    s.finished = true;
    save_state(options.state_path, model, adam, shuffle, drop, s, have_best ? &best : nullptr);
  }
  report.steps = s.step;
  report.epochs = s.epoch;
  report.best_epoch = s.best_epoch;
  report.best_valid_loss = have_best ? s.best_loss : NAN;
  report.valid_losses = s.valid_losses;
  report.early_stopped = s.early_stopped;
  return report;
}

std::uint64_t role_seed(std::uint64_t seed, std::string_view role) {
  std::uint64_t label = 0xcbf29ce484222325ULL;
  for (unsigned char c : role) label = (label ^ c) * 0x100000001b3ULL;
  return Rng::stream(seed, label).next_u64();
}

// ---- regimes ----------------------------------------------------------------------------

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::cascaded: return "cascaded";
    case Regime::teacher_student: return "teacher_student";
    case Regime::multitask: return "multitask";
    case Regime::backtranslation: return "backtranslation";
    case Regime::joint: return "joint";
  }
  return "unknown";
}

Regime parse_regime(std::string_view name) {
  for (Regime r : {Regime::cascaded, Regime::teacher_student, Regime::multitask, Regime::backtranslation,
                   Regime::joint}) {
    if (regime_name(r) == name) return r;
  }
  throw InputError("unknown regime: " + std::string(name) +
                   " (expected cascaded, teacher_student, multitask, backtranslation or joint)");
}

namespace {

ModelConfig with_architecture(ModelConfig c, Architecture a, double dropout) {
  c.architecture = a;
  c.dropout = dropout;
  return c;
}

void require_bpe(const RegimeData& data) {
  if (data.bpe == nullptr) throw ContractError("regime data needs the BPE model");
}

}  // namespace

Model train_role(std::string_view role, const ModelConfig& model_config, const TrainConfig& config,
                 Objective objective, std::span<const TrainItem> train, std::span<const TrainItem> valid,
                 const Model* teacher, const RegimeOptions& options, TrainReport* report) {
  if (options.resume && options.load_model) {
    if (auto done = options.load_model(role)) return std::move(*done);
  }
  const std::uint64_t seed = role_seed(config.seed, role);
  Model model(model_config, seed);
  TrainConfig role_config = config;
  role_config.seed = seed;
  TrainOptions topts;
  topts.teacher = teacher;
  topts.resume = options.resume;
  if (!options.state_dir.empty()) topts.state_path = options.state_dir / (std::string(role) + ".state");
  if (options.on_step) topts.on_step = [&](const StepLog& l) { options.on_step(role, l); };
  const TrainReport r = train_model(model, objective, train, valid, role_config, topts);
  if (report) *report = r;
  if (options.on_model) options.on_model(role, model);
  return model;
}

Model train_teacher(const ModelConfig& model_config, const TrainConfig& config, const RegimeData& data,
                    const RegimeOptions& options) {
  TrainConfig c = config;
  c.weights = {1.0, 0.0, 0.0, 0.0};
  const auto cfg = with_architecture(model_config, Architecture::seq2seq, config.dropout);
  const auto train = teacher_items(data.train, cfg.max_len);
  const auto valid = teacher_items(data.valid, cfg.max_len);
  return train_role("teacher", cfg, c, Objective::repair, train, valid, nullptr, options);
}

Model train_teacher_student(const Model& teacher, const ModelConfig& student_config, const TrainConfig& config,
                            const RegimeData& data, const RegimeOptions& options) {
  if (teacher.trained_steps() == 0) throw ContractError("teacher-student training needs a trained teacher");
  const auto cfg = with_architecture(student_config, Architecture::seq2seq, config.dropout);
  if (cfg.vocab_size != teacher.config().vocab_size) throw ContractError("teacher and student vocabularies differ");
  TrainConfig c = config;
  c.weights.commit = 0.0;
  c.weights.tag = 0.0;
  const auto train = repair_items(data.train, teacher.config().max_len);
  const auto valid = repair_items(data.valid, teacher.config().max_len);
  return train_role("repair", cfg, c, Objective::repair, train, valid, &teacher, options);
}

Model train_multitask(const ModelConfig& model_config, const TrainConfig& config, const RegimeData& data,
                      const RegimeOptions& options) {
  for (const auto& ex : data.train)
    if (ex.line_tags.empty()) throw InputError("multitask training needs line tags on every example");
  const auto cfg = with_architecture(model_config, Architecture::seq2seq, config.dropout);
  TrainConfig c = config;
  c.weights.commit = 0.0;
  c.weights.kl = 0.0;
  const auto train = repair_items(data.train);
  const auto valid = repair_items(data.valid);
  return train_role("repair", cfg, c, Objective::repair, train, valid, nullptr, options);
}

Model train_joint(const ModelConfig& model_config, const TrainConfig& config, const RegimeData& data,
                  const RegimeOptions& options) {
  for (const auto& ex : data.train)
    if (ex.line_tags.empty()) throw InputError("joint training needs line tags on every example");
  const auto cfg = with_architecture(model_config, Architecture::joint, config.dropout);
  TrainConfig c = config;
  c.weights.kl = 0.0;
  const auto train = joint_items(data.train);
  const auto valid = joint_items(data.valid);
  return train_role("joint", cfg, c, Objective::joint, train, valid, nullptr, options);
}

std::vector<TripleExample> augment_with_back_model(const Model& back_model, std::span<const TripleExample> parallel,
                                                   std::span<const MonolingualSnippet> monolingual,
                                                   const BpeModel& bpe, bool language_tags) {
  std::vector<TripleExample> out(parallel.begin(), parallel.end());
  for (const auto& snippet : monolingual) {
    TripleExample ex;
    ex.fixed = snippet.code;
    ex.language = snippet.language;
    const TokenIds source = bpe.encode(snippet.code);
    TokenIds guess;
    if (!source.empty() && source.size() <= back_model.config().max_len) guess = back_model.generate_fixed(source);
    ex.buggy = bpe.decode(guess);
    if (ex.buggy.empty()) ex.buggy = snippet.code;
    ex.line_tags = line_tags_from_diff(line_diff(ex.buggy, ex.fixed));
    ex.change_input = build_change_input(ex.buggy, ex.fixed);
    ex.pseudo = true;
    encode_example(ex, bpe, language_tags);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TripleExample> backtranslate_augment(const ModelConfig& back_config, const TrainConfig& config,
                                                 std::span<const TripleExample> parallel,
                                                 std::span<const MonolingualSnippet> monolingual,
                                                 const BpeModel& bpe, bool language_tags,
                                                 const RegimeOptions& options, std::optional<Model>* back_model_out) {
  if (parallel.empty()) throw InputError("back-translation needs parallel data");
  if (monolingual.empty()) return {parallel.begin(), parallel.end()};
  const auto cfg = with_architecture(back_config, Architecture::seq2seq, config.dropout);
  TrainConfig c = config;
  c.weights = {1.0, 0.0, 0.0, 0.0};
  const auto train = back_items(parallel);
  Model back = train_role("back", cfg, c, Objective::repair, train, {}, nullptr, options);
  auto out = augment_with_back_model(back, parallel, monolingual, bpe, language_tags);
  if (back_model_out) back_model_out->emplace(std::move(back));
  return out;
}

TrainedSystem train_regime(Regime regime, const ModelConfig& model_config, const TrainConfig& config,
                           const RegimeData& data, const RegimeOptions& options) {
  require_bpe(data);
  config.validate();
  TrainedSystem sys;
  sys.regime = regime;
  if (regime == Regime::joint) {
    sys.joint.emplace(train_joint(model_config, config, data, options));
    return sys;
  }
  const auto seq_cfg = with_architecture(model_config, Architecture::seq2seq, config.dropout);
  switch (regime) {
    case Regime::cascaded: {
      TrainConfig c = config;
      c.weights = {config.weights.fixed, 0.0, 0.0, 0.0};
      const auto train = repair_items(data.train);
      const auto valid = repair_items(data.valid);
      sys.repair.emplace(train_role("repair", seq_cfg, c, Objective::repair, train, valid, nullptr, options));
      break;
    }
    case Regime::teacher_student:
      sys.teacher.emplace(train_teacher(model_config, config, data, options));
      sys.repair.emplace(train_teacher_student(*sys.teacher, model_config, config, data, options));
      break;
    case Regime::multitask:
      sys.repair.emplace(train_multitask(model_config, config, data, options));
      break;
    case Regime::backtranslation: {
      sys.augmented = backtranslate_augment(model_config, config, data.train, data.monolingual, *data.bpe,
                                            data.language_tags, options, &sys.back);
      TrainConfig c = config;
      c.weights = {config.weights.fixed, 0.0, 0.0, 0.0};
      const auto train = repair_items(sys.augmented);
      const auto valid = repair_items(data.valid);
      sys.repair.emplace(train_role("repair", seq_cfg, c, Objective::repair, train, valid, nullptr, options));
      break;
    }
    case Regime::joint:
      break;
  }
  TrainConfig c = config;
  c.weights = {0.0, config.weights.commit, 0.0, 0.0};
  const auto train = commit_items(data.train);
  const auto valid = commit_items(data.valid);
  sys.commit.emplace(train_role("commit", seq_cfg, c, Objective::commit_cascaded, train, valid, nullptr, options));
  return sys;
}

}  // namespace fixcommit
