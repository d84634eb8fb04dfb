#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fixcommit/errors.hpp"
#include "fixcommit/evaluation.hpp"
#include "fixcommit/training.hpp"
#include "support/synthetic.hpp"

using namespace fixcommit;

namespace {

ModelConfig small_model(std::size_t vocab, Architecture a = Architecture::joint) {
  ModelConfig c;
  c.architecture = a;
  c.vocab_size = vocab;
  c.hidden = 16;
  c.layers = 1;
  c.heads = 2;
  c.max_len = 64;
  c.dropout = 0.0;
  return c;
}

TrainConfig small_train(std::size_t epochs) {
  TrainConfig t;
  t.learning_rate = 3e-3;
  t.batch_size = 2;
  t.dropout = 0.1;
  t.max_epochs = epochs;
  t.seed = 9;
  return t;
}

bool same_params(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.entries()[i];
    const auto& y = b.entries()[i];
    if (x.first != y.first || x.second.shape() != y.second.shape()) return false;
    if (!std::equal(x.second.values().begin(), x.second.values().end(), y.second.values().begin())) return false;
  }
  return true;
}

std::vector<double> grads_of(const ParameterSet& p) {
  std::vector<double> out;
  for (const auto& [name, t] : p.entries()) out.insert(out.end(), t.grad().begin(), t.grad().end());
  return out;
}

void zero_output(Model& m, const std::string& prefix) {
  for (auto name : {prefix + ".weight", prefix + ".bias"})
    for (double& w : m.params().get(name).mutable_values()) w = 0.0;
}

}  // namespace

TEST_CASE("train config json") {
  TrainConfig t = small_train(3);
  t.weights.kl = 0.0;
  CHECK(TrainConfig::from_json(t.to_json()).to_json() == t.to_json());
  CHECK_THROWS_AS(TrainConfig::from_json(R"({"lr": 1})"), InputError);
  t.early_stop_patience = 0;
  CHECK_THROWS_AS(t.validate(), ContractError);
}

TEST_CASE("analytic loss values") {
  const auto corpus = fixcommit::testing::synthetic_corpus(3, 1);
  const double log_v = std::log(static_cast<double>(corpus.bpe.vocab_size()));
  Model joint(small_model(corpus.bpe.vocab_size()), 1);
  const auto items = joint_items(corpus.examples);

  zero_output(joint, "fixed_output");
  CHECK(loss_code_repair(joint, items).item() == doctest::Approx(log_v).epsilon(1e-12));
  zero_output(joint, "commit_output");
  CHECK(loss_commit(joint, items, CommitMode::joint).item() == doctest::Approx(log_v).epsilon(1e-12));
  zero_output(joint, "tagger");
  CHECK(loss_tagging(joint, items).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Model seq(small_model(corpus.bpe.vocab_size(), Architecture::seq2seq), 2);
  const auto citems = commit_items(corpus.examples);
  zero_output(seq, "fixed_output");
  CHECK(loss_commit(seq, citems, CommitMode::cascaded).item() == doctest::Approx(log_v).epsilon(1e-12));

  CHECK_THROWS_AS(loss_code_repair(joint, std::span<const TrainItem>{}), InputError);
}

TEST_CASE("commit loss modes share the cross-entropy formula") {
  const auto corpus = fixcommit::testing::synthetic_corpus(2, 2);
  const Model joint(small_model(corpus.bpe.vocab_size()), 3);
  const auto items = joint_items(corpus.examples);
  double manual = 0.0;
  for (const auto& item : items) {
    const Tensor z_b = joint.encode_buggy(item.source);
    const Tensor z_f = joint.decode_fixed(z_b, teacher_forcing(item.target).input).hidden;
    const auto tc = teacher_forcing(item.commit);
    manual += cross_entropy(joint.decode_commit(z_b, z_f, tc.input), tc.labels, kPadId).item();
  }
  CHECK(loss_commit(joint, items, CommitMode::joint).item() == doctest::Approx(manual / 2).epsilon(1e-14));

  const Model seq(small_model(corpus.bpe.vocab_size(), Architecture::seq2seq), 3);
  const auto citems = commit_items(corpus.examples);
  double cascaded = 0.0;
  for (const auto& item : citems) {
    const auto tf = teacher_forcing(item.target);
    cascaded += cross_entropy(seq.decode_fixed(seq.encode_buggy(item.source), tf.input).logits, tf.labels, kPadId).item();
  }
  CHECK(loss_commit(seq, citems, CommitMode::cascaded).item() == doctest::Approx(cascaded / 2).epsilon(1e-14));

  CHECK_THROWS_AS(loss_commit(seq, items, CommitMode::joint), ContractError);
  auto no_gold = items;
  no_gold[0].target.clear();
  CHECK_THROWS_AS(loss_commit(joint, no_gold, CommitMode::joint), ContractError);
  auto no_change = citems;
  no_change[0].source.clear();
  CHECK_THROWS_AS(loss_commit(seq, no_change, CommitMode::cascaded), InputError);
  auto bad_tags = items;
  bad_tags[0].line_tags.push_back(0);
  CHECK_THROWS_AS(loss_tagging(joint, bad_tags), ContractError);
}

TEST_CASE("distillation loss") {
  const auto corpus = fixcommit::testing::synthetic_corpus(3, 3);
  const std::size_t v = corpus.bpe.vocab_size();
  Model teacher(small_model(v, Architecture::seq2seq), 4);
  Model student(small_model(v, Architecture::seq2seq), 5);
  const auto items = repair_items(corpus.examples, 64);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Model s(small_model(v, Architecture::seq2seq), 100 + seed);
    CHECK(loss_kl_distill(teacher, s, items).item() >= 0.0);
  }
  const Tensor kl = loss_kl_distill(teacher, student, items);
  backward(kl);
  for (const auto& [name, t] : teacher.params().entries())
    for (double g : t.grad()) CHECK(g == 0.0);
  const auto sg = grads_of(student.params());
  CHECK(std::any_of(sg.begin(), sg.end(), [](double g) { return g != 0.0; }));

  Model other(small_model(v + 1, Architecture::seq2seq), 6);
  CHECK_THROWS_AS(loss_kl_distill(teacher, other, items), ContractError);
  auto no_teacher_src = items;
  no_teacher_src[0].teacher_source.clear();
  CHECK_THROWS_AS(loss_kl_distill(teacher, student, no_teacher_src), InputError);

  RegimeData data;
  data.train = corpus.examples;
  data.bpe = &corpus.bpe;
  CHECK_THROWS_AS(train_teacher_student(teacher, small_model(v), small_train(1), data), ContractError);
}

TEST_CASE("a zero loss weight removes that component's gradient") {
  const auto corpus = fixcommit::testing::synthetic_corpus(3, 4);
  Model model(small_model(corpus.bpe.vocab_size()), 7);
  const auto items = joint_items(corpus.examples);
  const auto grads_for = [&](const LossWeights& w) {
    model.params().zero_grad();
    Tensor total;
    for (const auto& item : items) {
      Tensor t;
      item_loss(model, Objective::joint, item, w, {}, nullptr, &t);
      total = total.defined() ? add(total, t) : t;
    }
    backward(total);
    return grads_of(model.params());
  };
  const auto fixed_only = grads_for({1.0, 0.0, 0.0, 0.0});
  model.params().zero_grad();
  backward(scale(loss_code_repair(model, items), static_cast<double>(items.size())));
  const auto direct = grads_of(model.params());
  REQUIRE(fixed_only.size() == direct.size());
  for (std::size_t i = 0; i < direct.size(); ++i) CHECK(fixed_only[i] == doctest::Approx(direct[i]).epsilon(1e-12));
  CHECK(grads_for({1.0, 1.0, 1.0, 0.0}) != fixed_only);
}

TEST_CASE("learning rate zero leaves parameters bit-identical") {
  const auto corpus = fixcommit::testing::synthetic_corpus(2, 5);
  Model model(small_model(corpus.bpe.vocab_size()), 8);
  const ParameterSet before = model.params().snapshot();
  TrainConfig t = small_train(1);
  t.learning_rate = 0.0;
  t.max_steps = 1;
  const auto items = joint_items(corpus.examples);
  train_model(model, Objective::joint, items, {}, t);
  CHECK(same_params(before, model.params()));
  CHECK(model.trained_steps() == 1);
}

TEST_CASE("repair loss decreases over the first 20 full-batch steps") {
  const auto corpus = fixcommit::testing::synthetic_corpus(4, 6);
  Model model(small_model(corpus.bpe.vocab_size(), Architecture::seq2seq), 9);
  TrainConfig t;
  t.learning_rate = 1e-3;
  t.batch_size = 4;
  t.dropout = 0.0;
  t.max_steps = 20;
  t.max_epochs = 100;
  t.weights = {1.0, 0.0, 0.0, 0.0};
  std::vector<double> losses;
  TrainOptions opts;
  opts.on_step = [&](const StepLog& l) {
    losses.push_back(l.loss.l_fixed);
    CHECK(l.loss.finite());
  };
  const auto items = repair_items(corpus.examples);
  train_model(model, Objective::repair, items, {}, t, opts);
  REQUIRE(losses.size() == 20);
  for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] < losses[i - 1]);
}

TEST_CASE("training is deterministic and resumable") {
  const auto corpus = fixcommit::testing::synthetic_corpus(6, 7);
  const auto train = joint_items(std::span(corpus.examples).first(4));
  const auto valid = joint_items(std::span(corpus.examples).subspan(4));
  const TrainConfig t = small_train(4);
  const auto dir = std::filesystem::temp_directory_path() / "fixcommit_resume_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  Model a(small_model(corpus.bpe.vocab_size()), 10);
  const TrainReport ra = train_model(a, Objective::joint, train, valid, t);
  Model b(small_model(corpus.bpe.vocab_size()), 10);
  train_model(b, Objective::joint, train, valid, t);
  CHECK(same_params(a.params(), b.params()));

  Model c(small_model(corpus.bpe.vocab_size()), 10);
  TrainOptions interrupt;
  interrupt.state_path = dir / "joint.state";
  interrupt.on_epoch = [](std::size_t epoch, double) {
    if (epoch == 2) throw IoError("simulated interruption");
  };
  CHECK_THROWS_AS(train_model(c, Objective::joint, train, valid, t, interrupt), IoError);
  Model d(small_model(corpus.bpe.vocab_size()), 10);
  TrainOptions resume;
  resume.state_path = dir / "joint.state";
  resume.resume = true;
  const TrainReport rd = train_model(d, Objective::joint, train, valid, t, resume);
  CHECK(rd.resumed);
  CHECK(rd.steps == ra.steps);
  CHECK(rd.valid_losses == ra.valid_losses);
  CHECK(same_params(a.params(), d.params()));
  CHECK(d.trained_steps() == a.trained_steps());
  std::filesystem::remove_all(dir);
}

TEST_CASE("early stopping restores the best epoch") {
  const auto corpus = fixcommit::testing::synthetic_corpus(6, 8);
  const auto train = joint_items(std::span(corpus.examples).first(3));
  const auto valid = joint_items(std::span(corpus.examples).subspan(3));
  TrainConfig t = small_train(60);
  t.learning_rate = 3e-2;
  t.early_stop_patience = 2;
  Model m(small_model(corpus.bpe.vocab_size()), 11);
  const TrainReport r = train_model(m, Objective::joint, train, valid, t);
  CHECK(r.early_stopped);
  CHECK(r.epochs < 60);
  CHECK(r.epochs - r.best_epoch == 2);
  CHECK(*std::min_element(r.valid_losses.begin(), r.valid_losses.end()) == r.best_valid_loss);
  CHECK(evaluate_loss(m, Objective::joint, valid, t.weights).total == doctest::Approx(r.best_valid_loss).epsilon(1e-12));
}

TEST_CASE("regime degeneracies reproduce cascaded training bit for bit") {
  const auto corpus = fixcommit::testing::synthetic_corpus(6, 9);
  RegimeData data;
  data.train.assign(corpus.examples.begin(), corpus.examples.begin() + 4);
  data.valid.assign(corpus.examples.begin() + 4, corpus.examples.end());
  data.bpe = &corpus.bpe;
  const ModelConfig mc = small_model(corpus.bpe.vocab_size());
  TrainConfig t = small_train(2);

  const TrainedSystem cascaded = train_regime(Regime::cascaded, mc, t, data);
  TrainConfig no_kl = t;
  no_kl.weights.kl = 0.0;
  const TrainedSystem ts = train_regime(Regime::teacher_student, mc, no_kl, data);
  TrainConfig no_tag = t;
  no_tag.weights.tag = 0.0;
  const TrainedSystem mt = train_regime(Regime::multitask, mc, no_tag, data);
  CHECK(same_params(cascaded.repair->params(), ts.repair->params()));
  CHECK(same_params(cascaded.repair->params(), mt.repair->params()));
  CHECK(same_params(cascaded.commit->params(), ts.commit->params()));

  const TrainedSystem ts_on = train_regime(Regime::teacher_student, mc, t, data);
  CHECK_FALSE(same_params(cascaded.repair->params(), ts_on.repair->params()));
  const TrainedSystem mt_on = train_regime(Regime::multitask, mc, t, data);
  CHECK_FALSE(same_params(cascaded.repair->params(), mt_on.repair->params()));

  auto untagged = data;
  untagged.train[0].line_tags.clear();
  CHECK_THROWS_AS(train_multitask(mc, t, untagged), InputError);
}

TEST_CASE("back-translation contract") {
  const auto corpus = fixcommit::testing::synthetic_corpus(4, 10);
  const ModelConfig mc = small_model(corpus.bpe.vocab_size());
  const TrainConfig t = small_train(1);
  const auto same = backtranslate_augment(mc, t, corpus.examples, {}, corpus.bpe, false);
  REQUIRE(same.size() == corpus.examples.size());
  for (std::size_t i = 0; i < same.size(); ++i) {
    CHECK(same[i].buggy == corpus.examples[i].buggy);
    CHECK_FALSE(same[i].pseudo);
  }
  const std::vector<MonolingualSnippet> mono = {{"int f ( ) {\n  return 1 ;\n}", "java"},
                                                {"int g ( int a ) {\n  return a ;\n}", "java"},
                                                {"x", "java"}};
  const auto augmented = backtranslate_augment(mc, t, corpus.examples, mono, corpus.bpe, false);
  CHECK(augmented.size() == corpus.examples.size() + mono.size());
  CHECK(std::count_if(augmented.begin(), augmented.end(), [](const auto& e) { return e.pseudo; }) == 3);
  for (std::size_t i = corpus.examples.size(); i < augmented.size(); ++i) {
    CHECK(augmented[i].fixed == mono[i - corpus.examples.size()].code);
    CHECK(augmented[i].message.empty());
  }
  CHECK_THROWS_AS(split_corpus(augmented, {0.8, 0.1, 0.1}, 1), ContractError);
  CHECK(commit_items(augmented).size() == corpus.examples.size());
  CHECK_THROWS_AS(backtranslate_augment(mc, t, {}, mono, corpus.bpe, false), InputError);
}

TEST_CASE("joint model overfits a single example") {
  const auto corpus = fixcommit::testing::synthetic_corpus(1, 11);
  ModelConfig mc = small_model(corpus.bpe.vocab_size());
  mc.hidden = 32;
  mc.heads = 4;
  TrainConfig t;
  t.learning_rate = 1e-3;
  t.batch_size = 1;
  t.dropout = 0.0;
  t.max_epochs = 300;
  const auto items = joint_items(corpus.examples);
  Model m(mc, 12);
  double best = 1e300;
  TrainOptions opts;
  opts.on_step = [&](const StepLog& l) {
    CHECK(l.loss.finite());
    CHECK(l.loss.l_fixed >= 0.0);
    best = std::min(best, l.loss.total);
  };
  train_model(m, Objective::joint, items, {}, t, opts);
  CHECK(loss_code_repair(m, items).item() < 0.05);
  const auto acc = teacher_forced_accuracy(m, items);
  CHECK(acc.fixed == 1.0);
  CHECK(acc.commit == 1.0);
  CHECK(acc.tags == 1.0);
  const Generation g = m.generate(items[0].source);
  CHECK(g.fixed == items[0].target);
  CHECK(g.commit == items[0].commit);
  CHECK(g.line_tags == items[0].line_tags);
}
