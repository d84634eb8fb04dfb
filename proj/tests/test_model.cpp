#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fixcommit/changes_aware_attention.hpp"
#include "fixcommit/dataset.hpp"
#include "fixcommit/errors.hpp"
#include "fixcommit/joint_model.hpp"
#include "fixcommit/optimizer.hpp"
#include "support/caa_oracle.hpp"
#include "support/gradcheck.hpp"

using namespace fixcommit;
using fixcommit::testing::random_tensor;

namespace {

struct CaaInstance {
  ParameterSet params;
  ChangesAwareAttentionParams caa;
  Tensor z_c, z_b, z_f;
};

CaaInstance random_instance(Rng& rng, std::size_t hidden, bool same_sides = false) {
  CaaInstance inst;
  inst.caa = ChangesAwareAttentionParams(inst.params, "caa", hidden, rng);
  for (double& b : inst.caa.b_g.mutable_values()) b = rng.normal();
  const std::size_t l = 1 + rng.below(4), n = 1 + rng.below(4), m = 1 + rng.below(4);
  inst.z_c = random_tensor({l, hidden}, rng);
  inst.z_b = random_tensor({n, hidden}, rng);
  inst.z_f = same_sides ? inst.z_b : random_tensor({m, hidden}, rng);
  return inst;
}

ModelConfig tiny_config(Architecture a = Architecture::joint) {
  ModelConfig c;
  c.architecture = a;
  c.vocab_size = 23;
  c.hidden = 8;
  c.layers = 2;
  c.heads = 2;
  c.max_len = 12;
  c.dropout = 0.0;
  return c;
}

TokenIds random_ids(Rng& rng, std::size_t n, std::size_t vocab) {
  TokenIds ids(n);
  for (auto& id : ids) id = static_cast<TokenId>(6 + rng.below(vocab - 6));
  return ids;
}

bool same_values(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

}  // namespace

TEST_CASE("changes-aware attention algebra over random instances") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    CaaInstance inst = random_instance(rng, 8);
    const auto t = changes_aware_attention_trace(inst.caa, inst.z_c, inst.z_b, inst.z_f);
    for (std::size_t i = 0; i < t.delta.numel(); ++i) {
      CHECK((t.zeta.values()[i] + t.delta.values()[i]) / 2.0 == t.c_b.values()[i]);
      CHECK((t.zeta.values()[i] - t.delta.values()[i]) / 2.0 == t.c_f.values()[i]);
    }
    for (double g : t.gates.values()) CHECK((g > 0.0 && g < 1.0));

    CaaInstance same = random_instance(rng, 8, true);
    const auto s = changes_aware_attention_trace(same.caa, same.z_c, same.z_b, same.z_f);
    for (double d : s.delta.values()) CHECK(d == 0.0);
    const Tensor expected = add(same.z_c, matmul_nt(mul(s.g_zeta, s.zeta), same.caa.w_o));
    CHECK(same_values(s.output, expected));

    for (double& w : inst.caa.w_o.mutable_values()) w = 0.0;
    CHECK(same_values(changes_aware_attention(inst.caa, inst.z_c, inst.z_b, inst.z_f), inst.z_c));
  }
}

TEST_CASE("changes-aware attention matches the formula oracle") {
  using namespace fixcommit::testing;
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    CaaInstance inst = random_instance(rng, 8);
    const Tensor out = changes_aware_attention(inst.caa, inst.z_c, inst.z_b, inst.z_f);
    const std::size_t h = 8;
    const Matrix expected = oracle_changes_aware(
        to_matrix(inst.z_c.values(), inst.z_c.rows(), h), to_matrix(inst.z_b.values(), inst.z_b.rows(), h),
        to_matrix(inst.z_f.values(), inst.z_f.rows(), h), to_matrix(inst.caa.w_g.values(), 2 * h, 2 * h),
        std::vector<double>(inst.caa.b_g.values().begin(), inst.caa.b_g.values().end()),
        to_matrix(inst.caa.w_o.values(), h, h));
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t k = 0; k < h; ++k) CHECK(out.at(i, k) == doctest::Approx(expected[i][k]).epsilon(1e-12));
  }
}

TEST_CASE("changes-aware attention passes finite differences") {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    CaaInstance inst = random_instance(rng, 1 + rng.below(8));
    const Tensor weights = random_tensor(inst.z_c.shape(), rng, 1.0, false);
    const auto loss = [&] { return sum(mul(changes_aware_attention(inst.caa, inst.z_c, inst.z_b, inst.z_f), weights)); };
    const auto r = fixcommit::testing::check_gradients(
        loss, {inst.z_c, inst.z_b, inst.z_f, inst.caa.w_g, inst.caa.b_g, inst.caa.w_o});
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("swapping buggy and fixed sides negates delta") {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    CaaInstance inst = random_instance(rng, 8);
    const auto a = changes_aware_attention_trace(inst.caa, inst.z_c, inst.z_b, inst.z_f);
    const auto b = changes_aware_attention_trace(inst.caa, inst.z_c, inst.z_f, inst.z_b);
    for (std::size_t i = 0; i < a.delta.numel(); ++i) CHECK(b.delta.values()[i] == -a.delta.values()[i]);
    CHECK_FALSE(same_values(a.output, b.output));
  }
}

TEST_CASE("changes-aware attention rejects bad shapes") {
  Rng rng(15);
  CaaInstance inst = random_instance(rng, 4);
  CHECK_THROWS_AS(changes_aware_attention(inst.caa, random_tensor({2, 3}, rng), inst.z_b, inst.z_f), ShapeError);
}

TEST_CASE("model config") {
  ModelConfig c = tiny_config();
  CHECK(ModelConfig::from_json(c.to_json()).to_json() == c.to_json());
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = tiny_config();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ContractError);
  CHECK_THROWS_AS(ModelConfig::from_json(R"({"hiden": 3})"), InputError);
}

TEST_CASE("encoder contracts") {
  const Model model(tiny_config(), 1);
  Rng rng(2);
  const TokenIds ids = random_ids(rng, 6, 23);
  const Tensor z = model.encode_buggy(ids);
  CHECK(z.shape() == Shape{6, 8});
  CHECK(same_values(z, model.encode_buggy(ids)));

  TokenIds padded = ids;
  padded.insert(padded.end(), {kPadId, kPadId, kPadId});
  const Tensor zp = model.encode_buggy(padded);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 8; ++k) CHECK(std::abs(zp.at(i, k) - z.at(i, k)) < 1e-9);
  TokenIds shorter_pad = ids;
  shorter_pad.push_back(kPadId);
  const Tensor zs = model.encode_buggy(shorter_pad);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 8; ++k) CHECK(std::abs(zs.at(i, k) - z.at(i, k)) < 1e-9);

  CHECK_THROWS_AS(model.encode_buggy(random_ids(rng, 13, 23)), InputError);
  CHECK_THROWS_AS(model.encode_buggy(TokenIds{}), InputError);
  CHECK_THROWS_AS(model.encode_buggy(TokenIds{99}), IndexError);
}

TEST_CASE("tagging head") {
  Model model(tiny_config(), 3);
  Rng rng(4);
  const Tensor z = model.encode_buggy(random_ids(rng, 7, 23));
  const std::vector<std::size_t> cls = {0, 3, 6};
  const Tensor logits = model.tag_logits(z, cls);
  const auto probs = softmax_rows(logits);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(probs.at(i, 0) + probs.at(i, 1) - 1.0) < 1e-9);
  CHECK_THROWS_AS(model.tag_logits(z, std::vector<std::size_t>{7}), IndexError);
  for (auto name : {"tagger.weight", "tagger.bias"})
    for (double& w : model.params().get(name).mutable_values()) w = 0.0;
  for (double p : model.tag_lines(z, cls)) CHECK(p == 0.5);
}

TEST_CASE("decoders are causal and shaped") {
  const Model model(tiny_config(), 5);
  Rng rng(6);
  const Tensor z_b = model.encode_buggy(random_ids(rng, 5, 23));
  TokenIds prefix = random_ids(rng, 6, 23);
  const FixedDecoding fixed = model.decode_fixed(z_b, prefix);
  CHECK(fixed.logits.shape() == Shape{6, 23});
  CHECK(fixed.hidden.shape() == Shape{6, 8});
  const Tensor commit = model.decode_commit(z_b, fixed.hidden, prefix);
  CHECK(commit.shape() == Shape{6, 23});

  TokenIds changed = prefix;
  changed[4] = changed[4] == 7 ? 8 : 7;
  changed[5] = changed[5] == 9 ? 10 : 9;
  const FixedDecoding fixed2 = model.decode_fixed(z_b, changed);
  const Tensor commit2 = model.decode_commit(z_b, fixed.hidden, changed);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t v = 0; v < 23; ++v) {
      CHECK(fixed2.logits.at(t, v) == fixed.logits.at(t, v));
      CHECK(commit2.at(t, v) == commit.at(t, v));
    }
  }
  CHECK(fixed2.logits.at(4, 0) != fixed.logits.at(4, 0));
  CHECK_THROWS_AS(model.decode_fixed(z_b, random_ids(rng, 13, 23)), InputError);

  const Model seq(tiny_config(Architecture::seq2seq), 5);
  CHECK_THROWS_AS(seq.decode_commit(z_b, fixed.hidden, prefix), ContractError);
  CHECK(seq.params().size() < model.params().size());
  CHECK_FALSE(seq.params().contains("changes_aware.w_g"));
}

TEST_CASE("every changes-aware parameter receives gradient") {
  Model model(tiny_config(), 7);
  Rng rng(8);
  for (int i = 0; i < 3; ++i) {
    const Tensor z_b = model.encode_buggy(random_ids(rng, 5, 23));
    const auto tf = teacher_forcing(random_ids(rng, 4, 23));
    const Tensor z_f = model.decode_fixed(z_b, tf.input).hidden;
    const Tensor loss = cross_entropy(model.decode_commit(z_b, z_f, tf.input), tf.labels, kPadId);
    backward(loss);
  }
  for (auto name : {"changes_aware.w_g", "changes_aware.b_g", "changes_aware.w_o"}) {
    const auto g = model.params().get(name).grad();
    CHECK(std::any_of(g.begin(), g.end(), [](double v) { return v != 0.0; }));
  }
}

TEST_CASE("decoding strategies") {
  SUBCASE("beam finds a better sequence than greedy") {
    // greedy takes token 1 (p=.6) then faces a flat tail; beam prefers token 2
    const StepFunction step = [](std::span<const TokenId> prefix) -> std::vector<double> {
      if (prefix.empty()) return {std::log(0.0001), std::log(0.6), std::log(0.3999)};
      if (prefix.size() == 1 && prefix[0] == 1) return {std::log(0.34), std::log(0.33), std::log(0.33)};
      return {std::log(0.98), std::log(0.01), std::log(0.01)};
    };
    CHECK(greedy_decode(step, 5, 0) == TokenIds{1});
    CHECK(beam_decode(step, 2, 5, 0) == TokenIds{2});
    CHECK(beam_decode(step, 1, 5, 0) == greedy_decode(step, 5, 0));
  }
  SUBCASE("length cap") {
    const StepFunction step = [](std::span<const TokenId>) { return std::vector<double>{-5.0, -0.1}; };
    CHECK(greedy_decode(step, 4, 0).size() == 4);
    CHECK(beam_decode(step, 3, 4, 0).size() == 4);
  }
}

TEST_CASE("generation: beam(1) equals greedy and output is capped") {
  Rng rng(9);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Model model(tiny_config(), seed);
    const TokenIds src = random_ids(rng, 6, 23);
    const Generation greedy = model.generate(src, DecodeStrategy::greedy());
    const Generation beam1 = model.generate(src, DecodeStrategy::beam(1));
    CHECK(greedy.fixed == beam1.fixed);
    CHECK(greedy.commit == beam1.commit);
    CHECK(greedy.fixed.size() <= 11);
    CHECK(greedy.commit.size() <= 11);
    const Generation beam3 = model.generate(src, DecodeStrategy::beam(3));
    CHECK(beam3.fixed.size() <= 11);
  }
}

TEST_CASE("checkpoint round trip") {
  Model model(tiny_config(), 10);
  model.add_trained_steps(3);
  const auto path = std::filesystem::temp_directory_path() / "fixcommit_model_test.ckpt";
  model.save(path);
  const Model loaded = Model::load(path);
  CHECK(loaded.trained_steps() == 3);
  CHECK(loaded.config().to_json() == model.config().to_json());
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    CHECK(same_values(model.params().entries()[i].second, loaded.params().entries()[i].second));
  }
  std::filesystem::remove(path);
}

TEST_CASE("adam") {
  ParameterSet params;
  params.add("w", Tensor::from({2}, {1.0, -2.0}, true));
  Adam frozen(params, {0.0});
  params.get("w").mutable_grad()[0] = 3.0;
  frozen.step();
  CHECK(params.get("w").values()[0] == 1.0);
  CHECK(params.get("w").values()[1] == -2.0);

  Adam adam(params, {0.1});
  adam.step();
  // first bias-corrected step moves by lr * sign(grad)
  CHECK(params.get("w").values()[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(params.get("w").values()[1] == -2.0);

  TensorFile file;
  adam.save_state(file, "opt.");
  Adam restored(params, {0.1});
  restored.load_state(file, "opt.");
  CHECK(restored.steps() == 1);
}
