#include "fixcommit/evaluation.hpp"

#include <fstream>
#include <json.hpp>

#include "fixcommit/errors.hpp"

namespace fixcommit {

using nlohmann::json;

namespace {

std::vector<Tokens> tokenize_all(std::span<const std::string> texts) {
  std::vector<Tokens> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(lexical_tokens(t));
  return out;
}

bool has_language_tag(const TripleExample& ex) { return !ex.buggy_tokens.empty() && ex.buggy_tokens[0] != kClsId; }

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t v = 1; v < logits.cols(); ++v)
    if (logits.at(row, v) > logits.at(row, best)) best = v;
  return best;
}

std::size_t count_hits(const Tensor& logits, const TokenIds& labels) {
  std::size_t hits = 0;
  for (std::size_t t = 0; t < labels.size(); ++t) hits += static_cast<TokenId>(argmax_row(logits, t)) == labels[t];
  return hits;
}

json metrics_json(const TaskMetrics& m) {
  return {{"bleu4", m.bleu4}, {"rouge_l", m.rouge_l}, {"exact_match", m.exact_match}, {"count", m.count}};
}

}  // namespace

TaskMetrics score_texts(std::span<const std::string> candidates, std::span<const std::string> references,
                        double rouge_beta) {
  const auto c = tokenize_all(candidates);
  const auto r = tokenize_all(references);
  TaskMetrics m;
  m.bleu4 = bleu4(c, r);
  m.rouge_l = rouge_l(c, r, rouge_beta);
  m.exact_match = exact_match(c, r);
  m.count = c.size();
  return m;
}

std::vector<BucketReport> length_bucket_report(std::span<const std::string> candidates,
                                               std::span<const std::string> references,
                                               std::span<const std::size_t> bucket_edges, double rouge_beta) {
  if (candidates.size() != references.size()) throw InputError("length buckets: candidate/reference count differs");
  if (bucket_edges.empty()) throw InputError("length buckets need at least one edge");
  for (std::size_t i = 1; i < bucket_edges.size(); ++i)
    if (bucket_edges[i] <= bucket_edges[i - 1]) throw InputError("bucket edges must be strictly increasing");
  std::vector<BucketReport> out;
  for (std::size_t b = 0; b < bucket_edges.size(); ++b) {
    BucketReport bucket;
    bucket.lower = bucket_edges[b];
    bucket.upper = b + 1 < bucket_edges.size() ? bucket_edges[b + 1] : 0;
    std::vector<std::string> c, r;
    for (std::size_t k = 0; k < references.size(); ++k) {
      const std::size_t len = lexical_tokens(references[k]).size();
      if (len >= bucket.lower && (bucket.upper == 0 || len < bucket.upper)) {
        c.push_back(candidates[k]);
        r.push_back(references[k]);
      }
    }
    bucket.empty = c.empty();
    if (!bucket.empty) bucket.metrics = score_texts(c, r, rouge_beta);
    out.push_back(bucket);
  }
  return out;
}

EvalReport build_report(std::span<const TripleExample> examples, std::span<const Prediction> predictions,
                        std::span<const std::size_t> bucket_edges, double rouge_beta) {
  if (examples.size() != predictions.size()) throw InputError("one prediction per example is required");
  EvalReport report;
  report.samples = examples.size();
  std::vector<std::string> fixed_pred, fixed_ref, commit_pred, commit_ref;
  bool all_commits = !predictions.empty();
  std::size_t tag_hits = 0, tag_total = 0;
  for (std::size_t k = 0; k < examples.size(); ++k) {
    fixed_pred.push_back(predictions[k].fixed);
    fixed_ref.push_back(examples[k].fixed);
    if (predictions[k].commit) {
      commit_pred.push_back(*predictions[k].commit);
      commit_ref.push_back(examples[k].message);
    } else {
      all_commits = false;
    }
    if (predictions[k].line_tags.size() == examples[k].line_tags.size()) {
      for (std::size_t i = 0; i < examples[k].line_tags.size(); ++i)
        tag_hits += predictions[k].line_tags[i] == examples[k].line_tags[i];
      tag_total += examples[k].line_tags.size();
    }
  }
  report.repair = score_texts(fixed_pred, fixed_ref, rouge_beta);
  report.repair_buckets = length_bucket_report(fixed_pred, fixed_ref, bucket_edges, rouge_beta);
  if (all_commits) {
    report.commit = score_texts(commit_pred, commit_ref, rouge_beta);
    report.commit_buckets = length_bucket_report(commit_pred, commit_ref, bucket_edges, rouge_beta);
  }
  if (tag_total) report.tag_accuracy = 100.0 * static_cast<double>(tag_hits) / static_cast<double>(tag_total);
  return report;
}

EvalReport naive_baseline(std::span<const TripleExample> examples, std::span<const std::size_t> bucket_edges) {
  std::vector<Prediction> copies;
  copies.reserve(examples.size());
  for (const auto& ex : examples) copies.push_back({ex.buggy, std::nullopt, {}});
  return build_report(examples, copies, bucket_edges);
}

Prediction predict(const TrainedSystem& system, const TripleExample& example, const BpeModel& bpe,
                   const DecodeStrategy& strategy, bool oracle_fixed) {
  if (example.buggy_tokens.empty()) throw InputError("example is not encoded");
  Prediction p;
  if (system.joint) {
    if (oracle_fixed) throw ContractError("oracle mode applies to the cascaded commit model only");
    const Generation g = system.joint->generate(example.buggy_tokens, strategy);
    p.fixed = bpe.decode(g.fixed);
    p.commit = bpe.decode(g.commit);
    p.line_tags = g.line_tags;
    return p;
  }
  if (!system.repair) throw ContractError("system has neither a joint nor a repair model");
  const Generation g = system.repair->generate(example.buggy_tokens, strategy);
  p.fixed = bpe.decode(g.fixed);
  p.line_tags = g.line_tags;
  if (system.commit) {
    const std::string change = build_change_input(example.buggy, oracle_fixed ? example.fixed : p.fixed);
    TokenIds source = has_language_tag(example) ? bpe.encode(change, example.language) : bpe.encode(change);
    if (change.empty() || source.size() > system.commit->config().max_len) {
      p.commit = "";
    } else {
      p.commit = bpe.decode(system.commit->generate_fixed(source, strategy));
    }
  }
  return p;
}

std::vector<Prediction> predict_all(const TrainedSystem& system, std::span<const TripleExample> examples,
                                    const BpeModel& bpe, const DecodeStrategy& strategy, bool oracle_fixed) {
  std::vector<Prediction> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(predict(system, ex, bpe, strategy, oracle_fixed));
  return out;
}

ForcedAccuracy teacher_forced_accuracy(const Model& model, std::span<const TrainItem> items) {
  NoGradGuard no_grad;
  std::size_t fixed_hits = 0, fixed_total = 0, commit_hits = 0, commit_total = 0, tag_hits = 0, tag_total = 0;
  const bool joint = model.config().architecture == Architecture::joint;
  for (const auto& item : items) {
    const Tensor z_b = model.encode_buggy(item.source);
    const auto tf = teacher_forcing(item.target);
    const FixedDecoding dec = model.decode_fixed(z_b, tf.input, {}, item.source);
    fixed_hits += count_hits(dec.logits, tf.labels);
    fixed_total += tf.labels.size();
    if (joint && !item.commit.empty()) {
      const auto tc = teacher_forcing(item.commit);
      commit_hits += count_hits(model.decode_commit(z_b, dec.hidden, tc.input), tc.labels);
      commit_total += tc.labels.size();
    }
    const auto cls = cls_positions(item.source);
    if (!item.line_tags.empty() && cls.size() == item.line_tags.size()) {
      const auto probs = model.tag_lines(z_b, cls);
      for (std::size_t i = 0; i < probs.size(); ++i) tag_hits += (probs[i] > 0.5 ? 1 : 0) == item.line_tags[i];
      tag_total += probs.size();
    }
  }
  const auto frac = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  return {frac(fixed_hits, fixed_total), frac(commit_hits, commit_total), frac(tag_hits, tag_total)};
}

void write_report_json(const std::filesystem::path& path, const EvalReport& report) {
  json j;
  j["samples"] = report.samples;
  const auto buckets = [](const std::vector<BucketReport>& bs) {
    json arr = json::array();
    for (const auto& b : bs) {
      json e = metrics_json(b.metrics);
      e["lower"] = b.lower;
      e["upper"] = b.upper == 0 ? json(nullptr) : json(b.upper);
      e["empty"] = b.empty;
      arr.push_back(e);
    }
    return arr;
  };
  if (report.repair) {
    j["repair"] = metrics_json(*report.repair);
    j["repair_buckets"] = buckets(report.repair_buckets);
  }
  if (report.commit) {
    j["commit"] = metrics_json(*report.commit);
    j["commit_buckets"] = buckets(report.commit_buckets);
  }
  if (report.tag_accuracy) j["tag_accuracy"] = *report.tag_accuracy;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "task,bleu4,rouge_l,exact_match,count\n";
  for (const auto& [name, m] : {std::pair{"repair", report.repair}, std::pair{"commit", report.commit}}) {
    if (m) out << name << ',' << m->bleu4 << ',' << m->rouge_l << ',' << m->exact_match << ',' << m->count << '\n';
  }
}

void write_buckets_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "task,lower,upper,count,empty,bleu4,rouge_l,exact_match\n";
  for (const auto& [name, buckets] :
       {std::pair{"repair", &report.repair_buckets}, std::pair{"commit", &report.commit_buckets}}) {
    for (const auto& b : *buckets) {
      out << name << ',' << b.lower << ',' << (b.upper ? std::to_string(b.upper) : "inf") << ',' << b.metrics.count
          << ',' << (b.empty ? 1 : 0) << ',' << b.metrics.bleu4 << ',' << b.metrics.rouge_l << ','
          << b.metrics.exact_match << '\n';
    }
  }
}

void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : predictions) {
    json j = {{"fixed", p.fixed}, {"line_tags", p.line_tags}};
    j["message"] = p.commit ? json(*p.commit) : json(nullptr);
    out << j.dump() << '\n';
  }
}

}  // namespace fixcommit
