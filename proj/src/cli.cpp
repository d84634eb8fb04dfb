#include "fixcommit/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <iterator>
#include <json.hpp>
#include <set>
#include <sstream>

#include "fixcommit/bpe.hpp"
#include "fixcommit/dataset.hpp"
#include "fixcommit/errors.hpp"
#include "fixcommit/evaluation.hpp"

namespace fixcommit {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kConfigFile = "config.json";
constexpr const char* kCorpusFile = "corpus.json";
constexpr const char* kBpeFile = "bpe.json";
constexpr const char* kSystemFile = "system.json";
constexpr const char* kManifestFile = "manifest.json";

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

/// Creates out; an existing non-empty directory needs force (or resume).
void claim_output_dir(const fs::path& out, bool force, bool resume = false) {
  if (out.empty()) throw InputError("--out is required");
  std::error_code ec;
  if (fs::exists(out, ec)) {
    if (!fs::is_directory(out)) throw IoError(out.string() + " exists and is not a directory");
    if (!fs::is_empty(out) && !force && !resume) {
      throw ContractError("output directory " + out.string() + " is not empty; pass --force to overwrite");
    }
  }
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
}

fs::path data_dir_or_env(const fs::path& given, const char* flag) {
  if (!given.empty()) return given;
  if (const char* env = std::getenv(kDataDirEnv); env && *env) return env;
  throw InputError(std::string(flag) + " is required (or set " + kDataDirEnv + ")");
}

std::string iso_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

class ManifestTimer {
 public:
  explicit ManifestTimer(RunManifest& m) : manifest_(m), start_(std::chrono::steady_clock::now()) {
    manifest_.started_at = iso_now();
  }
  void finish(const fs::path& out) {
    manifest_.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_text(out / kManifestFile, manifest_.to_json());
  }

 private:
  RunManifest& manifest_;
  std::chrono::steady_clock::time_point start_;
};

CliConfig resolve_config(const fs::path& explicit_path, const fs::path& fallback_dir) {
  if (!explicit_path.empty()) return CliConfig::load(explicit_path);
  if (!fallback_dir.empty() && fs::exists(fallback_dir / kConfigFile)) return CliConfig::load(fallback_dir / kConfigFile);
  return {};
}

bool fits(const TripleExample& ex, std::size_t max_len) {
  // decoder inputs carry BOS, labels carry EOS
  return ex.buggy_tokens.size() <= max_len && ex.fixed_tokens.size() + 1 <= max_len &&
         ex.message_tokens.size() + 1 <= max_len && ex.change_tokens.size() <= max_len &&
         !ex.fixed_tokens.empty() && !ex.change_tokens.empty();
}

std::vector<TripleExample> load_split(const fs::path& dir, const std::string& split, const BpeModel& bpe,
                                      bool multilingual) {
  auto examples = read_examples(dir / (split + ".jsonl"));
  for (auto& ex : examples) encode_example(ex, bpe, multilingual);
  return examples;
}

void check_lengths(std::span<const TripleExample> examples, std::size_t max_len, const std::string& what) {
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!fits(examples[i], max_len)) {
      throw ContractError(what + " example " + std::to_string(i) + " exceeds the model length limit " +
                          std::to_string(max_len) + "; prepare the corpus with the same model.max_len");
    }
  }
}

std::vector<std::string> roles_of(const TrainedSystem& sys) {
  std::vector<std::string> roles;
  if (sys.joint) roles.push_back("joint");
  if (sys.teacher) roles.push_back("teacher");
  if (sys.back) roles.push_back("back");
  if (sys.repair) roles.push_back("repair");
  if (sys.commit) roles.push_back("commit");
  return roles;
}

fs::path checkpoint_path(const fs::path& dir, std::string_view role) { return dir / (std::string(role) + ".ckpt"); }

struct LoadedSystem {
  TrainedSystem system;
  BpeModel bpe;
  CliConfig config;
  std::vector<std::string> inputs;
};

LoadedSystem load_system(const fs::path& dir) {
  const json sys = parse_json_file(dir / kSystemFile);
  LoadedSystem loaded{TrainedSystem{}, BpeModel::load(dir / kBpeFile), CliConfig::load(dir / kConfigFile), {}};
  try {
    loaded.system.regime = parse_regime(sys.at("regime").get<std::string>());
    for (const auto& role : sys.at("roles")) {
      const std::string r = role.get<std::string>();
      const fs::path path = checkpoint_path(dir, r);
      Model m = Model::load(path);
      if (m.config().vocab_size != loaded.bpe.vocab_size()) {
        throw ContractError("checkpoint " + path.string() + " has vocabulary " +
                            std::to_string(m.config().vocab_size) + " but the BPE model has " +
                            std::to_string(loaded.bpe.vocab_size()));
      }
      loaded.inputs.push_back(path.string());
      if (r == "joint") loaded.system.joint.emplace(std::move(m));
      else if (r == "repair") loaded.system.repair.emplace(std::move(m));
      else if (r == "commit") loaded.system.commit.emplace(std::move(m));
      else if (r == "teacher") loaded.system.teacher.emplace(std::move(m));
      else if (r == "back") loaded.system.back.emplace(std::move(m));
      else throw ContractError("unknown role in " + (dir / kSystemFile).string() + ": " + r);
    }
  } catch (const json::exception& e) {
    throw InputError((dir / kSystemFile).string() + ": " + e.what());
  }
  if (!loaded.system.joint && !loaded.system.repair) throw ContractError(dir.string() + " holds no usable model");
  return loaded;
}

}  // namespace

// ---- config ------------------------------------------------------------------

void CliConfig::validate() const {
  if (bpe_merges == 0) throw ContractError("bpe.merges must be positive");
  ModelConfig m = model;
  if (m.vocab_size == 0) m.vocab_size = kSepId + 1;
  m.validate();
  train.validate();
  if (beam == 0) throw ContractError("eval.beam must be positive");
  if (buckets.empty()) throw ContractError("eval.buckets needs at least one edge");
  for (std::size_t i = 1; i < buckets.size(); ++i)
    if (buckets[i] <= buckets[i - 1]) throw ContractError("eval.buckets must strictly increase");
}

std::string CliConfig::to_json() const {
  json j;
  j["bpe"] = {{"merges", bpe_merges}};
  j["split"] = {{"train", split[0]}, {"valid", split[1]}, {"test", split[2]}};
  j["multilingual"] = multilingual;
  j["model"] = json::parse(model.to_json());
  j["model"].erase("vocab_size");
  j["model"].erase("architecture");
  j["train"] = json::parse(train.to_json());
  j["eval"] = {{"beam", beam}, {"buckets", buckets}};
  return j.dump(2) + "\n";
}

CliConfig CliConfig::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw InputError("config must be a JSON object");
  CliConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "bpe") {
        for (const auto& [k, v] : value.items()) {
          if (k == "merges") c.bpe_merges = v.get<std::size_t>();
          else throw InputError("unknown bpe config field: " + k);
        }
      } else if (key == "split") {
        for (const auto& [k, v] : value.items()) {
          if (k == "train") c.split[0] = v.get<double>();
          else if (k == "valid") c.split[1] = v.get<double>();
          else if (k == "test") c.split[2] = v.get<double>();
          else throw InputError("unknown split config field: " + k);
        }
      } else if (key == "multilingual") {
        c.multilingual = value.get<bool>();
      } else if (key == "model") {
        if (value.contains("vocab_size") || value.contains("architecture"))
          throw InputError("model.vocab_size and model.architecture are set by the corpus and the regime");
        c.model = ModelConfig::from_json(value.dump());
      } else if (key == "train") {
        c.train = TrainConfig::from_json(value.dump());
      } else if (key == "eval") {
        for (const auto& [k, v] : value.items()) {
          if (k == "beam") c.beam = v.get<std::size_t>();
          else if (k == "buckets") c.buckets = v.get<std::vector<std::size_t>>();
          else throw InputError("unknown eval config field: " + k);
        }
      } else {
        throw InputError("unknown config section: " + key);
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("bad config field: ") + e.what());
  }
  c.validate();
  return c;
}

CliConfig CliConfig::load(const fs::path& path) {
  try {
    return from_json(read_text(path));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::string RunManifest::to_json() const {
  json j = {{"command", command},           {"config_path", config_path}, {"seed", seed},
            {"inputs", inputs},             {"outputs", outputs},         {"tool_version", tool_version},
            {"started_at", started_at},     {"wall_clock_seconds", wall_clock_seconds}};
  return j.dump(2) + "\n";
}

// ---- commands ----------------------------------------------------------------

RunManifest cmd_prepare(const PrepareArgs& args) {
  RunManifest manifest;
  manifest.command = "prepare";
  ManifestTimer timer(manifest);
  CliConfig config = args.config.empty() ? CliConfig{} : CliConfig::load(args.config);
  if (args.seed) config.train.seed = *args.seed;
  const fs::path input = args.input.empty() ? data_dir_or_env({}, "--input") / "records.jsonl" : args.input;
  manifest.config_path = args.config.string();
  manifest.seed = config.train.seed;
  manifest.inputs = {input.string()};

  const auto records = read_records(input);
  CuratedCorpus curated = curate(records);
  if (curated.examples.empty()) {
    throw InputError("no examples left after filtering " + std::to_string(curated.counters.raw) + " records of " +
                     input.string());
  }
  std::set<std::string> language_set;
  for (const auto& ex : curated.examples) language_set.insert(ex.language);
  const std::vector<std::string> languages(language_set.begin(), language_set.end());

  CorpusSplit split = split_corpus(curated.examples, config.split, config.train.seed);
  if (split.train.empty()) throw InputError("the training split is empty; add data or raise split.train");
  std::vector<std::string> texts;
  for (const auto& ex : split.train) {
    texts.push_back(ex.buggy);
    texts.push_back(ex.fixed);
    texts.push_back(ex.message);
    texts.push_back(ex.change_input);
  }
  const BpeModel bpe = BpeModel::learn(texts, config.bpe_merges, languages);

  std::size_t dropped = 0;
  auto keep_fitting = [&](std::vector<TripleExample>& part) {
    std::vector<TripleExample> kept;
    for (auto& ex : part) {
      encode_example(ex, bpe, config.multilingual);
      if (fits(ex, config.model.max_len)) kept.push_back(std::move(ex));
      else ++dropped;
    }
    part = std::move(kept);
  };
  keep_fitting(split.train);
  keep_fitting(split.valid);
  keep_fitting(split.test);
  if (split.train.empty()) {
    throw InputError("every training example exceeds model.max_len " + std::to_string(config.model.max_len));
  }
  std::vector<MonolingualSnippet> monolingual;
  for (auto& s : curated.monolingual_fixed)
    if (language_set.count(s.language)) monolingual.push_back(std::move(s));

  std::vector<TripleExample> all;
  for (const auto* part : {&split.train, &split.valid, &split.test}) all.insert(all.end(), part->begin(), part->end());
  const StatsReport stats = corpus_stats(all);

  const fs::path& out = args.out;
  claim_output_dir(out, args.force);
  bpe.save(out / kBpeFile);
  write_examples(out / "train.jsonl", split.train);
  write_examples(out / "valid.jsonl", split.valid);
  write_examples(out / "test.jsonl", split.test);
  write_monolingual(out / "monolingual.jsonl", monolingual);
  write_stats_json(out / "stats.json", stats, &curated.counters);
  write_stats_csv(out / "stats.csv", stats);
  write_histogram_csv(out / "first_buggy_line.csv", "line", stats.first_buggy_line_histogram);
  write_histogram_csv(out / "buggy_tokens.csv", "tokens", stats.buggy_token_histogram);
  write_histogram_csv(out / "commit_tokens.csv", "tokens", stats.commit_token_histogram);
  write_text(out / kConfigFile, config.to_json());
  const json summary = {{"languages", languages},
                        {"train", split.train.size()},
                        {"valid", split.valid.size()},
                        {"test", split.test.size()},
                        {"monolingual", monolingual.size()},
                        {"dropped_overlength", dropped},
                        {"vocab_size", bpe.vocab_size()}};
  write_text(out / kCorpusFile, summary.dump(2) + "\n");
  for (const char* f : {kBpeFile, "train.jsonl", "valid.jsonl", "test.jsonl", "monolingual.jsonl", "stats.json",
                        "stats.csv", "first_buggy_line.csv", "buggy_tokens.csv", "commit_tokens.csv", kConfigFile,
                        kCorpusFile})
    manifest.outputs.push_back((out / f).string());
  timer.finish(out);
  return manifest;
}

RunManifest cmd_train(const TrainArgs& args) {
  RunManifest manifest;
  manifest.command = "train";
  ManifestTimer timer(manifest);
  const fs::path data = data_dir_or_env(args.data, "--data");
  CliConfig config = resolve_config(args.config, data);
  if (args.seed) config.train.seed = *args.seed;
  if (args.epochs) config.train.max_epochs = *args.epochs;
  if (args.max_steps) config.train.max_steps = *args.max_steps;
  config.validate();
  manifest.config_path = args.config.empty() ? (data / kConfigFile).string() : args.config.string();
  manifest.seed = config.train.seed;

  const BpeModel bpe = BpeModel::load(data / kBpeFile);
  RegimeData rd;
  rd.bpe = &bpe;
  rd.language_tags = config.multilingual;
  rd.train = load_split(data, "train", bpe, config.multilingual);
  rd.valid = load_split(data, "valid", bpe, config.multilingual);
  if (args.regime == Regime::backtranslation) {
    rd.monolingual = read_monolingual(data / "monolingual.jsonl");
    manifest.inputs.push_back((data / "monolingual.jsonl").string());
  }
  manifest.inputs.insert(manifest.inputs.begin(), {(data / kBpeFile).string(), (data / "train.jsonl").string(),
                                                   (data / "valid.jsonl").string()});
  if (rd.train.empty()) throw InputError("the training split of " + data.string() + " is empty");
  check_lengths(rd.train, config.model.max_len, "training");
  check_lengths(rd.valid, config.model.max_len, "validation");

  const fs::path& out = args.out;
  claim_output_dir(out, args.force, args.resume);
  const fs::path log_path = out / "train_log.jsonl";
  std::ofstream log(log_path, std::ios::binary | (args.resume ? std::ios::app : std::ios::trunc));
  if (!log) throw IoError("cannot write " + log_path.string());

  ModelConfig model_config = config.model;
  model_config.vocab_size = bpe.vocab_size();
  RegimeOptions options;
  options.state_dir = out / "state";
  fs::create_directories(options.state_dir);
  options.resume = args.resume;
  options.on_step = [&](std::string_view role, const StepLog& s) {
    const json line = {{"role", role},          {"step", s.step},           {"epoch", s.epoch},
                       {"l_fixed", s.loss.l_fixed}, {"l_commit", s.loss.l_commit}, {"l_tag", s.loss.l_tag},
                       {"l_kl", s.loss.l_kl},     {"total", s.loss.total},    {"lr", s.learning_rate}};
    log << line.dump() << '\n';
    log.flush();
  };
  const std::map<std::string, std::string> meta = {{"regime", regime_name(args.regime)},
                                                   {"seed", std::to_string(config.train.seed)}};
  options.on_model = [&](std::string_view role, const Model& m) { m.save(checkpoint_path(out, role), meta); };
  options.load_model = [&](std::string_view role) -> std::optional<Model> {
    const fs::path p = checkpoint_path(out, role);
    if (!fs::exists(p)) return std::nullopt;
    return Model::load(p);
  };
  const TrainedSystem sys = train_regime(args.regime, model_config, config.train, rd, options);

  const auto roles = roles_of(sys);
  bpe.save(out / kBpeFile);
  write_text(out / kConfigFile, config.to_json());
  const json system = {{"regime", regime_name(args.regime)}, {"roles", roles}};
  write_text(out / kSystemFile, system.dump(2) + "\n");
  if (args.regime == Regime::backtranslation) write_examples(out / "augmented.jsonl", sys.augmented);
  for (const auto& r : roles) manifest.outputs.push_back(checkpoint_path(out, r).string());
  for (const char* f : {kBpeFile, kConfigFile, kSystemFile, "train_log.jsonl"})
    manifest.outputs.push_back((out / f).string());
  if (args.regime == Regime::backtranslation) manifest.outputs.push_back((out / "augmented.jsonl").string());
  timer.finish(out);
  return manifest;
}

RunManifest cmd_eval(const EvalArgs& args) {
  RunManifest manifest;
  manifest.command = "eval";
  ManifestTimer timer(manifest);
  const fs::path data = data_dir_or_env(args.data, "--data");
  const fs::path split_path = data / (args.split + ".jsonl");
  if (args.split != "test" && args.split != "valid" && args.split != "train")
    throw InputError("--split must be train, valid or test");

  EvalReport report;
  std::vector<Prediction> predictions;
  std::vector<TripleExample> examples;
  CliConfig config;
  if (args.model.empty()) {
    if (args.oracle) throw ContractError("--oracle needs a trained cascaded model");
    config = resolve_config(args.config, data);
    examples = read_examples(split_path);
    report = naive_baseline(examples, config.buckets);
    for (const auto& ex : examples) predictions.push_back({ex.buggy, std::nullopt, {}});
    manifest.inputs = {split_path.string()};
  } else {
    LoadedSystem loaded = load_system(args.model);
    config = args.config.empty() ? loaded.config : CliConfig::load(args.config);
    if (args.beam) config.beam = *args.beam;
    config.validate();
    examples = load_split(data, args.split, loaded.bpe, loaded.config.multilingual);
    const Model& front = loaded.system.joint ? *loaded.system.joint : *loaded.system.repair;
    check_lengths(examples, front.config().max_len, args.split);
    const DecodeStrategy strategy = config.beam == 1 ? DecodeStrategy::greedy() : DecodeStrategy::beam(config.beam);
    predictions = predict_all(loaded.system, examples, loaded.bpe, strategy, args.oracle);
    report = build_report(examples, predictions, config.buckets);
    manifest.inputs = loaded.inputs;
    manifest.inputs.push_back(split_path.string());
  }
  if (examples.empty()) throw InputError(split_path.string() + " holds no examples");
  manifest.config_path = args.config.string();
  manifest.seed = config.train.seed;

  claim_output_dir(args.out, args.force);
  const fs::path& out = args.out;
  write_report_json(out / "report.json", report);
  write_report_csv(out / "report.csv", report);
  write_buckets_csv(out / "buckets.csv", report);
  write_predictions(out / "predictions.jsonl", predictions);
  for (const char* f : {"report.json", "report.csv", "buckets.csv", "predictions.jsonl"})
    manifest.outputs.push_back((out / f).string());
  timer.finish(out);
  return manifest;
}

RunManifest cmd_repair(const RepairArgs& args, std::istream& in, std::ostream& out) {
  RunManifest manifest;
  manifest.command = "repair";
  ManifestTimer timer(manifest);
  if (args.model.empty()) throw InputError("--model is required");
  LoadedSystem loaded = load_system(args.model);
  CliConfig config = loaded.config;
  if (args.beam) config.beam = *args.beam;
  config.validate();
  manifest.seed = config.train.seed;
  manifest.inputs = loaded.inputs;

  std::string text;
  if (args.input.empty() || args.input == "-") {
    text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    manifest.inputs.push_back("<stdin>");
  } else {
    text = read_text(args.input);
    manifest.inputs.push_back(args.input.string());
  }
  text.erase(std::remove(text.begin(), text.end(), '\r'), text.end());
  while (!text.empty() && text.back() == '\n') text.pop_back();
  if (text.find_first_not_of(" \t\n") == std::string::npos) throw InputError("the buggy snippet is empty");

  const auto& languages = loaded.bpe.languages();
  std::string language = args.language;
  if (language.empty()) {
    if (languages.empty()) throw ContractError("the BPE model has no languages");
    language = languages.front();
  }
  if (std::find(languages.begin(), languages.end(), language) == languages.end())
    throw InputError("unknown language: " + language);

  TripleExample ex;
  ex.buggy = text;
  ex.language = language;
  encode_example(ex, loaded.bpe, loaded.config.multilingual);
  const Model& front = loaded.system.joint ? *loaded.system.joint : *loaded.system.repair;
  if (ex.buggy_tokens.size() > front.config().max_len) {
    throw InputError("the buggy snippet has " + std::to_string(ex.buggy_tokens.size()) +
                     " tokens; the limit is " + std::to_string(front.config().max_len));
  }
  const DecodeStrategy strategy = config.beam == 1 ? DecodeStrategy::greedy() : DecodeStrategy::beam(config.beam);
  const Prediction p = predict(loaded.system, ex, loaded.bpe, strategy);

  std::vector<std::string> lines;
  std::istringstream split(text);
  for (std::string line; std::getline(split, line);) lines.push_back(line);
  std::ostringstream shown;
  shown << "buggy lines:\n";
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const bool buggy = i < p.line_tags.size() && p.line_tags[i] == 1;
    shown << (buggy ? "* " : "  ") << lines[i] << '\n';
  }
  shown << "fixed:\n" << p.fixed << '\n';
  shown << "message:\n" << p.commit.value_or("") << '\n';
  out << shown.str();

  claim_output_dir(args.out, args.force);
  const json result = {{"buggy", text},
                       {"language", language},
                       {"line_tags", p.line_tags},
                       {"fixed", p.fixed},
                       {"message", p.commit.value_or("")}};
  write_text(args.out / "repair.json", result.dump(2) + "\n");
  manifest.outputs = {(args.out / "repair.json").string()};
  timer.finish(args.out);
  return manifest;
}

// ---- command line ----------------------------------------------------------------

int run_cli(std::vector<std::string> args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint program repair and commit message generation", "fixcommit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  PrepareArgs prepare;
  std::optional<std::uint64_t> prepare_seed;
  auto* p = app.add_subcommand("prepare", "Curate, split, learn BPE and write corpus statistics");
  p->add_option("--input", prepare.input, "JSON-lines records (default: $" + std::string(kDataDirEnv) +
                                               "/records.jsonl)");
  p->add_option("--out", prepare.out, "Output directory")->required();
  p->add_option("--config", prepare.config, "JSON config file");
  p->add_option("--seed", prepare_seed, "Split seed (overrides train.seed)");
  p->add_flag("--force", prepare.force, "Overwrite a non-empty output directory");

  TrainArgs train;
  std::string regime = "joint";
  std::optional<std::uint64_t> train_seed;
  std::optional<std::size_t> epochs, max_steps;
  auto* t = app.add_subcommand("train", "Train the models of one regime");
  t->add_option("--data", train.data, "Prepared corpus directory (default: $" + std::string(kDataDirEnv) + ")");
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--config", train.config, "JSON config file (default: the corpus config)");
  t->add_option("--regime", regime, "cascaded|teacher_student|multitask|backtranslation|joint");
  t->add_option("--seed", train_seed, "Training seed");
  t->add_option("--epochs", epochs, "Override train.max_epochs");
  t->add_option("--max-steps", max_steps, "Override train.max_steps");
  t->add_flag("--force", train.force, "Overwrite a non-empty output directory");
  t->add_flag("--resume", train.resume, "Continue an interrupted run in --out");

  EvalArgs eval;
  std::optional<std::size_t> eval_beam;
  auto* e = app.add_subcommand("eval", "Score a trained system (or the copy baseline) on a split");
  e->add_option("--model", eval.model, "Trained system directory; omit for the naive copy baseline");
  e->add_option("--data", eval.data, "Prepared corpus directory (default: $" + std::string(kDataDirEnv) + ")");
  e->add_option("--split", eval.split, "train, valid or test");
  e->add_option("--out", eval.out, "Output directory")->required();
  e->add_option("--config", eval.config, "JSON config file");
  e->add_option("--beam", eval_beam, "Beam width (1 = greedy)");
  e->add_flag("--oracle", eval.oracle, "Feed the gold fixed code to the cascaded commit model");
  e->add_flag("--force", eval.force, "Overwrite a non-empty output directory");

  RepairArgs repair;
  std::optional<std::size_t> repair_beam;
  auto* r = app.add_subcommand("repair", "Repair one snippet and describe the change");
  r->add_option("--model", repair.model, "Trained system directory")->required();
  r->add_option("--input", repair.input, "Buggy snippet file (default: standard input)");
  r->add_option("--language", repair.language, "Snippet language (default: first corpus language)");
  r->add_option("--beam", repair_beam, "Beam width (1 = greedy)");
  r->add_option("--out", repair.out, "Output directory for repair.json and the manifest")->required();
  r->add_flag("--force", repair.force, "Overwrite a non-empty output directory");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*p) {
      prepare.seed = prepare_seed;
      cmd_prepare(prepare);
    } else if (*t) {
      train.regime = parse_regime(regime);
      train.seed = train_seed;
      train.epochs = epochs;
      train.max_steps = max_steps;
      cmd_train(train);
    } else if (*e) {
      eval.beam = eval_beam;
      cmd_eval(eval);
    } else if (*r) {
      repair.beam = repair_beam;
      cmd_repair(repair, in, out);
    }
  } catch (const IoError& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace fixcommit
