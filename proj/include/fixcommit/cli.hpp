#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fixcommit/joint_model.hpp"
#include "fixcommit/training.hpp"

namespace fixcommit {

inline constexpr std::string_view kToolVersion = "0.1.0";
/// Default data directory for --input (prepare) and --data (train, eval).
inline constexpr const char* kDataDirEnv = "FIXCOMMIT_DATA_DIR";

/// Declarative run configuration. Every section is optional; unknown fields
/// are rejected.
///
///   {"bpe": {"merges": 1000},
///    "split": {"train": 0.8, "valid": 0.1, "test": 0.1},
///    "multilingual": false,
///    "model": {...}, "train": {...},
///    "eval": {"beam": 1, "buckets": [0, 10, 20, 50, 100]}}
struct CliConfig {
  std::size_t bpe_merges = 1000;
  std::array<double, 3> split = {0.8, 0.1, 0.1};
  bool multilingual = false;
  ModelConfig model;
  TrainConfig train;
  std::size_t beam = 1;
  std::vector<std::size_t> buckets = {0, 10, 20, 50, 100};

  void validate() const;
  std::string to_json() const;
  static CliConfig from_json(std::string_view text);
  static CliConfig load(const std::filesystem::path& path);
};

/// Provenance of one command run. Everything except wall-clock fields is a
/// function of the inputs, configs and seed.
struct RunManifest {
  std::string command;
  std::string config_path;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string tool_version{kToolVersion};
  std::string started_at;
  double wall_clock_seconds = 0.0;

  std::string to_json() const;
};

struct PrepareArgs {
  std::filesystem::path input;  // JSON-lines records
  std::filesystem::path out;
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

struct TrainArgs {
  std::filesystem::path data;  // output directory of prepare
  std::filesystem::path out;
  std::filesystem::path config;  // defaults to the config stored with the data
  Regime regime = Regime::joint;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> max_steps;
  bool force = false;
  bool resume = false;
};

struct EvalArgs {
  std::filesystem::path model;  // empty: naive copy baseline
  std::filesystem::path data;
  std::string split = "test";
  std::filesystem::path out;
  std::filesystem::path config;
  std::optional<std::size_t> beam;
  bool oracle = false;
  bool force = false;
};

struct RepairArgs {
  std::filesystem::path model;
  std::filesystem::path input;  // empty or "-": standard input
  std::string language;         // defaults to the first corpus language
  std::optional<std::size_t> beam;
  std::filesystem::path out;
  bool force = false;
};

/// prepare: curate -> split -> learn BPE on the training split -> encode ->
/// drop examples that exceed the model length limit -> stats.
RunManifest cmd_prepare(const PrepareArgs& args);
/// train: one checkpoint per trained role plus a JSON-lines step log.
RunManifest cmd_train(const TrainArgs& args);
/// eval: report JSON/CSV, length buckets and predictions.
RunManifest cmd_eval(const EvalArgs& args);
/// repair: single-snippet inference; the human-readable result goes to out.
RunManifest cmd_repair(const RepairArgs& args, std::istream& in, std::ostream& out);

/// Full command line without the program name. Returns the exit code:
/// 0 success, 1 contract/input error, 2 I/O error.
int run_cli(std::vector<std::string> args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace fixcommit
