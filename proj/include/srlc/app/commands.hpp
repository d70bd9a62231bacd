#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "srlc/analysis/analysis.hpp"
#include "srlc/app/config.hpp"
#include "srlc/app/verify.hpp"

namespace srlc::app {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitAbort = 3;

struct TrainArgs {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;  // defaults to run.output_dir
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<long> steps;
};

// Writes {out}/config.ini (the resolved config after overrides) and, per seed,
// {out}/seed_{s}/train.csv plus checkpoints. Seeds run on up to SRLC_THREADS
// worker threads. Throws ConfigError or TrainingAbort; returns the run dir.
std::filesystem::path cmd_train(const TrainArgs& args, std::ostream& log);

enum class EvalMode { kTrack, kAblate };
EvalMode parse_eval_mode(const std::string& s);

struct EvalArgs {
  std::filesystem::path run_dir;
  std::optional<std::filesystem::path> checkpoint;  // default: every seed's final.srlc
  EvalMode mode = EvalMode::kTrack;
  std::optional<std::filesystem::path> out;  // default: {run_dir}/eval.csv or eval_ablate.csv
};

// Throws ConfigError on a missing checkpoint or one whose variant or dims
// differ from the run's config.
analysis::EvalReport cmd_eval(const EvalArgs& args, std::ostream& log);

struct StatefitArgs {
  std::filesystem::path run_dir;
  std::optional<std::filesystem::path> checkpoint;
};

struct StatefitSeedResult {
  std::uint64_t seed = 0;
  analysis::StateFitResult fit;
};

// Writes seed_{s}/statefit.csv and seed_{s}/scatter.csv.
std::vector<StatefitSeedResult> cmd_statefit(const StatefitArgs& args, std::ostream& log);

// Runs the oracle suite and prints the table; returns kExitOk or kExitVerifyFailed.
int cmd_verify(const VerifyOptions& options, std::ostream& out);

// Loads a checkpoint and checks it against the config's policy section.
policy::Policy load_matching_checkpoint(const std::filesystem::path& path, const ExperimentConfig& config);

}  // namespace srlc::app
