#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "srlc/policy/policy.hpp"
#include "srlc/ppo/ppo.hpp"
#include "srlc/sim/env.hpp"

namespace srlc::app {

struct EnvSection {
  std::string kind = "linear";  // linear | tank
  sim::ScheduleConfig schedule;

  // linear
  std::string system = "random";  // random | scalar
  int n_x = 4;
  std::uint64_t system_seed = 0;
  double radius_max = 0.95;
  double radius_min = 0.1;
  double scalar_a = 0.9;
  double scalar_b = 1.0;
  double scalar_c = 1.0;
  double w_std = 0.01;
  double v_std = 0.01;
  bool normalize_dc_gain = true;
  double u_lo = -10.0;
  double u_hi = 10.0;

  // tank
  sim::TankConfig tank;
  double init_lo = 0.2;
  double init_hi = 0.8;

  friend bool operator==(const EnvSection&, const EnvSection&) = default;
};

struct PolicySection {
  policy::Variant variant = policy::Variant::kStructure1;
  policy::PolicyDims dims;
  policy::SignalScaling scaling;
  double Kp = 0.0;

  friend bool operator==(const PolicySection&, const PolicySection&) = default;
};

struct RunSection {
  std::vector<std::uint64_t> seeds{0};
  long total_steps = 800000;
  long checkpoint_every = 0;
  std::string output_dir = "runs";
  bool record_wall_time = false;
  int eval_levels = 5;
  int statefit_levels = 100;
  int statefit_steps = 150;
  int warmup = 50;

  friend bool operator==(const RunSection&, const RunSection&) = default;
};

struct ExperimentConfig {
  EnvSection env;
  PolicySection policy;
  ppo::PPOConfig ppo;  // seed, Kp and total_steps are filled from the other sections
  RunSection run;

  // Throws ConfigError. Also enforces that a structured policy has fewer
  // parameters than the unstructured baseline at the same io dims.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Sectioned key = value text; '#' and ';' start comments. Every section must
// be present and unknown sections or keys are errors. Messages name the line.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Every field written explicitly; parse_config(to_text(c)) == c.
std::string to_text(const ExperimentConfig& c);

// "0,1,2" or "0..4" or a mix: "0..2,7".
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

std::unique_ptr<sim::Env> make_env(const EnvSection& env);
// PPO settings for one training seed.
ppo::PPOConfig ppo_for_seed(const ExperimentConfig& c, std::uint64_t seed);

}  // namespace srlc::app
