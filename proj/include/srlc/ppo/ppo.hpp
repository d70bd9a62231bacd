#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "srlc/common/random.hpp"
#include "srlc/gradcore/param_store.hpp"
#include "srlc/gradcore/tape.hpp"
#include "srlc/policy/policy.hpp"
#include "srlc/sim/env.hpp"

namespace srlc::ppo {

struct PPOConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_eps = 0.2;
  double lr = 3e-4;
  int epochs = 10;
  int rollout_length = 2048;  // steps per env per round
  int n_envs = 4;
  int minibatch_segments = 32;
  int bptt_length = 64;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double grad_clip_norm = 0.5;
  // Multiplies the rewards the critic and advantages see; logged returns stay raw.
  double reward_scale = 1.0;
  long total_steps = 800000;
  double Kp = 0.0;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
  int segments_per_round() const { return n_envs * (rollout_length / bptt_length); }

  friend bool operator==(const PPOConfig&, const PPOConfig&) = default;
};

// One env's slice of a rollout. Index t holds what the policy saw and did at
// step t; snapshots[k] is the hidden state before step k * bptt_length.
struct EnvTrajectory {
  std::vector<sim::Observation> obs;
  std::vector<std::vector<double>> u_prev;
  std::vector<std::vector<double>> u_pre;
  std::vector<double> log_prob;
  std::vector<double> value;
  std::vector<double> reward;
  std::vector<std::uint8_t> done;
  std::vector<policy::HiddenState> snapshots;
  double bootstrap = 0.0;

  std::vector<double> advantages;
  std::vector<double> returns;
};

struct RolloutBuffer {
  int length = 0;
  int bptt_length = 0;
  std::vector<EnvTrajectory> envs;
  // Returns of episodes that finished during this rollout, in env order.
  std::vector<double> episode_returns;
};

// Runs a set of env copies with carried hidden state across rounds.
class Collector {
 public:
  Collector(const sim::Env& prototype, int n_envs, std::uint64_t seed);

  // rollout_length steps per env; resets finished episodes and their hidden
  // states. Deterministic in (seed, params, call count).
  RolloutBuffer collect(const policy::Policy& policy, const PPOConfig& cfg);

  int n_envs() const { return static_cast<int>(envs_.size()); }

 private:
  void start_episode(std::size_t i, const policy::Policy& policy);

  std::uint64_t seed_;
  std::vector<std::unique_ptr<sim::Env>> envs_;
  std::vector<sim::Observation> obs_;
  std::vector<policy::HiddenState> hidden_;
  std::vector<std::vector<double>> prev_u_;
  std::vector<Rng> rngs_;
  std::vector<std::uint64_t> episodes_;
  std::vector<double> running_return_;
  bool started_ = false;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// δ_t = r_t + γ V_{t+1} (1 - done_t) - V_t,  A_t = δ_t + γλ (1 - done_t) A_{t+1}
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const std::uint8_t> dones, double bootstrap, double gamma,
                      double lambda);

// Fills advantages/returns of every env and normalizes advantages over the
// whole buffer to zero mean and unit standard deviation.
void finalize_advantages(RolloutBuffer& buffer, double gamma, double lambda);

struct SegmentRef {
  int env = 0;
  int start = 0;
};

struct LossVars {
  grad::Var loss;
  grad::Var policy_loss;
  grad::Var value_loss;
  grad::Var entropy;
};

// Replays the segments from their stored hidden snapshots (as columns of one
// batch) and records the clipped-surrogate PPO loss on the tape.
LossVars record_loss(grad::Tape& tape, const policy::Policy& policy, const RolloutBuffer& buffer,
                     std::span<const SegmentRef> segments, const PPOConfig& cfg);

// Replayed log-probabilities for one segment, for consistency checks.
std::vector<double> replay_log_probs(const policy::Policy& policy, const RolloutBuffer& buffer,
                                     const SegmentRef& segment, double Kp);

class Adam {
 public:
  Adam(const grad::ParamStore& like, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step(grad::ParamStore& params, const grad::GradStore& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  grad::GradStore m_, v_;
};

struct LossStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;  // before clipping
};

// Epochs of shuffled minibatch updates. On a non-finite loss restores the
// parameters and optimizer state from before the round and throws
// TrainingAbort.
LossStats ppo_update(policy::Policy& policy, Adam& optimizer, const RolloutBuffer& buffer,
                     const PPOConfig& cfg, Rng& shuffle_rng);

struct TrainRecord {
  long step = 0;
  double mean_return = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
  double seconds = 0.0;  // 0 unless wall time recording is enabled

  // Bitwise, so NaN returns (no finished episode yet) compare equal.
  friend bool operator==(const TrainRecord& a, const TrainRecord& b) {
    auto bits = [](double v) { return std::bit_cast<std::uint64_t>(v); };
    return a.step == b.step && bits(a.mean_return) == bits(b.mean_return) &&
           bits(a.policy_loss) == bits(b.policy_loss) && bits(a.value_loss) == bits(b.value_loss) &&
           bits(a.entropy) == bits(b.entropy) && bits(a.grad_norm) == bits(b.grad_norm) &&
           bits(a.seconds) == bits(b.seconds);
  }
};

struct TrainingLog {
  std::vector<TrainRecord> records;

  static constexpr const char* kHeader =
      "step,mean_return,policy_loss,value_loss,entropy,grad_norm,seconds";
  void write_csv(const std::filesystem::path& path) const;
  static TrainingLog read_csv(const std::filesystem::path& path);
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: write nothing
  long checkpoint_every = 0;      // 0: only the final checkpoint
  bool record_wall_time = false;
  // Called after every round; return false to stop early.
  std::function<bool(const TrainRecord&, const policy::Policy&)> on_round;
};

struct TrainResult {
  policy::Policy policy;
  TrainingLog log;
};

// Alternates collection and updates until cfg.total_steps env steps.
TrainResult train(const sim::Env& prototype, policy::Policy initial, const PPOConfig& cfg,
                  const TrainOptions& options = {});

// Writes {dir}/{name}.srlc and the {dir}/{name}.meta sidecar.
void save_checkpoint(const policy::Policy& policy, const std::filesystem::path& dir,
                     const std::string& name);
// Loads a checkpoint and its sidecar. Throws ConfigError on missing or
// mismatched files.
policy::Policy load_checkpoint(const std::filesystem::path& srlc_path);

}  // namespace srlc::ppo
