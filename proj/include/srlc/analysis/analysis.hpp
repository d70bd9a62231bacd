#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "srlc/lqg/lqg.hpp"
#include "srlc/policy/policy.hpp"
#include "srlc/sim/env.hpp"

namespace srlc::analysis {

// Closed-loop controller driven by observations only.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual void reset() = 0;
  virtual std::vector<double> act(const sim::Observation& obs) = 0;
  // Internal state estimate after the latest act(); empty if none.
  virtual std::vector<double> estimate() const { return {}; }
};

// Deterministic (or sampling) policy with its P-controller prior. With
// `ablate_d` the measured disturbance is replaced by zeros before it reaches
// the policy.
class PolicyController : public Controller {
 public:
  PolicyController(const policy::Policy& policy, double Kp, sim::ActionBounds bounds,
                   bool ablate_d = false, bool deterministic = true, std::uint64_t seed = 0);
  void reset() override;
  std::vector<double> act(const sim::Observation& obs) override;
  std::vector<double> estimate() const override { return hidden_.xhat; }
  const policy::HiddenState& hidden() const { return hidden_; }

 private:
  const policy::Policy* policy_;
  double Kp_;
  sim::ActionBounds bounds_;
  bool ablate_d_;
  bool deterministic_;
  std::uint64_t seed_;
  Rng rng_;
  policy::HiddenState hidden_;
  std::vector<double> prev_u_;
};

class LqgAdapter : public Controller {
 public:
  explicit LqgAdapter(lqg::LqgController ctl) : ctl_(std::move(ctl)) {}
  void reset() override { ctl_.reset(); }
  std::vector<double> act(const sim::Observation& obs) override {
    return ctl_.act(obs.y, obs.y_ref, obs.d);
  }
  std::vector<double> estimate() const override {
    return {ctl_.estimate().data(), ctl_.estimate().data() + ctl_.estimate().size()};
  }

 private:
  lqg::LqgController ctl_;
};

class PAdapter : public Controller {
 public:
  explicit PAdapter(double Kp) : Kp_(Kp) {}
  void reset() override {}
  std::vector<double> act(const sim::Observation& obs) override;

 private:
  double Kp_;
};

// Evenly spaced levels over [lo, hi], both ends included.
std::vector<double> level_grid(double lo, double hi, int n);

struct StatePairs {
  Eigen::MatrixXd xhat;    // samples x estimate dims
  Eigen::MatrixXd x_true;  // samples x true-state dims
};

// One deterministic episode per level with the reference held at that level;
// records (x̂_t, x_t) for t >= warmup. steps_per_level must not exceed the
// episode length.
StatePairs collect_state_pairs(Controller& controller, const sim::Env& env,
                               std::span<const double> levels, int steps_per_level, int warmup,
                               std::uint64_t seed);

struct StateFitResult {
  Eigen::MatrixXd W;           // true dims x estimate dims
  Eigen::VectorXd intercept;   // true dims
  Eigen::VectorXd r_squared;   // per true dim
  std::size_t sample_count = 0;
  bool rank_deficient = false;

  double mean_r_squared() const { return r_squared.mean(); }
};

// Least squares x_true ≈ W x̂ + c per true dimension, minimum-norm when the
// regressors are rank deficient. Throws ConfigError if there are fewer than
// ten samples per regressor.
StateFitResult fit_state_map(const Eigen::MatrixXd& xhat, const Eigen::MatrixXd& x_true);

struct EvalRow {
  std::string variant;
  std::uint64_t seed = 0;
  double level = 0.0;
  double rms_error = 0.0;  // over t >= warmup
  double mean_return = 0.0;
  double input_rms = 0.0;
  bool settled = false;    // |y - level| <= 5% of max(1, |level|) over the last 50 steps

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  double mean_rms_error() const;
  // Mean RMS error of the rows with this seed.
  double mean_rms_error(std::uint64_t seed) const;
};

struct EvalOptions {
  std::string variant;   // label written to every row
  int warmup = 50;
  std::uint64_t episode_seed = 0;  // base seed of the episode realizations
};

// One episode per level with the configured disturbance schedule; the seed
// column carries `seed`.
EvalReport evaluate_controller(Controller& controller, const sim::Env& env,
                               std::span<const double> levels, std::uint64_t seed,
                               const EvalOptions& options);

EvalReport evaluate_tracking(const policy::Policy& policy, double Kp, const sim::Env& env,
                             std::span<const double> levels, std::uint64_t seed,
                             const EvalOptions& options);
// As evaluate_tracking, but the policy sees d = 0 while the plant gets the true d.
EvalReport ablate_feedforward(const policy::Policy& policy, double Kp, const sim::Env& env,
                              std::span<const double> levels, std::uint64_t seed,
                              const EvalOptions& options);

// Mean undiscounted return over `episodes` episodes of the env's own
// reference and disturbance schedule; episode i is seeded by
// derive_seed(seed, Episode, i).
double mean_episode_return(Controller& controller, const sim::Env& env, int episodes,
                           std::uint64_t seed);

// CSV files are written with 17 significant digits.
inline constexpr const char* kEvalHeader = "variant,seed,level,rms_error,mean_return,input_rms";
inline constexpr const char* kStateFitHeader = "true_dim,r_squared,n_samples";

void write_eval_csv(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_eval_csv(const std::filesystem::path& path);
void write_statefit_csv(const StateFitResult& fit, const std::filesystem::path& path);
// (true_dim, r_squared, n_samples) rows.
std::vector<std::tuple<int, double, std::size_t>> read_statefit_csv(const std::filesystem::path& path);
// One row per sample: true state followed by the fitted reconstruction.
void write_scatter_csv(const StatePairs& pairs, const StateFitResult& fit,
                       const std::filesystem::path& path);

}  // namespace srlc::analysis
