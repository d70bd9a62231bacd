#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "srlc/common/random.hpp"
#include "srlc/sim/linear_system.hpp"
#include "srlc/sim/schedule.hpp"
#include "srlc/sim/tank.hpp"

namespace srlc::sim {

struct Observation {
  std::vector<double> y;
  std::vector<double> d;      // present (possibly all zero) for every env
  std::vector<double> y_ref;
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
};

struct EnvDims {
  int n_x = 1;
  int n_u = 1;
  int n_y = 1;
  int n_d = 1;
};

struct ActionBounds {
  double lo = 0.0;
  double hi = 0.0;
};

// -||y - y_ref||^2
double tracking_reward(std::span<const double> y, std::span<const double> y_ref);

// Partially observable plant with scheduled reference and measurable
// disturbance. The observation never contains the true state; true_state() is
// for logging and analysis only.
class Env {
 public:
  virtual ~Env() = default;

  Observation reset(std::uint64_t seed);
  // Clips u to action_bounds(), advances one sample. Must not be called after
  // an episode ended without a reset.
  StepResult step(std::span<const double> u);

  virtual EnvDims dims() const = 0;
  virtual ActionBounds action_bounds() const = 0;
  virtual std::vector<double> true_state() const = 0;
  virtual std::unique_ptr<Env> clone() const = 0;

  int time() const { return t_; }
  int episode_length() const { return schedule_.config().episode_length; }
  Schedule& schedule() { return schedule_; }
  const Schedule& schedule() const { return schedule_; }
  // Measured output of the latest observation.
  const Observation& last_observation() const { return last_obs_; }

 protected:
  explicit Env(Schedule schedule) : schedule_(std::move(schedule)) {}

  virtual void reset_plant(std::uint64_t seed) = 0;
  virtual void advance_plant(std::span<const double> u, std::span<const double> d) = 0;
  // Measured output of the current state (may draw measurement noise).
  virtual std::vector<double> measure() = 0;

 private:
  Observation observe();

  Schedule schedule_;
  int t_ = 0;
  bool needs_reset_ = true;
  Observation last_obs_;
};

struct LinearEnvConfig {
  LinearSystem system;
  ScheduleConfig schedule;
  double u_lo = -10.0;
  double u_hi = 10.0;
};

class LinearEnv : public Env {
 public:
  explicit LinearEnv(LinearEnvConfig cfg);

  EnvDims dims() const override;
  ActionBounds action_bounds() const override { return {cfg_.u_lo, cfg_.u_hi}; }
  std::vector<double> true_state() const override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<LinearEnv>(*this); }
  const LinearSystem& system() const { return cfg_.system; }

 protected:
  void reset_plant(std::uint64_t seed) override;
  void advance_plant(std::span<const double> u, std::span<const double> d) override;
  std::vector<double> measure() override;

 private:
  LinearEnvConfig cfg_;
  Eigen::VectorXd x_;
  Rng noise_;
};

struct TankEnvConfig {
  TankConfig tank;
  ScheduleConfig schedule;
  double v_std = 0.0;
  double init_lo = 0.2;  // initial levels uniform in [init_lo, init_hi] * x_max
  double init_hi = 0.8;
};

class TankEnv : public Env {
 public:
  explicit TankEnv(TankEnvConfig cfg);

  EnvDims dims() const override { return {2, 1, 1, 1}; }
  ActionBounds action_bounds() const override { return {0.0, cfg_.tank.u_max}; }
  std::vector<double> true_state() const override { return {x_[0], x_[1]}; }
  std::unique_ptr<Env> clone() const override { return std::make_unique<TankEnv>(*this); }
  const TankConfig& tank() const { return cfg_.tank; }
  // Overwrites the levels; for tests and equilibrium studies.
  void set_levels(double x1, double x2) { x_ = {x1, x2}; }

 protected:
  void reset_plant(std::uint64_t seed) override;
  void advance_plant(std::span<const double> u, std::span<const double> d) override;
  std::vector<double> measure() override;

 private:
  TankEnvConfig cfg_;
  std::array<double, 2> x_{0.0, 0.0};
  Rng noise_;
};

}  // namespace srlc::sim
