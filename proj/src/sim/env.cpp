#include "srlc/sim/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "srlc/common/error.hpp"

namespace srlc::sim {

double tracking_reward(std::span<const double> y, std::span<const double> y_ref) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - y_ref[i];
    s += e * e;
  }
  return -s;
}

Observation Env::observe() {
  Observation obs;
  obs.y = measure();
  obs.d = schedule_.disturbance(t_);
  obs.y_ref = schedule_.reference(t_);
  last_obs_ = obs;
  return obs;
}

Observation Env::reset(std::uint64_t seed) {
  schedule_.reseed(seed);
  t_ = 0;
  needs_reset_ = false;
  reset_plant(seed);
  return observe();
}

StepResult Env::step(std::span<const double> u) {
  if (needs_reset_) throw std::logic_error("Env::step called before reset");
  const EnvDims dm = dims();
  if (static_cast<int>(u.size()) != dm.n_u) throw ConfigError("Env::step: wrong input size");
  const ActionBounds bounds = action_bounds();
  std::vector<double> clipped(u.begin(), u.end());
  for (double& v : clipped) {
    if (!std::isfinite(v)) throw NumericError("Env::step: non-finite input");
    v = std::clamp(v, bounds.lo, bounds.hi);
  }
  const std::vector<double> d = schedule_.disturbance(t_);
  advance_plant(clipped, d);
  ++t_;
  StepResult r;
  r.obs = observe();
  r.reward = tracking_reward(r.obs.y, r.obs.y_ref);
  r.done = t_ >= episode_length();
  if (r.done) needs_reset_ = true;
  return r;
}

LinearEnv::LinearEnv(LinearEnvConfig cfg)
    : Env(Schedule(cfg.schedule, static_cast<int>(cfg.system.C.rows()), cfg.system.n_d)),
      cfg_(std::move(cfg)) {
  cfg_.system.validate();
  if (cfg_.u_lo > cfg_.u_hi) throw ConfigError("linear env: u_lo > u_hi");
  x_ = Eigen::VectorXd::Zero(cfg_.system.A.rows());
}

EnvDims LinearEnv::dims() const {
  const LinearDims d = cfg_.system.dims();
  return {d.n_x, d.n_u, d.n_y, d.n_d};
}

std::vector<double> LinearEnv::true_state() const {
  return std::vector<double>(x_.data(), x_.data() + x_.size());
}

void LinearEnv::reset_plant(std::uint64_t seed) {
  x_.setZero();
  noise_ = make_rng(seed, Stream::kEnvNoise);
}

void LinearEnv::advance_plant(std::span<const double> u, std::span<const double> d) {
  const LinearDims dm = cfg_.system.dims();
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd w(dm.n_w);
  for (int i = 0; i < dm.n_w; ++i) w(i) = cfg_.system.w_std * normal(noise_);
  const Eigen::VectorXd uv = Eigen::Map<const Eigen::VectorXd>(u.data(), dm.n_u);
  const Eigen::VectorXd dv = Eigen::Map<const Eigen::VectorXd>(d.data(), dm.n_d);
  x_ = linear_step(cfg_.system, x_, uv, w, dv, Eigen::VectorXd::Zero(dm.n_y)).x_next;
}

std::vector<double> LinearEnv::measure() {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::VectorXd y = cfg_.system.C * x_;
  std::vector<double> out(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    out[static_cast<std::size_t>(i)] = y(i) + cfg_.system.v_std * normal(noise_);
  }
  return out;
}

TankEnv::TankEnv(TankEnvConfig cfg) : Env(Schedule(cfg.schedule, 1, 1)), cfg_(cfg) {
  cfg_.tank.validate();
  if (!(0.0 <= cfg_.init_lo && cfg_.init_lo <= cfg_.init_hi && cfg_.init_hi <= 1.0)) {
    throw ConfigError("tank env: need 0 <= init_lo <= init_hi <= 1");
  }
}

void TankEnv::reset_plant(std::uint64_t seed) {
  Rng init = make_rng(seed, Stream::kInitialState);
  std::uniform_real_distribution<double> level(cfg_.init_lo * cfg_.tank.x_max,
                                                cfg_.init_hi * cfg_.tank.x_max);
  x_[0] = level(init);
  x_[1] = level(init);
  noise_ = make_rng(seed, Stream::kEnvNoise);
}

void TankEnv::advance_plant(std::span<const double> u, std::span<const double> d) {
  const TankRates rates = tank_rates(cfg_.tank, x_[0], x_[1], u[0], d[0]);
  x_ = euler_step(x_, rates, cfg_.tank);
}

std::vector<double> TankEnv::measure() {
  double y = x_[1];
  if (cfg_.v_std > 0.0) {
    std::normal_distribution<double> normal(0.0, cfg_.v_std);
    y += normal(noise_);
  }
  return {y};
}

}  // namespace srlc::sim
