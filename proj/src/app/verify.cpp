#include "srlc/app/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>

#include "srlc/common/error.hpp"
#include "srlc/gradcore/fd_check.hpp"
#include "srlc/lqg/lqg.hpp"
#include "srlc/ppo/ppo.hpp"
#include "srlc/sim/tank.hpp"

namespace srlc::app {

namespace {

using Eigen::MatrixXd;
using grad::Array;
using grad::Tape;
using grad::Var;
using policy::Policy;
using policy::PolicyDims;
using policy::Variant;

PolicyDims dims_for(Variant v) {
  PolicyDims d;
  if (v == Variant::kStructure2) {
    d.observer = 2;
    d.ff_observer = 1;
  }
  return d;
}

Array random_array(int rows, int cols, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Array a(rows, cols);
  for (double& v : a.values()) v = n(rng);
  return a;
}

std::unique_ptr<sim::Env> linear_env() {
  sim::LinearEnvConfig cfg;
  cfg.system = sim::generate_stable_linear(3, {4, 1, 1, 1, 1}, 0.95);
  sim::normalize_dc_gain(cfg.system);
  cfg.schedule.ref_hold = 100;
  return std::make_unique<sim::LinearEnv>(cfg);
}

std::unique_ptr<sim::Env> tank_env() {
  sim::TankEnvConfig cfg;
  cfg.schedule.ref_lo = 2.0;
  cfg.schedule.ref_hi = 6.0;
  cfg.schedule.ref_hold = 100;
  cfg.schedule.disturbance = true;
  cfg.schedule.dist_hi = cfg.tank.a1;
  return std::make_unique<sim::TankEnv>(cfg);
}

CheckResult timed(const std::function<CheckResult()>& body) {
  const auto start = std::chrono::steady_clock::now();
  CheckResult r = body();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

grad::FdCheckOptions fd_options(const VerifyOptions& o) {
  grad::FdCheckOptions f;
  f.seed = o.seed;
  f.corrupt = o.inject_fault;
  return f;
}

}  // namespace

CheckResult check_policy_gradient(Variant variant, const VerifyOptions& options) {
  return timed([&] {
    constexpr int kBatch = 3;
    constexpr int kSteps = 6;
    const PolicyDims d = dims_for(variant);
    const Policy p = Policy::init(options.seed + 11, variant, d);
    std::mt19937_64 rng(options.seed + 101);

    struct StepData {
      Array y, dist, u_prev, y_ref, c_mean, c_value;
    };
    std::vector<StepData> data;
    for (int t = 0; t < kSteps; ++t) {
      data.push_back({random_array(d.n_y, kBatch, rng, 1.0), random_array(d.n_d, kBatch, rng, 1.0),
                      random_array(d.n_u, kBatch, rng, 1.0), random_array(d.n_y, kBatch, rng, 1.0),
                      random_array(d.n_u, kBatch, rng, 1.0), random_array(1, kBatch, rng, 1.0)});
    }
    const policy::HiddenState h = p.initial_hidden();
    const Array xhat0 = random_array(static_cast<int>(h.xhat.size()), kBatch, rng, 0.3);
    const Array xd0 = random_array(static_cast<int>(h.xd.size()), kBatch, rng, 0.3);
    const Array critic0 = random_array(static_cast<int>(h.critic.size()), kBatch, rng, 0.3);

    auto program = [&](Tape& tape) {
      policy::StepInputs in;
      in.xhat_prev = tape.input(xhat0);
      if (!h.xd.empty()) in.xd_prev = tape.input(xd0);
      if (!h.critic.empty()) in.critic_prev = tape.input(critic0);
      Var total;
      for (const StepData& s : data) {
        in.y = tape.input(s.y);
        in.d = tape.input(s.dist);
        in.u_prev = tape.input(s.u_prev);
        in.y_ref = tape.input(s.y_ref);
        const policy::StepVars out = p.step(tape, in);
        const Var term = tape.add(tape.mean(tape.mul(tape.input(s.c_mean), out.u_mean)),
                                  tape.mean(tape.mul(tape.input(s.c_value), out.value)));
        total = total.valid() ? tape.add(total, term) : term;
        in.xhat_prev = out.xhat;
        in.xd_prev = out.xd;
        in.critic_prev = out.critic;
      }
      return total;
    };
    CheckResult r;
    r.name = std::string("fd_policy_") + std::string(policy::variant_name(variant));
    r.tolerance = 1e-5;
    r.measured = grad::fd_check(program, p.params(), options.probes, options.epsilon,
                                fd_options(options));
    r.passed = r.measured < r.tolerance;
    r.detail = std::to_string(policy::param_count(variant, d)) + " params, " +
               std::to_string(options.probes) + " probes";
    return r;
  });
}

CheckResult check_ppo_loss_gradient(Variant variant, const VerifyOptions& options) {
  return timed([&] {
    ppo::PPOConfig cfg;
    cfg.rollout_length = 32;
    cfg.bptt_length = 16;
    cfg.n_envs = 2;
    cfg.minibatch_segments = 2;
    cfg.entropy_coef = 0.01;
    cfg.Kp = variant == Variant::kStructure2 ? 1.0 : 0.5;
    const std::unique_ptr<sim::Env> env = variant == Variant::kStructure2 ? tank_env() : linear_env();
    const Policy behaviour = Policy::init(options.seed + 21, variant, dims_for(variant));
    ppo::Collector collector(*env, cfg.n_envs, options.seed + 5);
    ppo::RolloutBuffer buffer = collector.collect(behaviour, cfg);
    ppo::finalize_advantages(buffer, cfg.gamma, cfg.lambda);
    const std::vector<ppo::SegmentRef> segments{{0, 0}, {1, 16}};

    // Keep the loss itself O(0.01) so rounding in the differenced loss stays
    // far below the gradients: value targets close to the critic's predictions
    // and advantages centred over the checked segments.
    std::mt19937_64 target_rng(options.seed + 41);
    std::normal_distribution<double> residual(0.0, 0.05);
    for (ppo::EnvTrajectory& tr : buffer.envs) {
      for (std::size_t k = 0; k < tr.returns.size(); ++k) tr.returns[k] = tr.value[k] + residual(target_rng);
    }
    double adv_mean = 0.0;
    for (const ppo::SegmentRef& s : segments) {
      for (int k = 0; k < cfg.bptt_length; ++k) adv_mean += buffer.envs[s.env].advantages[s.start + k];
    }
    adv_mean /= static_cast<double>(segments.size()) * cfg.bptt_length;
    for (const ppo::SegmentRef& s : segments) {
      for (int k = 0; k < cfg.bptt_length; ++k) buffer.envs[s.env].advantages[s.start + k] -= adv_mean;
    }

    // Evaluate away from the behaviour policy so the ratios are not all one.
    Policy current = behaviour;
    std::mt19937_64 rng(options.seed + 31);
    std::normal_distribution<double> n(0.0, 1e-3);
    for (auto& e : current.params()) {
      for (double& v : e.value.values()) v += n(rng);
    }
    auto program = [&](Tape& tape) { return ppo::record_loss(tape, current, buffer, segments, cfg).loss; };

    CheckResult r;
    r.name = std::string("fd_ppo_loss_") + std::string(policy::variant_name(variant));
    r.tolerance = 1e-5;
    r.measured = grad::fd_check(program, current.params(), options.probes, options.epsilon,
                                fd_options(options));
    r.passed = r.measured < r.tolerance;
    r.detail = "2 segments x 16 steps";
    return r;
  });
}

CheckResult check_gae(int instances, std::uint64_t seed) {
  return timed([&] {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> len_dist(1, 50);
    double worst = 0.0;
    for (int i = 0; i < instances; ++i) {
      const auto len = static_cast<std::size_t>(len_dist(rng));
      const double gamma = u(rng), lambda = u(rng), boot = n(rng);
      const double p_done = 0.3 * u(rng);
      std::vector<double> r(len), v(len);
      std::vector<std::uint8_t> done(len);
      for (std::size_t k = 0; k < len; ++k) {
        r[k] = n(rng);
        v[k] = n(rng);
        done[k] = u(rng) < p_done;
      }
      const ppo::GaeResult fast = ppo::compute_gae(r, v, done, boot, gamma, lambda);
      for (std::size_t t = 0; t < len; ++t) {
        double adv = 0.0, weight = 1.0;
        for (std::size_t k = t; k < len; ++k) {
          const double next = k + 1 < len ? v[k + 1] : boot;
          adv += weight * (r[k] + gamma * next * (done[k] ? 0.0 : 1.0) - v[k]);
          if (done[k]) break;
          weight *= gamma * lambda;
        }
        worst = std::max({worst, std::abs(fast.advantages[t] - adv),
                          std::abs(fast.returns[t] - (adv + v[t]))});
      }
    }
    CheckResult res{"gae_bruteforce", worst, 1e-12, worst < 1e-12,
                    std::to_string(instances) + " instances", 0.0};
    return res;
  });
}

CheckResult check_dare_random(int systems, std::uint64_t seed) {
  return timed([&] {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    int failures = 0, unstable = 0;
    for (int i = 0; i < systems; ++i) {
      const int nx = 1 + i % 10;
      const int nu = 1 + i % 3;
      MatrixXd A(nx, nx), B(nx, nu), H(nx, nx);
      for (int r = 0; r < nx; ++r) {
        for (int c = 0; c < nx; ++c) {
          A(r, c) = n(rng);
          H(r, c) = n(rng);
        }
        for (int c = 0; c < nu; ++c) B(r, c) = n(rng);
      }
      // Spectral radius uniform in [0.5, 1.3].
      A *= (0.5 + 0.8 * u(rng)) / sim::spectral_radius(A);
      unstable += sim::spectral_radius(A) > 1.0;
      const MatrixXd Q = H * H.transpose() / nx + 0.1 * MatrixXd::Identity(nx, nx);
      const MatrixXd R = (0.1 + u(rng)) * MatrixXd::Identity(nu, nu);
      try {
        const lqg::RiccatiSolution s = lqg::solve_dare(A, B, Q, R);
        worst = std::max(worst, (s.P - lqg::riccati_map(A, B, Q, R, s.P)).cwiseAbs().maxCoeff());
      } catch (const std::runtime_error&) {
        ++failures;
      }
    }
    CheckResult r;
    r.name = "dare_residual";
    r.measured = worst;
    r.tolerance = 1e-9;
    r.passed = failures == 0 && worst < r.tolerance;
    r.detail = std::to_string(systems) + " systems, " + std::to_string(unstable) + " open-loop unstable";
    if (failures) r.detail += ", " + std::to_string(failures) + " did not converge";
    return r;
  });
}

CheckResult check_dare_scalar() {
  return timed([&] {
    double worst = 0.0;
    int cases = 0;
    for (double a : {-1.5, -0.5, 0.0, 0.5, 0.9, 0.99, 1.2}) {
      for (double b : {0.3, 1.0, 2.0}) {
        for (double q : {0.1, 1.0, 5.0}) {
          for (double rr : {0.01, 0.1, 1.0, 10.0}) {
            const double k = rr * (1.0 - a * a) - q * b * b;
            const double root = (-k + std::sqrt(k * k + 4.0 * b * b * q * rr)) / (2.0 * b * b);
            const lqg::RiccatiSolution s = lqg::solve_dare(MatrixXd::Constant(1, 1, a), MatrixXd::Constant(1, 1, b),
                                                           MatrixXd::Constant(1, 1, q), MatrixXd::Constant(1, 1, rr));
            worst = std::max(worst, std::abs(s.P(0, 0) - root));
            ++cases;
          }
        }
      }
    }
    return CheckResult{"dare_scalar_root", worst, 1e-10, worst < 1e-10,
                       std::to_string(cases) + " cases", 0.0};
  });
}

CheckResult check_tank_equilibrium() {
  return timed([&] {
    const sim::TankConfig cfg;
    double worst = 0.0;
    for (int i = 1; i <= 100; ++i) {
      const double u = cfg.u_max * i / 100.0;
      const double x1 = sim::equilibrium_level(cfg, u);
      const double x2 = (cfg.a1 / cfg.a2) * (cfg.a1 / cfg.a2) * x1;
      const sim::TankRates r = sim::tank_rates(cfg, x1, x2, u, 0.0);
      worst = std::max({worst, std::abs(r.dx1), std::abs(r.dx2)});
    }
    return CheckResult{"tank_equilibrium", worst, 1e-10, worst < 1e-10, "100 inputs", 0.0};
  });
}

CheckResult check_tank_clamping(long steps, std::uint64_t seed) {
  return timed([&] {
    const sim::TankConfig cfg;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::array<double, 2> x{0.0, 0.0};
    double lowest = std::numeric_limits<double>::infinity();
    double highest = 0.0;
    for (long k = 0; k < steps; ++k) {
      if (k % 500 == 0) x = {cfg.x_max * u(rng), cfg.x_max * u(rng)};
      // Pump off a third of the time so the tanks drain against the floor.
      const double in = u(rng) < 0.33 ? 0.0 : cfg.u_max * u(rng);
      const double dist = 2.0 * cfg.a1 * u(rng);
      x = sim::euler_step(x, sim::tank_rates(cfg, x[0], x[1], in, dist), cfg);
      lowest = std::min({lowest, x[0], x[1]});
      highest = std::max({highest, x[0], x[1]});
    }
    CheckResult r;
    r.name = "tank_clamping";
    r.measured = lowest;
    r.tolerance = 0.0;
    r.passed = lowest >= 0.0 && highest <= cfg.x_max;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%ld steps, min level %.3g, max level %.4g", steps, lowest, highest);
    r.detail = buf;
    return r;
  });
}

CheckResult check_training_determinism() {
  return timed([&] {
    ppo::PPOConfig cfg;
    cfg.rollout_length = 64;
    cfg.n_envs = 2;
    cfg.bptt_length = 16;
    cfg.minibatch_segments = 4;
    cfg.epochs = 2;
    cfg.total_steps = 384;
    cfg.Kp = 1.0;
    cfg.seed = 3;
    const std::unique_ptr<sim::Env> env = tank_env();
    const Policy init = Policy::init(3, Variant::kStructure2, dims_for(Variant::kStructure2));
    const ppo::TrainResult a = ppo::train(*env, init, cfg);
    const ppo::TrainResult b = ppo::train(*env, init, cfg);
    bool same = a.log.records == b.log.records;
    double diff = 0.0;
    for (const auto& e : a.policy.params()) {
      const auto& other = b.policy.params().at(e.name).values();
      for (std::size_t i = 0; i < other.size(); ++i) {
        same = same && std::bit_cast<std::uint64_t>(other[i]) ==
                           std::bit_cast<std::uint64_t>(e.value.values()[i]);
        diff = std::max(diff, std::abs(other[i] - e.value.values()[i]));
      }
    }
    return CheckResult{"training_determinism", diff, 0.0, same,
                       std::to_string(a.log.records.size()) + " rounds, bitwise", 0.0};
  });
}

CheckResult check_feedforward_isolation(int trials, std::uint64_t seed) {
  return timed([&] {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 2.0);
    std::uniform_real_distribution<double> dist(0.0, 0.5);
    int violations = 0;
    const sim::ActionBounds bounds{0.0, 10.0};
    for (int trial = 0; trial < trials; ++trial) {
      const Policy p = Policy::init(seed + static_cast<std::uint64_t>(trial / 50), Variant::kStructure2,
                                    dims_for(Variant::kStructure2));
      policy::HiddenState a = p.initial_hidden(), b = a;
      std::vector<double> ua{n(rng)}, ub{n(rng)};
      Rng ra(seed + 2 * static_cast<std::uint64_t>(trial)), rb(seed + 2 * static_cast<std::uint64_t>(trial) + 1);
      for (int t = 0; t < 20; ++t) {
        const double d = dist(rng);
        const sim::Observation oa{{n(rng)}, {d}, {n(rng)}};
        const sim::Observation ob{{n(rng)}, {d}, {n(rng)}};
        const policy::ActResult x = policy::act(p, a, oa, ua, ra, false, 1.0, bounds);
        const policy::ActResult y = policy::act(p, b, ob, ub, rb, false, 1.0, bounds);
        if (x.next.xd != y.next.xd) {
          ++violations;
          break;
        }
        a = x.next;
        b = y.next;
        ua = {n(rng)};
        ub = {n(rng)};
      }
    }
    return CheckResult{"feedforward_isolation", static_cast<double>(violations), 0.0, violations == 0,
                       std::to_string(trials) + " trials x 20 steps", 0.0};
  });
}

std::vector<CheckResult> run_verify(const VerifyOptions& options) {
  std::vector<CheckResult> out;
  for (Variant v : {Variant::kStructure1, Variant::kStructure2, Variant::kUnstructured}) {
    out.push_back(check_policy_gradient(v, options));
  }
  for (Variant v : {Variant::kStructure1, Variant::kStructure2, Variant::kUnstructured}) {
    out.push_back(check_ppo_loss_gradient(v, options));
  }
  out.push_back(check_gae(1000, options.seed));
  out.push_back(check_dare_random(100, options.seed));
  out.push_back(check_dare_scalar());
  out.push_back(check_tank_equilibrium());
  out.push_back(check_tank_clamping(1000000, options.seed));
  out.push_back(check_training_determinism());
  out.push_back(check_feedforward_isolation(1000, options.seed));
  return out;
}

void print_report(const std::vector<CheckResult>& results, std::ostream& out) {
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %-12s %-10s %-6s %8s  %s\n", "check", "measured", "tolerance",
                "status", "seconds", "detail");
  out << line;
  for (const CheckResult& r : results) {
    std::snprintf(line, sizeof line, "%-28s %-12.3e %-10.1e %-6s %8.2f  %s\n", r.name.c_str(), r.measured,
                  r.tolerance, r.passed ? "PASS" : "FAIL", r.seconds, r.detail.c_str());
    out << line;
  }
}

}  // namespace srlc::app
