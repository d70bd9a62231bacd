#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "srlc/gradcore/tape.hpp"
#include "srlc/policy/policy.hpp"

namespace srlc::app {

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  // Breaks one backward rule on every gradient check.
  std::optional<grad::Op> inject_fault;
  std::uint64_t seed = 0;
  int probes = 64;
  double epsilon = 1e-6;
};

// Six recurrent steps of one variant over a batch of 3, reduced by random
// weights on the action mean and value.
CheckResult check_policy_gradient(policy::Variant variant, const VerifyOptions& options);
// Clipped-surrogate loss over two replayed segments of a collected rollout.
CheckResult check_ppo_loss_gradient(policy::Variant variant, const VerifyOptions& options);
// compute_gae against the explicit double sum; lengths 1..50 with random dones.
CheckResult check_gae(int instances, std::uint64_t seed);
// Plug-back residual on random controllable systems with n_x in 1..10 (some
// open-loop unstable).
CheckResult check_dare_random(int systems, std::uint64_t seed);
// Scalar DARE against the positive root of its quadratic.
CheckResult check_dare_scalar();
// tank_rates at the algebraic equilibrium over a grid of inputs.
CheckResult check_tank_equilibrium();
// Smallest level seen over random Euler steps (inputs, disturbances and
// states drawn over and beyond the admissible ranges).
CheckResult check_tank_clamping(long steps, std::uint64_t seed);
// Two short training runs from one seed: logs and parameters bit-identical.
CheckResult check_training_determinism();
// x̂ᵈ bit-invariant to the y and u histories.
CheckResult check_feedforward_isolation(int trials, std::uint64_t seed);

std::vector<CheckResult> run_verify(const VerifyOptions& options);
void print_report(const std::vector<CheckResult>& results, std::ostream& out);

}  // namespace srlc::app
