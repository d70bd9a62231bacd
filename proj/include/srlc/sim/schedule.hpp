#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace srlc::sim {

struct ScheduleConfig {
  int episode_length = 300;
  double ref_lo = -1.0;
  double ref_hi = 1.0;
  int ref_hold = 100;
  bool disturbance = false;
  double dist_lo = 0.0;
  double dist_hi = 0.0;
  int dist_hold = 50;

  void validate() const;

  friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

// Piecewise-constant reference and disturbance signals. Each value is a pure
// function of (seed, t): level k of a signal is drawn from a hash of
// (seed, k), so no state is carried between steps.
class Schedule {
 public:
  Schedule(ScheduleConfig cfg, int n_ref, int n_d);

  void reseed(std::uint64_t seed) { seed_ = seed; }
  std::vector<double> reference(int t) const;
  std::vector<double> disturbance(int t) const;

  // Evaluation overrides: hold the reference / disturbance at a fixed value.
  void set_reference_override(std::optional<double> level) { ref_override_ = level; }
  void set_disturbance_override(std::optional<double> level) { dist_override_ = level; }

  const ScheduleConfig& config() const { return cfg_; }

 private:
  ScheduleConfig cfg_;
  int n_ref_;
  int n_d_;
  std::uint64_t seed_ = 0;
  std::optional<double> ref_override_;
  std::optional<double> dist_override_;
};

}  // namespace srlc::sim
