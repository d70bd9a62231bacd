#include "srlc/sim/schedule.hpp"

#include "srlc/common/error.hpp"
#include "srlc/common/random.hpp"

namespace srlc::sim {

void ScheduleConfig::validate() const {
  if (episode_length < 1) throw ConfigError("schedule: episode_length must be >= 1");
  if (ref_hold < 1 || episode_length % ref_hold != 0) {
    throw ConfigError("schedule: ref_hold must divide episode_length");
  }
  if (ref_lo > ref_hi) throw ConfigError("schedule: ref_lo > ref_hi");
  if (disturbance) {
    if (dist_hold < 1 || episode_length % dist_hold != 0) {
      throw ConfigError("schedule: dist_hold must divide episode_length");
    }
    if (dist_lo < 0.0 || dist_lo > dist_hi) throw ConfigError("schedule: need 0 <= dist_lo <= dist_hi");
  }
}

Schedule::Schedule(ScheduleConfig cfg, int n_ref, int n_d)
    : cfg_(cfg), n_ref_(n_ref), n_d_(n_d) {
  cfg_.validate();
}

std::vector<double> Schedule::reference(int t) const {
  std::vector<double> r(static_cast<std::size_t>(n_ref_));
  const auto block = static_cast<std::uint64_t>(t / cfg_.ref_hold);
  for (int i = 0; i < n_ref_; ++i) {
    if (ref_override_) {
      r[static_cast<std::size_t>(i)] = *ref_override_;
    } else {
      const double u = hash_uniform(derive_seed(seed_, Stream::kReference,
                                                block * static_cast<std::uint64_t>(n_ref_) + i));
      r[static_cast<std::size_t>(i)] = cfg_.ref_lo + (cfg_.ref_hi - cfg_.ref_lo) * u;
    }
  }
  return r;
}

std::vector<double> Schedule::disturbance(int t) const {
  std::vector<double> d(static_cast<std::size_t>(n_d_), 0.0);
  if (dist_override_) {
    for (double& v : d) v = *dist_override_;
    return d;
  }
  if (!cfg_.disturbance) return d;
  const auto block = static_cast<std::uint64_t>(t / cfg_.dist_hold);
  for (int i = 0; i < n_d_; ++i) {
    const double u = hash_uniform(derive_seed(seed_, Stream::kDisturbance,
                                              block * static_cast<std::uint64_t>(n_d_) + i));
    d[static_cast<std::size_t>(i)] = cfg_.dist_lo + (cfg_.dist_hi - cfg_.dist_lo) * u;
  }
  return d;
}

}  // namespace srlc::sim
