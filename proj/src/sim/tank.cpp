#include "srlc/sim/tank.hpp"

#include <algorithm>
#include <cmath>

#include "srlc/common/error.hpp"

namespace srlc::sim {

void TankConfig::validate() const {
  for (double v : {a1, a2, A1, A2, K_pump, g, dt, u_max, x_max}) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError("tank: all physical constants must be finite and > 0");
    }
  }
}

TankRates tank_rates(const TankConfig& cfg, double x1, double x2, double u, double d) {
  if (x1 < 0.0 || x2 < 0.0) throw ConfigError("tank_rates: negative level");
  if (u < 0.0) throw ConfigError("tank_rates: negative pump voltage");
  if (d < 0.0) throw ConfigError("tank_rates: negative disturbance area");
  const double q1 = std::sqrt(2.0 * cfg.g * x1);
  const double q2 = std::sqrt(2.0 * cfg.g * x2);
  TankRates r;
  r.dx1 = -(cfg.a1 / cfg.A1) * q1 + (cfg.K_pump / cfg.A1) * u - (d / cfg.A1) * q1;
  r.dx2 = (cfg.a1 / cfg.A1) * q1 - (cfg.a2 / cfg.A2) * q2;
  return r;
}

std::array<double, 2> euler_step(const std::array<double, 2>& x, const TankRates& rates,
                                 const TankConfig& cfg) {
  return {std::clamp(x[0] + cfg.dt * rates.dx1, 0.0, cfg.x_max),
          std::clamp(x[1] + cfg.dt * rates.dx2, 0.0, cfg.x_max)};
}

double equilibrium_level(const TankConfig& cfg, double u) {
  const double q = cfg.K_pump * u / cfg.a1;
  return q * q / (2.0 * cfg.g);
}

}  // namespace srlc::sim
