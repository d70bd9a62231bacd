#pragma once

#include <array>

namespace srlc::sim {

// Cascaded double tank. Lengths in cm, time in s, pump input in V.
//
// The defaults put the reachable level range (about 0..20 cm with no
// disturbance, 0..8 cm at the maximum disturbance) inside x_max and keep every
// linearized time constant well above dt, so Euler integration at dt = 2 s is
// stable over the whole operating range.
struct TankConfig {
  double a1 = 0.5;      // outlet area, upper tank (cm^2)
  double a2 = 0.5;      // outlet area, lower tank (cm^2)
  double A1 = 150.0;    // cross-section, upper tank (cm^2)
  double A2 = 150.0;    // cross-section, lower tank (cm^2)
  double K_pump = 12.5; // cm^3 / (V s)
  double g = 981.0;     // cm / s^2
  double dt = 2.0;      // s
  double u_max = 10.0;  // V
  double x_max = 20.0;  // cm

  void validate() const;

  friend bool operator==(const TankConfig&, const TankConfig&) = default;
};

struct TankRates {
  double dx1 = 0.0;
  double dx2 = 0.0;
};

// Continuous-time level derivatives. d is the extra outlet area of the upper
// tank. Throws ConfigError on negative levels, input or disturbance.
TankRates tank_rates(const TankConfig& cfg, double x1, double x2, double u, double d);

// x + dt * rates, clamped element-wise to [0, x_max].
std::array<double, 2> euler_step(const std::array<double, 2>& x, const TankRates& rates,
                                 const TankConfig& cfg);

// Upper-tank level at which the outflow balances pump input u (d = 0).
double equilibrium_level(const TankConfig& cfg, double u);

}  // namespace srlc::sim
