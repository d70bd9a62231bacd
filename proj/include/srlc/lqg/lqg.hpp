#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "srlc/sim/linear_system.hpp"

namespace srlc::lqg {

struct RiccatiSolution {
  Eigen::MatrixXd P;
  int iterations = 0;
  double residual = 0.0;  // max-abs entry of P - f(P)
};

// One step of the Riccati recursion:
// f(P) = Q + AᵀPA - AᵀPB (R + BᵀPB)⁻¹ BᵀPA
Eigen::MatrixXd riccati_map(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                            const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                            const Eigen::MatrixXd& P);

// Fixed-point iteration from P = Q until the max-abs change drops below
// 1e-12 (or to rounding level for large P) or max_iter is reached. Throws
// NumericError with the residual if it does not converge.
RiccatiSolution solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                           int max_iter = 100000);

// (R + BᵀPB)⁻¹ BᵀPA
Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                         const Eigen::MatrixXd& R, const Eigen::MatrixXd& P);

struct LqgWeights {
  double q1 = 1.0;  // output weight, Q = q1·CᵀC
  double q2 = 0.1;  // input weight, R = q2·I
};

// Kalman filter plus LQR state feedback with steady-state reference
// feedforward: u = u_ss - L (x̂ - x_ss) where (x_ss, u_ss) solve
// x = A x + B u + N_d d, C x = y_ref.
class LqgController {
 public:
  LqgController(sim::LinearSystem sys, LqgWeights weights);

  // Clears the filter (x̂ = 0, prior covariance at its steady state).
  void reset();
  // Measurement update with y, then control; the time update uses the
  // returned u and the measured d.
  std::vector<double> act(std::span<const double> y, std::span<const double> y_ref,
                          std::span<const double> d);

  const Eigen::MatrixXd& L() const { return L_; }
  // Filter-form gain: x̂_{t|t} = x̂_{t|t-1} + K (y - C x̂_{t|t-1}).
  const Eigen::MatrixXd& K() const { return K_; }
  const Eigen::VectorXd& estimate() const { return xf_; }
  const Eigen::VectorXd& prediction() const { return xp_; }
  // Innovation of the most recent measurement update.
  const Eigen::VectorXd& innovation() const { return innovation_; }

  double control_radius() const;  // ρ(A - BL)
  double filter_radius() const;   // ρ(A - A K C)

 private:
  sim::LinearSystem sys_;
  Eigen::MatrixXd L_;
  Eigen::MatrixXd K_;
  Eigen::MatrixXd ss_solver_;  // maps [-N_d d; y_ref] to [x_ss; u_ss]
  Eigen::VectorXd xp_;
  Eigen::VectorXd xf_;
  Eigen::VectorXd innovation_;
};

// u = Kp (y_ref - y)
double p_controller(double Kp, double y, double y_ref);

}  // namespace srlc::lqg
