#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace srlc::sim {

struct LinearDims {
  int n_x = 1;
  int n_u = 1;
  int n_y = 1;
  int n_w = 1;
  int n_d = 1;
};

// x' = A x + B u + N [w; d],  y = C x + v
struct LinearSystem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd N;  // n_x x (n_w + n_d)
  Eigen::MatrixXd C;
  double w_std = 0.01;
  double v_std = 0.01;
  // Trailing columns of N driven by the measurable disturbance.
  int n_d = 1;

  LinearDims dims() const;
  // Throws ConfigError on inconsistent dimensions, negative noise levels or
  // spectral radius >= 1.
  void validate() const;
  Eigen::MatrixXd Nw() const { return N.leftCols(dims().n_w); }
  Eigen::MatrixXd Nd() const { return N.rightCols(dims().n_d); }
  // C (I - A)^-1 B
  Eigen::MatrixXd dc_gain() const;
};

double spectral_radius(const Eigen::MatrixXd& A);

// Random stable system. Eigenvalues (real, or conjugate pairs) get modulus
// uniform in [radius_min, radius_max] and are placed in real block-diagonal
// form, then rotated by a random orthogonal matrix. B, N and C entries are
// N(0, 1) / sqrt(n_x). Deterministic in seed.
LinearSystem generate_stable_linear(std::uint64_t seed, const LinearDims& dims,
                                    double radius_max, double radius_min = 0.1);

// Rescales C so a single-input single-output system has unit DC gain.
void normalize_dc_gain(LinearSystem& sys);

struct LinearStepResult {
  Eigen::VectorXd x_next;
  Eigen::VectorXd y;
};

// x_next = A x + B u + N [w; d];  y = C x + v (output of the current state).
LinearStepResult linear_step(const LinearSystem& sys, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& u, const Eigen::VectorXd& w,
                             const Eigen::VectorXd& d, const Eigen::VectorXd& v);

}  // namespace srlc::sim
