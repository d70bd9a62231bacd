#include "srlc/lqg/lqg.hpp"

#include <cmath>
#include <limits>

#include "srlc/common/error.hpp"

namespace srlc::lqg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd riccati_map(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R,
                     const MatrixXd& P) {
  const MatrixXd BtPA = B.transpose() * P * A;
  const MatrixXd S = R + B.transpose() * P * B;
  MatrixXd next = Q + A.transpose() * P * A - BtPA.transpose() * S.ldlt().solve(BtPA);
  return 0.5 * (next + next.transpose());
}

RiccatiSolution solve_dare(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                           const MatrixXd& R, int max_iter) {
  if (A.rows() != A.cols() || B.rows() != A.rows() || Q.rows() != A.rows() ||
      Q.cols() != A.rows() || R.rows() != B.cols() || R.cols() != B.cols()) {
    throw ConfigError("solve_dare: inconsistent matrix dimensions");
  }
  RiccatiSolution sol;
  sol.P = 0.5 * (Q + Q.transpose());
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  for (int k = 1; k <= max_iter; ++k) {
    MatrixXd next = riccati_map(A, B, Q, R, sol.P);
    if (!next.allFinite()) throw NumericError("solve_dare: iteration diverged");
    const double change = (next - sol.P).cwiseAbs().maxCoeff();
    sol.P = std::move(next);
    sol.iterations = k;
    // For large P the change bottoms out at rounding level above 1e-12.
    const double floor = 64.0 * kEps * sol.P.cwiseAbs().maxCoeff();
    if (change < std::max(1e-12, floor)) break;
  }
  sol.residual = (sol.P - riccati_map(A, B, Q, R, sol.P)).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, sol.P.cwiseAbs().maxCoeff());
  if (sol.iterations == max_iter && sol.residual > 1e-9 * scale) {
    throw NumericError("solve_dare: no convergence after " + std::to_string(max_iter) +
                       " iterations, residual " + std::to_string(sol.residual));
  }
  return sol;
}

MatrixXd lqr_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& R, const MatrixXd& P) {
  const MatrixXd S = R + B.transpose() * P * B;
  return S.ldlt().solve(B.transpose() * P * A);
}

namespace {
// Keeps the filter Riccati well posed for noise-free plants.
constexpr double kCovarianceFloor = 1e-6;
}  // namespace

LqgController::LqgController(sim::LinearSystem sys, LqgWeights weights) : sys_(std::move(sys)) {
  sys_.validate();
  const auto d = sys_.dims();
  const MatrixXd& A = sys_.A;
  const MatrixXd& B = sys_.B;
  const MatrixXd& C = sys_.C;

  const MatrixXd Qc = weights.q1 * C.transpose() * C;
  const MatrixXd Rc = weights.q2 * MatrixXd::Identity(d.n_u, d.n_u);
  L_ = lqr_gain(A, B, Rc, solve_dare(A, B, Qc, Rc).P);

  const MatrixXd Nw = sys_.Nw();
  const MatrixXd W = sys_.w_std * sys_.w_std * Nw * Nw.transpose() +
                     kCovarianceFloor * MatrixXd::Identity(d.n_x, d.n_x);
  const MatrixXd V = (sys_.v_std * sys_.v_std + kCovarianceFloor) * MatrixXd::Identity(d.n_y, d.n_y);
  const MatrixXd Sigma = solve_dare(A.transpose(), C.transpose(), W, V).P;
  K_ = Sigma * C.transpose() * (C * Sigma * C.transpose() + V).inverse();

  // [A - I, B; C, 0] [x; u] = [-N_d d; y_ref]
  MatrixXd M = MatrixXd::Zero(d.n_x + d.n_y, d.n_x + d.n_u);
  M.topLeftCorner(d.n_x, d.n_x) = A - MatrixXd::Identity(d.n_x, d.n_x);
  M.topRightCorner(d.n_x, d.n_u) = B;
  M.bottomLeftCorner(d.n_y, d.n_x) = C;
  ss_solver_ = M.completeOrthogonalDecomposition().pseudoInverse();
  reset();
}

void LqgController::reset() {
  const int n = static_cast<int>(sys_.A.rows());
  xp_ = VectorXd::Zero(n);
  xf_ = VectorXd::Zero(n);
  innovation_ = VectorXd::Zero(sys_.C.rows());
}

std::vector<double> LqgController::act(std::span<const double> y, std::span<const double> y_ref,
                                       std::span<const double> d) {
  const auto dims = sys_.dims();
  const Eigen::Map<const VectorXd> ym(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::Map<const VectorXd> rm(y_ref.data(), static_cast<Eigen::Index>(y_ref.size()));
  VectorXd dm = VectorXd::Zero(dims.n_d);
  for (int i = 0; i < dims.n_d && i < static_cast<int>(d.size()); ++i) dm(i) = d[static_cast<std::size_t>(i)];

  innovation_ = ym - sys_.C * xp_;
  xf_ = xp_ + K_ * innovation_;

  VectorXd rhs(dims.n_x + dims.n_y);
  rhs.head(dims.n_x) = -sys_.Nd() * dm;
  rhs.tail(dims.n_y) = rm;
  const VectorXd ss = ss_solver_ * rhs;
  const VectorXd u = ss.tail(dims.n_u) - L_ * (xf_ - ss.head(dims.n_x));

  xp_ = sys_.A * xf_ + sys_.B * u + sys_.Nd() * dm;
  return {u.data(), u.data() + u.size()};
}

double LqgController::control_radius() const { return sim::spectral_radius(sys_.A - sys_.B * L_); }

double LqgController::filter_radius() const {
  return sim::spectral_radius(sys_.A - sys_.A * K_ * sys_.C);
}

double p_controller(double Kp, double y, double y_ref) { return Kp * (y_ref - y); }

}  // namespace srlc::lqg
