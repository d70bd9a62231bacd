#include "srlc/sim/linear_system.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <random>

#include "srlc/common/error.hpp"
#include "srlc/common/random.hpp"

namespace srlc::sim {

LinearDims LinearSystem::dims() const {
  LinearDims d;
  d.n_x = static_cast<int>(A.rows());
  d.n_u = static_cast<int>(B.cols());
  d.n_y = static_cast<int>(C.rows());
  d.n_d = n_d;
  d.n_w = static_cast<int>(N.cols()) - n_d;
  return d;
}

void LinearSystem::validate() const {
  const auto n = A.rows();
  if (n < 1 || A.cols() != n) throw ConfigError("linear system: A must be square and non-empty");
  if (B.rows() != n || B.cols() < 1) throw ConfigError("linear system: B must have n_x rows");
  if (C.cols() != n || C.rows() < 1) throw ConfigError("linear system: C must have n_x columns");
  if (N.rows() != n) throw ConfigError("linear system: N must have n_x rows");
  if (n_d < 0 || N.cols() < n_d) throw ConfigError("linear system: N has fewer columns than n_d");
  if (w_std < 0 || v_std < 0) throw ConfigError("linear system: noise levels must be >= 0");
  if (!A.allFinite() || !B.allFinite() || !C.allFinite() || !N.allFinite()) {
    throw ConfigError("linear system: non-finite matrix entry");
  }
  if (spectral_radius(A) >= 1.0) throw ConfigError("linear system: A is not stable");
}

Eigen::MatrixXd LinearSystem::dc_gain() const {
  const auto n = A.rows();
  return C * (Eigen::MatrixXd::Identity(n, n) - A).partialPivLu().solve(B);
}

double spectral_radius(const Eigen::MatrixXd& A) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

LinearSystem generate_stable_linear(std::uint64_t seed, const LinearDims& dims,
                                    double radius_max, double radius_min) {
  if (dims.n_x < 1 || dims.n_u < 1 || dims.n_y < 1 || dims.n_w < 1 || dims.n_d < 1) {
    throw ConfigError("generate_stable_linear: all dimensions must be >= 1");
  }
  if (!(radius_max < 1.0) || !(radius_min > 0.0) || radius_min > radius_max) {
    throw ConfigError("generate_stable_linear: need 0 < radius_min <= radius_max < 1");
  }
  Rng rng = make_rng(seed, Stream::kSystem);
  std::uniform_real_distribution<double> radius(radius_min, radius_max);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const int n = dims.n_x;
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n;) {
    const double r = radius(rng);
    if (i + 1 < n && unit(rng) < 0.5) {
      const double theta = unit(rng) * std::numbers::pi;
      D(i, i) = r * std::cos(theta);
      D(i, i + 1) = r * std::sin(theta);
      D(i + 1, i) = -r * std::sin(theta);
      D(i + 1, i + 1) = r * std::cos(theta);
      i += 2;
    } else {
      D(i, i) = unit(rng) < 0.5 ? -r : r;
      i += 1;
    }
  }

  Eigen::MatrixXd G(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) G(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);

  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  auto gaussian = [&](int rows, int cols) {
    Eigen::MatrixXd M(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) M(i, j) = s * normal(rng);
    return M;
  };

  LinearSystem sys;
  sys.A = Q * D * Q.transpose();
  sys.B = gaussian(n, dims.n_u);
  sys.N = gaussian(n, dims.n_w + dims.n_d);
  sys.C = gaussian(dims.n_y, n);
  sys.n_d = dims.n_d;
  return sys;
}

void normalize_dc_gain(LinearSystem& sys) {
  if (sys.B.cols() != 1 || sys.C.rows() != 1) {
    throw ConfigError("normalize_dc_gain: only single-input single-output systems");
  }
  const double g = sys.dc_gain()(0, 0);
  if (std::abs(g) < 1e-9) throw ConfigError("normalize_dc_gain: DC gain is zero");
  sys.C /= g;
}

LinearStepResult linear_step(const LinearSystem& sys, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& u, const Eigen::VectorXd& w,
                             const Eigen::VectorXd& d, const Eigen::VectorXd& v) {
  const LinearDims dm = sys.dims();
  if (x.size() != dm.n_x || u.size() != dm.n_u || w.size() != dm.n_w || d.size() != dm.n_d ||
      v.size() != dm.n_y) {
    throw ConfigError("linear_step: argument dimensions do not match the system");
  }
  LinearStepResult r;
  r.x_next = sys.A * x + sys.B * u + sys.Nw() * w + sys.Nd() * d;
  r.y = sys.C * x + v;
  return r;
}

}  // namespace srlc::sim
