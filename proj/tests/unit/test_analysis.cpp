#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "srlc/analysis/analysis.hpp"
#include "srlc/common/error.hpp"

using namespace srlc;
using namespace srlc::analysis;
using Eigen::MatrixXd;

namespace {

MatrixXd gaussian(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = n(rng);
  return m;
}

sim::TankEnvConfig tank_config(bool disturbance) {
  sim::TankEnvConfig cfg;
  cfg.schedule.episode_length = 300;
  cfg.schedule.ref_lo = 2.0;
  cfg.schedule.ref_hi = 6.0;
  cfg.schedule.ref_hold = 100;
  cfg.schedule.disturbance = disturbance;
  cfg.schedule.dist_hi = disturbance ? cfg.tank.a1 : 0.0;
  return cfg;
}

// u_{t} = y_ref on x' = u, y = x: tracks exactly from the second sample on.
class DeadbeatTracker : public Controller {
 public:
  void reset() override {}
  std::vector<double> act(const sim::Observation& obs) override { return obs.y_ref; }
};

sim::LinearEnv integrator_env() {
  sim::LinearEnvConfig cfg;
  cfg.system.A = MatrixXd::Zero(1, 1);
  cfg.system.B = MatrixXd::Ones(1, 1);
  cfg.system.N = MatrixXd::Zero(1, 2);
  cfg.system.C = MatrixXd::Ones(1, 1);
  cfg.system.w_std = 0.0;
  cfg.system.v_std = 0.0;
  return sim::LinearEnv(cfg);
}

}  // namespace

TEST_CASE("level grid", "[analysis]") {
  CHECK(level_grid(2.0, 6.0, 5) == std::vector<double>{2.0, 3.0, 4.0, 5.0, 6.0});
  CHECK(level_grid(-1.0, 1.0, 1) == std::vector<double>{0.0});
  CHECK_THROWS_AS(level_grid(0.0, 1.0, 0), ConfigError);
}

TEST_CASE("state fit examples", "[analysis]") {
  const MatrixXd X = gaussian(500, 4, 1);
  const StateFitResult same = fit_state_map(X, X);
  CHECK((same.W - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(same.intercept.cwiseAbs().maxCoeff() < 1e-10);
  for (int j = 0; j < 4; ++j) CHECK(same.r_squared(j) == Catch::Approx(1.0).margin(1e-12));
  CHECK(!same.rank_deficient);

  const StateFitResult noise = fit_state_map(gaussian(10000, 10, 2), gaussian(10000, 3, 3));
  for (int j = 0; j < 3; ++j) CHECK(noise.r_squared(j) < 0.05);

  const MatrixXd M = gaussian(3, 6, 4);
  const Eigen::Vector3d c(0.5, -2.0, 7.0);
  const MatrixXd Xh = gaussian(400, 6, 5);
  const MatrixXd Xt = (Xh * M.transpose()).rowwise() + c.transpose();
  const StateFitResult syn = fit_state_map(Xh, Xt);
  CHECK((syn.W - M).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((syn.intercept - c).cwiseAbs().maxCoeff() < 1e-8);

  CHECK_THROWS_AS(fit_state_map(gaussian(30, 5, 1), gaussian(30, 1, 2)), ConfigError);
}

TEST_CASE("rank-deficient regressors use the minimum-norm solution", "[analysis]") {
  MatrixXd X = gaussian(300, 3, 6);
  X.col(2) = 2.0 * X.col(0);
  const MatrixXd Y = X.col(0) * 3.0;
  const StateFitResult fit = fit_state_map(X, Y);
  CHECK(fit.rank_deficient);
  CHECK(fit.r_squared(0) == Catch::Approx(1.0).margin(1e-10));
  // Minimum norm splits the weight between the collinear columns.
  CHECK(fit.W(0, 0) == Catch::Approx(0.6).margin(1e-9));
  CHECK(fit.W(0, 2) == Catch::Approx(1.2).margin(1e-9));
}

TEST_CASE("R-squared is invariant under affine reparameterization", "[analysis][property]") {
  const MatrixXd Xh = gaussian(600, 5, 7);
  MatrixXd Xt = gaussian(600, 3, 8);
  Xt += Xh.leftCols(3) * 0.7;
  const StateFitResult base = fit_state_map(Xh, Xt);
  for (std::uint64_t s = 0; s < 20; ++s) {
    MatrixXd T = gaussian(5, 5, 100 + s);
    T += 3.0 * MatrixXd::Identity(5, 5);
    const Eigen::VectorXd shift = gaussian(5, 1, 200 + s).col(0);
    const MatrixXd Xr = (Xh * T).rowwise() + shift.transpose();
    const StateFitResult r = fit_state_map(Xr, Xt);
    CHECK((r.r_squared - base.r_squared).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("state pair bookkeeping", "[analysis]") {
  sim::LinearEnvConfig cfg;
  cfg.system = sim::generate_stable_linear(1, {4, 1, 1, 1, 1}, 0.9);
  sim::normalize_dc_gain(cfg.system);
  const sim::LinearEnv env(cfg);
  const std::vector<double> levels = level_grid(-1.0, 1.0, 7);
  for (auto [variant, width] : {std::pair{policy::Variant::kStructure1, 10},
                                std::pair{policy::Variant::kUnstructured, 64}}) {
    const policy::Policy p = policy::Policy::init(0, variant, {});
    PolicyController c(p, 0.5, env.action_bounds());
    const StatePairs pairs = collect_state_pairs(c, env, levels, 120, 50, 3);
    CHECK(pairs.xhat.rows() == 7 * 70);
    CHECK(pairs.xhat.cols() == width);
    CHECK(pairs.x_true.cols() == 4);
  }
  const policy::Policy p = policy::Policy::init(0, policy::Variant::kStructure1, {});
  PolicyController c(p, 0.5, env.action_bounds());
  CHECK_THROWS_AS(collect_state_pairs(c, env, levels, 400, 50, 3), ConfigError);
}

TEST_CASE("perfect tracker has zero error", "[analysis]") {
  DeadbeatTracker c;
  const EvalReport r = evaluate_controller(c, integrator_env(), level_grid(-1.0, 1.0, 5), 0, {"deadbeat"});
  for (const EvalRow& row : r.rows) {
    CHECK(row.rms_error == 0.0);
    CHECK(row.settled);
    CHECK(row.variant == "deadbeat");
  }
}

TEST_CASE("P-control leaves a steady-state error under a constant disturbance", "[analysis][tank]") {
  sim::TankEnvConfig cfg = tank_config(true);
  cfg.schedule.episode_length = 3000;
  cfg.schedule.ref_hold = 3000;
  const double Kp = 1.0, d = 0.2, ref = 4.0;
  sim::TankEnv env(cfg);
  env.schedule().set_disturbance_override(d);
  env.schedule().set_reference_override(ref);
  sim::Observation o = env.reset(1);
  PAdapter p(Kp);
  for (int t = 0; t < 3000; ++t) o = env.step(p.act(o)).obs;

  // Equilibrium of K Kp (ref - y) = (a1 + d) sqrt(2 g y) with equal outlets.
  const auto& tk = cfg.tank;
  double lo = 0.0, hi = ref;
  for (int i = 0; i < 200; ++i) {
    const double y = 0.5 * (lo + hi);
    (tk.K_pump * Kp * (ref - y) > (tk.a1 + d) * std::sqrt(2.0 * tk.g * y) ? lo : hi) = y;
  }
  CHECK(o.y[0] == Catch::Approx(lo).margin(1e-6));
  CHECK(ref - o.y[0] > 0.1);
}

TEST_CASE("deterministic evaluation is reproducible", "[analysis][property]") {
  const sim::TankEnv env(tank_config(true));
  const policy::Policy p = policy::Policy::init(2, policy::Variant::kStructure2, {1, 1, 1, 2, 1, 64, 64});
  const auto levels = level_grid(2.0, 6.0, 5);
  const EvalReport a = evaluate_tracking(p, 1.0, env, levels, 3, {"structure2", 50, 9});
  const EvalReport b = evaluate_tracking(p, 1.0, env, levels, 3, {"structure2", 50, 9});
  CHECK(a.rows == b.rows);
  CHECK(a.rows.size() == 5);
  for (const auto& r : a.rows) {
    CHECK(r.rms_error >= 0.0);
    CHECK(r.seed == 3);
  }
}

TEST_CASE("ablation is a no-op without disturbance", "[analysis][property]") {
  const sim::TankEnv env(tank_config(false));
  for (auto v : {policy::Variant::kStructure1, policy::Variant::kStructure2, policy::Variant::kUnstructured}) {
    policy::PolicyDims d;
    if (v == policy::Variant::kStructure2) d = {1, 1, 1, 2, 1, 64, 64};
    const policy::Policy p = policy::Policy::init(4, v, d);
    const auto levels = level_grid(2.0, 6.0, 3);
    CHECK(evaluate_tracking(p, 1.0, env, levels, 0, {}).rows ==
          ablate_feedforward(p, 1.0, env, levels, 0, {}).rows);
  }
}

TEST_CASE("ablated feedforward observer follows its zero-input trajectory", "[analysis]") {
  const sim::TankEnv env(tank_config(true));
  const policy::Policy p = policy::Policy::init(5, policy::Variant::kStructure2, {1, 1, 1, 2, 1, 64, 64});
  PolicyController ablated(p, 1.0, env.action_bounds(), true);
  PolicyController zero_d(p, 1.0, env.action_bounds());
  std::unique_ptr<sim::Env> e = env.clone();
  sim::Observation o = e->reset(4);
  for (int t = 0; t < 200; ++t) {
    const auto u = ablated.act(o);
    sim::Observation z = o;
    z.d = {0.0};
    zero_d.act(z);
    CHECK(ablated.hidden().xd == zero_d.hidden().xd);
    o = e->step(u).obs;
  }
}

TEST_CASE("CSV exports round-trip", "[analysis]") {
  const auto dir = std::filesystem::temp_directory_path() / "srlc_test_analysis";
  std::filesystem::create_directories(dir);
  EvalReport rep;
  rep.rows.push_back({"structure2", 3, 4.0, 0.1 + 1e-17, -12.345678901234567, 3.3, false});
  rep.rows.push_back({"unstructured", 1, -0.5, 1.0 / 3.0, -1e-300, 0.0, false});
  write_eval_csv(rep, dir / "eval.csv");
  CHECK(read_eval_csv(dir / "eval.csv").rows == rep.rows);
  {
    std::ifstream f(dir / "eval.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header == kEvalHeader);
  }

  const MatrixXd X = gaussian(200, 3, 1);
  const StateFitResult fit = fit_state_map(X, X * 2.0);
  write_statefit_csv(fit, dir / "statefit.csv");
  const auto rows = read_statefit_csv(dir / "statefit.csv");
  REQUIRE(rows.size() == 3);
  CHECK(std::get<1>(rows[1]) == fit.r_squared(1));
  CHECK(std::get<2>(rows[1]) == 200);
  write_scatter_csv({X, X * 2.0}, fit, dir / "scatter.csv");
  std::ifstream s(dir / "scatter.csv");
  std::string header;
  std::getline(s, header);
  CHECK(header == "sample,true_0,true_1,true_2,fitted_0,fitted_1,fitted_2");
  std::filesystem::remove_all(dir);
}

TEST_CASE("mean episode return matches an explicit rollout", "[analysis]") {
  const sim::LinearEnv env = integrator_env();
  PAdapter p(0.5);
  double expected = 0.0;
  for (std::uint64_t i = 0; i < 3; ++i) {
    sim::LinearEnv e = env;
    sim::Observation o = e.reset(derive_seed(11, Stream::kEpisode, i));
    for (bool done = false; !done;) {
      const sim::StepResult s = e.step(p.act(o));
      expected += s.reward;
      done = s.done;
      o = s.obs;
    }
  }
  CHECK(mean_episode_return(p, env, 3, 11) == Catch::Approx(expected / 3).epsilon(1e-14));
  CHECK(mean_episode_return(p, env, 3, 11) < 0.0);
  CHECK_THROWS_AS(mean_episode_return(p, env, 0, 11), ConfigError);
}
