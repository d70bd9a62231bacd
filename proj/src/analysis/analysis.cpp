#include "srlc/analysis/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "srlc/common/error.hpp"

namespace srlc::analysis {

PolicyController::PolicyController(const policy::Policy& policy, double Kp, sim::ActionBounds bounds,
                                   bool ablate_d, bool deterministic, std::uint64_t seed)
    : policy_(&policy),
      Kp_(Kp),
      bounds_(bounds),
      ablate_d_(ablate_d),
      deterministic_(deterministic),
      seed_(seed) {
  reset();
}

void PolicyController::reset() {
  rng_ = make_rng(seed_, Stream::kExploration);
  hidden_ = policy_->initial_hidden();
  prev_u_.assign(static_cast<std::size_t>(policy_->dims().n_u), 0.0);
}

std::vector<double> PolicyController::act(const sim::Observation& obs) {
  sim::Observation seen = obs;
  if (ablate_d_) std::fill(seen.d.begin(), seen.d.end(), 0.0);
  policy::ActResult r = policy::act(*policy_, hidden_, seen, prev_u_, rng_, deterministic_, Kp_, bounds_);
  hidden_ = std::move(r.next);
  prev_u_ = r.u;
  return r.u;
}

std::vector<double> PAdapter::act(const sim::Observation& obs) {
  std::vector<double> u(obs.y.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = lqg::p_controller(Kp_, obs.y[i], obs.y_ref[i]);
  return u;
}

std::vector<double> level_grid(double lo, double hi, int n) {
  if (n < 1) throw ConfigError("level count must be >= 1");
  if (n == 1) return {0.5 * (lo + hi)};
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return out;
}

StatePairs collect_state_pairs(Controller& controller, const sim::Env& env,
                               std::span<const double> levels, int steps_per_level, int warmup,
                               std::uint64_t seed) {
  if (warmup < 0 || steps_per_level <= warmup || steps_per_level > env.episode_length()) {
    throw ConfigError("state pairs need warmup < steps_per_level <= episode length");
  }
  const std::size_t per = static_cast<std::size_t>(steps_per_level - warmup);
  std::vector<std::vector<double>> est, truth;
  est.reserve(levels.size() * per);
  truth.reserve(levels.size() * per);
  std::unique_ptr<sim::Env> e = env.clone();
  for (std::size_t i = 0; i < levels.size(); ++i) {
    e->schedule().set_reference_override(levels[i]);
    sim::Observation obs = e->reset(derive_seed(seed, Stream::kEpisode, i));
    controller.reset();
    for (int t = 0; t < steps_per_level; ++t) {
      const std::vector<double> u = controller.act(obs);
      if (t >= warmup) {
        est.push_back(controller.estimate());
        truth.push_back(e->true_state());
      }
      obs = e->step(u).obs;
    }
  }
  StatePairs out;
  const auto n = static_cast<Eigen::Index>(est.size());
  out.xhat.resize(n, static_cast<Eigen::Index>(est.empty() ? 0 : est[0].size()));
  out.x_true.resize(n, static_cast<Eigen::Index>(truth.empty() ? 0 : truth[0].size()));
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& a = est[static_cast<std::size_t>(r)];
    const auto& b = truth[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < out.xhat.cols(); ++c) out.xhat(r, c) = a[static_cast<std::size_t>(c)];
    for (Eigen::Index c = 0; c < out.x_true.cols(); ++c) out.x_true(r, c) = b[static_cast<std::size_t>(c)];
  }
  return out;
}

StateFitResult fit_state_map(const Eigen::MatrixXd& xhat, const Eigen::MatrixXd& x_true) {
  if (xhat.rows() != x_true.rows()) throw ConfigError("fit_state_map: sample counts differ");
  const Eigen::Index n = xhat.rows(), k = xhat.cols();
  if (n < 10 * (k + 1)) {
    throw ConfigError("fit_state_map: " + std::to_string(n) + " samples for " +
                      std::to_string(k + 1) + " regressors; need at least ten per regressor");
  }
  Eigen::MatrixXd X(n, k + 1);
  X.leftCols(k) = xhat;
  X.col(k).setOnes();
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
  const Eigen::MatrixXd beta = cod.solve(x_true);  // (k+1) x m

  StateFitResult fit;
  fit.sample_count = static_cast<std::size_t>(n);
  fit.rank_deficient = cod.rank() < k + 1;
  fit.W = beta.topRows(k).transpose();
  fit.intercept = beta.row(k).transpose();
  const Eigen::MatrixXd resid = x_true - X * beta;
  fit.r_squared.resize(x_true.cols());
  for (Eigen::Index j = 0; j < x_true.cols(); ++j) {
    const double mean = x_true.col(j).mean();
    const double ss_tot = (x_true.col(j).array() - mean).square().sum();
    const double ss_res = resid.col(j).squaredNorm();
    fit.r_squared(j) = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : -INFINITY);
  }
  return fit;
}

double EvalReport::mean_rms_error() const {
  double s = 0.0;
  for (const EvalRow& r : rows) s += r.rms_error;
  return rows.empty() ? NAN : s / static_cast<double>(rows.size());
}

double EvalReport::mean_rms_error(std::uint64_t seed) const {
  double s = 0.0;
  int n = 0;
  for (const EvalRow& r : rows) {
    if (r.seed == seed) {
      s += r.rms_error;
      ++n;
    }
  }
  return n == 0 ? NAN : s / n;
}

EvalReport evaluate_controller(Controller& controller, const sim::Env& env,
                               std::span<const double> levels, std::uint64_t seed,
                               const EvalOptions& options) {
  const int T = env.episode_length();
  if (options.warmup < 0 || options.warmup >= T) throw ConfigError("warm-up must be shorter than an episode");
  constexpr int kSettleWindow = 50;
  EvalReport report;
  std::unique_ptr<sim::Env> e = env.clone();
  for (std::size_t i = 0; i < levels.size(); ++i) {
    e->schedule().set_reference_override(levels[i]);
    sim::Observation obs = e->reset(derive_seed(options.episode_seed, Stream::kEpisode, i));
    controller.reset();
    double sq_err = 0.0, sq_u = 0.0, ret = 0.0, worst_tail = 0.0;
    bool done = false;
    for (int t = 0; !done; ++t) {
      const std::vector<double> u = controller.act(obs);
      for (double v : u) sq_u += v * v;
      const sim::StepResult s = e->step(u);
      ret += s.reward;
      done = s.done;
      obs = s.obs;
      double err2 = 0.0;
      for (std::size_t j = 0; j < obs.y.size(); ++j) {
        const double d = obs.y[j] - obs.y_ref[j];
        err2 += d * d;
      }
      if (t >= options.warmup) sq_err += err2;
      if (t >= T - kSettleWindow) worst_tail = std::max(worst_tail, std::sqrt(err2));
    }
    EvalRow row;
    row.variant = options.variant;
    row.seed = seed;
    row.level = levels[i];
    row.rms_error = std::sqrt(sq_err / (T - options.warmup));
    row.mean_return = ret;
    row.input_rms = std::sqrt(sq_u / T);
    row.settled = worst_tail <= 0.05 * std::max(1.0, std::abs(levels[i]));
    report.rows.push_back(std::move(row));
  }
  return report;
}

EvalReport evaluate_tracking(const policy::Policy& policy, double Kp, const sim::Env& env,
                             std::span<const double> levels, std::uint64_t seed,
                             const EvalOptions& options) {
  PolicyController c(policy, Kp, env.action_bounds());
  return evaluate_controller(c, env, levels, seed, options);
}

EvalReport ablate_feedforward(const policy::Policy& policy, double Kp, const sim::Env& env,
                              std::span<const double> levels, std::uint64_t seed,
                              const EvalOptions& options) {
  PolicyController c(policy, Kp, env.action_bounds(), true);
  return evaluate_controller(c, env, levels, seed, options);
}

double mean_episode_return(Controller& controller, const sim::Env& env, int episodes,
                           std::uint64_t seed) {
  if (episodes < 1) throw ConfigError("need at least one episode");
  std::unique_ptr<sim::Env> e = env.clone();
  double total = 0.0;
  for (int i = 0; i < episodes; ++i) {
    sim::Observation obs = e->reset(derive_seed(seed, Stream::kEpisode, static_cast<std::uint64_t>(i)));
    controller.reset();
    for (bool done = false; !done;) {
      const sim::StepResult s = e->step(controller.act(obs));
      total += s.reward;
      done = s.done;
      obs = s.obs;
    }
  }
  return total / episodes;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::out | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return f;
}

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& path,
                                                const std::string& header) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(f, line) || line != header) {
    throw std::runtime_error("'" + path.string() + "' does not start with '" + header + "'");
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

void write_eval_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream f = open_out(path);
  f << kEvalHeader << "\n";
  for (const EvalRow& r : report.rows) {
    f << r.variant << "," << r.seed << "," << g17(r.level) << "," << g17(r.rms_error) << ","
      << g17(r.mean_return) << "," << g17(r.input_rms) << "\n";
  }
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

EvalReport read_eval_csv(const std::filesystem::path& path) {
  EvalReport report;
  for (const auto& c : read_rows(path, kEvalHeader)) {
    if (c.size() != 6) throw std::runtime_error("malformed eval row in '" + path.string() + "'");
    EvalRow r;
    r.variant = c[0];
    r.seed = std::stoull(c[1]);
    r.level = std::strtod(c[2].c_str(), nullptr);
    r.rms_error = std::strtod(c[3].c_str(), nullptr);
    r.mean_return = std::strtod(c[4].c_str(), nullptr);
    r.input_rms = std::strtod(c[5].c_str(), nullptr);
    report.rows.push_back(std::move(r));
  }
  return report;
}

void write_statefit_csv(const StateFitResult& fit, const std::filesystem::path& path) {
  std::ofstream f = open_out(path);
  f << kStateFitHeader << "\n";
  for (Eigen::Index j = 0; j < fit.r_squared.size(); ++j) {
    f << j << "," << g17(fit.r_squared(j)) << "," << fit.sample_count << "\n";
  }
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::vector<std::tuple<int, double, std::size_t>> read_statefit_csv(const std::filesystem::path& path) {
  std::vector<std::tuple<int, double, std::size_t>> out;
  for (const auto& c : read_rows(path, kStateFitHeader)) {
    if (c.size() != 3) throw std::runtime_error("malformed statefit row in '" + path.string() + "'");
    out.emplace_back(std::stoi(c[0]), std::strtod(c[1].c_str(), nullptr), std::stoull(c[2]));
  }
  return out;
}

void write_scatter_csv(const StatePairs& pairs, const StateFitResult& fit,
                       const std::filesystem::path& path) {
  std::ofstream f = open_out(path);
  const Eigen::Index m = pairs.x_true.cols();
  f << "sample";
  for (Eigen::Index j = 0; j < m; ++j) f << ",true_" << j;
  for (Eigen::Index j = 0; j < m; ++j) f << ",fitted_" << j;
  f << "\n";
  const Eigen::MatrixXd fitted =
      (pairs.xhat * fit.W.transpose()).rowwise() + fit.intercept.transpose();
  for (Eigen::Index r = 0; r < pairs.x_true.rows(); ++r) {
    f << r;
    for (Eigen::Index j = 0; j < m; ++j) f << "," << g17(pairs.x_true(r, j));
    for (Eigen::Index j = 0; j < m; ++j) f << "," << g17(fitted(r, j));
    f << "\n";
  }
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

}  // namespace srlc::analysis
