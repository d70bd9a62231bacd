#include "srlc/ppo/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "srlc/common/error.hpp"
#include "srlc/gradcore/checkpoint.hpp"

namespace srlc::ppo {

using grad::Array;
using grad::Tape;
using grad::Var;
using policy::HiddenState;
using policy::Policy;

void PPOConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("ppo: " + m); };
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must be in (0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail("lambda must be in [0, 1]");
  if (!(clip_eps > 0.0 && clip_eps <= 0.5)) fail("clip_eps must be in (0, 0.5]");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (epochs < 1) fail("epochs must be >= 1");
  if (rollout_length < 1 || n_envs < 1) fail("rollout_length and n_envs must be >= 1");
  if (bptt_length < 1 || rollout_length % bptt_length != 0) {
    fail("bptt_length must divide rollout_length");
  }
  if (minibatch_segments < 1) fail("minibatch_segments must be >= 1");
  if (value_coef < 0.0 || entropy_coef < 0.0) fail("loss coefficients must be non-negative");
  if (!(grad_clip_norm > 0.0)) fail("grad_clip_norm must be positive");
  if (!(reward_scale > 0.0) || !std::isfinite(reward_scale)) fail("reward_scale must be positive");
  if (total_steps < rollout_length) fail("total_steps must be >= rollout_length");
  if (!std::isfinite(Kp)) fail("Kp must be finite");
}

// ---------------------------------------------------------------------------
// Collection

Collector::Collector(const sim::Env& prototype, int n_envs, std::uint64_t seed) : seed_(seed) {
  if (n_envs < 1) throw ConfigError("collector needs at least one env");
  for (int i = 0; i < n_envs; ++i) {
    envs_.push_back(prototype.clone());
    rngs_.push_back(make_rng(seed, Stream::kExploration, static_cast<std::uint64_t>(i)));
  }
  const auto n = static_cast<std::size_t>(n_envs);
  obs_.resize(n);
  hidden_.resize(n);
  prev_u_.resize(n);
  episodes_.assign(n, 0);
  running_return_.assign(n, 0.0);
}

void Collector::start_episode(std::size_t i, const Policy& policy) {
  const std::uint64_t key = (static_cast<std::uint64_t>(i) << 32) | episodes_[i]++;
  obs_[i] = envs_[i]->reset(derive_seed(seed_, Stream::kEpisode, key));
  hidden_[i] = policy.initial_hidden();
  prev_u_[i].assign(static_cast<std::size_t>(policy.dims().n_u), 0.0);
  running_return_[i] = 0.0;
}

RolloutBuffer Collector::collect(const Policy& policy, const PPOConfig& cfg) {
  const std::size_t n = envs_.size();
  if (!started_) {
    for (std::size_t i = 0; i < n; ++i) start_episode(i, policy);
    started_ = true;
  }
  const sim::ActionBounds bounds = envs_[0]->action_bounds();
  std::vector<Rng*> rng_ptrs;
  for (Rng& r : rngs_) rng_ptrs.push_back(&r);

  RolloutBuffer buf;
  buf.length = cfg.rollout_length;
  buf.bptt_length = cfg.bptt_length;
  buf.envs.resize(n);
  for (int t = 0; t < cfg.rollout_length; ++t) {
    if (t % cfg.bptt_length == 0) {
      for (std::size_t i = 0; i < n; ++i) buf.envs[i].snapshots.push_back(hidden_[i]);
    }
    std::vector<policy::ActResult> acts =
        policy::act_batch(policy, hidden_, obs_, prev_u_, rng_ptrs, false, cfg.Kp, bounds);
    for (std::size_t i = 0; i < n; ++i) {
      EnvTrajectory& tr = buf.envs[i];
      policy::ActResult& a = acts[i];
      tr.obs.push_back(obs_[i]);
      tr.u_prev.push_back(prev_u_[i]);
      tr.u_pre.push_back(a.u_pre);
      tr.log_prob.push_back(a.log_prob);
      tr.value.push_back(a.value);
      sim::StepResult s = envs_[i]->step(a.u);
      tr.reward.push_back(cfg.reward_scale * s.reward);
      tr.done.push_back(s.done ? 1 : 0);
      running_return_[i] += s.reward;
      if (s.done) {
        buf.episode_returns.push_back(running_return_[i]);
        start_episode(i, policy);
      } else {
        obs_[i] = std::move(s.obs);
        hidden_[i] = std::move(a.next);
        prev_u_[i] = std::move(a.u);
      }
    }
  }
  const std::vector<policy::ActResult> boot =
      policy::act_batch(policy, hidden_, obs_, prev_u_, {}, true, cfg.Kp, bounds);
  for (std::size_t i = 0; i < n; ++i) buf.envs[i].bootstrap = boot[i].value;
  return buf;
}

// ---------------------------------------------------------------------------
// Advantages

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const std::uint8_t> dones, double bootstrap, double gamma,
                      double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw std::invalid_argument("compute_gae: rewards, values and dones differ in length");
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  double next_value = bootstrap;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[k] = next_adv;
    out.returns[k] = next_adv + values[k];
    next_value = values[k];
  }
  return out;
}

void finalize_advantages(RolloutBuffer& buffer, double gamma, double lambda) {
  double sum = 0.0, count = 0.0;
  for (EnvTrajectory& tr : buffer.envs) {
    GaeResult g = compute_gae(tr.reward, tr.value, tr.done, tr.bootstrap, gamma, lambda);
    tr.advantages = std::move(g.advantages);
    tr.returns = std::move(g.returns);
    for (double a : tr.advantages) sum += a;
    count += static_cast<double>(tr.advantages.size());
  }
  const double mean = sum / count;
  double ss = 0.0;
  for (const EnvTrajectory& tr : buffer.envs) {
    for (double a : tr.advantages) ss += (a - mean) * (a - mean);
  }
  const double std = std::sqrt(ss / count);
  const double inv = std > 0.0 ? 1.0 / std : 1.0;
  for (EnvTrajectory& tr : buffer.envs) {
    for (double& a : tr.advantages) a = (a - mean) * inv;
  }
}

// ---------------------------------------------------------------------------
// Loss

namespace {

Array gather(std::span<const SegmentRef> segs, int rows,
             const std::function<const std::vector<double>&(const SegmentRef&)>& get) {
  Array out(rows, static_cast<int>(segs.size()));
  for (std::size_t c = 0; c < segs.size(); ++c) {
    const std::vector<double>& v = get(segs[c]);
    for (int r = 0; r < rows; ++r) out(r, static_cast<int>(c)) = v[static_cast<std::size_t>(r)];
  }
  return out;
}

struct ReplayVars {
  std::vector<Var> log_prob;  // per step, 1 x M
  std::vector<Var> value;     // per step, 1 x M
};

ReplayVars replay(Tape& tape, const Policy& policy, const RolloutBuffer& buffer,
                  std::span<const SegmentRef> segs, double Kp) {
  const policy::PolicyDims& d = policy.dims();
  const int T = buffer.bptt_length;
  const int M = static_cast<int>(segs.size());
  auto traj = [&](const SegmentRef& s) -> const EnvTrajectory& {
    return buffer.envs[static_cast<std::size_t>(s.env)];
  };
  auto snap = [&](const SegmentRef& s) -> const HiddenState& {
    return traj(s).snapshots[static_cast<std::size_t>(s.start / T)];
  };

  policy::StepInputs in;
  const HiddenState& h0 = snap(segs[0]);
  in.xhat_prev = tape.input(
      gather(segs, static_cast<int>(h0.xhat.size()), [&](const SegmentRef& s) -> const auto& { return snap(s).xhat; }));
  if (!h0.xd.empty()) {
    in.xd_prev = tape.input(gather(segs, static_cast<int>(h0.xd.size()),
                                   [&](const SegmentRef& s) -> const auto& { return snap(s).xd; }));
  }
  if (!h0.critic.empty()) {
    in.critic_prev = tape.input(gather(segs, static_cast<int>(h0.critic.size()),
                                       [&](const SegmentRef& s) -> const auto& { return snap(s).critic; }));
  }
  const Var log_std = tape.param("log_std");

  ReplayVars out;
  for (int t = 0; t < T; ++t) {
    auto at = [&](const SegmentRef& s) { return static_cast<std::size_t>(s.start + t); };
    in.y = tape.input(gather(segs, d.n_y, [&](const SegmentRef& s) -> const auto& { return traj(s).obs[at(s)].y; }));
    in.d = tape.input(gather(segs, d.n_d, [&](const SegmentRef& s) -> const auto& { return traj(s).obs[at(s)].d; }));
    in.y_ref = tape.input(
        gather(segs, d.n_y, [&](const SegmentRef& s) -> const auto& { return traj(s).obs[at(s)].y_ref; }));
    in.u_prev = tape.input(gather(segs, d.n_u, [&](const SegmentRef& s) -> const auto& { return traj(s).u_prev[at(s)]; }));
    const Array u_pre = gather(segs, d.n_u, [&](const SegmentRef& s) -> const auto& { return traj(s).u_pre[at(s)]; });

    Array prior(d.n_u, M);
    for (int c = 0; c < M; ++c) {
      const sim::Observation& o = traj(segs[static_cast<std::size_t>(c)]).obs[at(segs[static_cast<std::size_t>(c)])];
      for (int r = 0; r < d.n_u; ++r) {
        prior(r, c) = Kp * (o.y_ref[static_cast<std::size_t>(r)] - o.y[static_cast<std::size_t>(r)]);
      }
    }

    const policy::StepVars sv = policy.step(tape, in);
    const Var mean = tape.add(tape.input(std::move(prior)), sv.u_mean);
    out.log_prob.push_back(tape.gaussian_log_density(tape.input(u_pre), mean, log_std));
    out.value.push_back(sv.value);

    // Episodes that ended at step t restart from a zero hidden state.
    bool any_done = false;
    for (const SegmentRef& s : segs) any_done = any_done || traj(s).done[at(s)] != 0;
    auto masked = [&](Var h) {
      if (!any_done || !h.valid()) return h;
      const int rows = tape.value(h).rows();
      Array mask(rows, M, 1.0);
      for (int c = 0; c < M; ++c) {
        const SegmentRef& s = segs[static_cast<std::size_t>(c)];
        if (traj(s).done[at(s)] != 0) {
          for (int r = 0; r < rows; ++r) mask(r, c) = 0.0;
        }
      }
      return tape.mul(h, tape.input(std::move(mask)));
    };
    in.xhat_prev = masked(sv.xhat);
    in.xd_prev = masked(sv.xd);
    in.critic_prev = masked(sv.critic);
  }
  return out;
}

}  // namespace

LossVars record_loss(Tape& tape, const Policy& policy, const RolloutBuffer& buffer,
                     std::span<const SegmentRef> segments, const PPOConfig& cfg) {
  if (segments.empty()) throw std::invalid_argument("record_loss: no segments");
  const int T = buffer.bptt_length;
  const int M = static_cast<int>(segments.size());
  const ReplayVars rv = replay(tape, policy, buffer, segments, cfg.Kp);

  Array old_logp(1, T * M), adv(1, T * M), ret(1, T * M);
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < M; ++c) {
      const SegmentRef& s = segments[static_cast<std::size_t>(c)];
      const EnvTrajectory& tr = buffer.envs[static_cast<std::size_t>(s.env)];
      const auto k = static_cast<std::size_t>(s.start + t);
      old_logp(0, t * M + c) = tr.log_prob[k];
      adv(0, t * M + c) = tr.advantages[k];
      ret(0, t * M + c) = tr.returns[k];
    }
  }
  const Var logp = tape.concat(rv.log_prob, grad::Axis::kCols);
  const Var value = tape.concat(rv.value, grad::Axis::kCols);
  const Var A = tape.input(std::move(adv));

  const Var ratio = tape.exp(tape.sub(logp, tape.input(std::move(old_logp))));
  const Var surr1 = tape.mul(ratio, A);
  const Var surr2 = tape.mul(tape.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), A);
  LossVars out;
  out.policy_loss = tape.scale(tape.mean(tape.minimum(surr1, surr2)), -1.0);
  out.value_loss = tape.mean(tape.squared_error(value, tape.input(std::move(ret))));

  const int n_u = policy.dims().n_u;
  const double entropy_const = 0.5 * n_u * (1.0 + std::log(2.0 * std::numbers::pi));
  out.entropy = tape.add(tape.linear(tape.input(Array(1, n_u, 1.0)), tape.param("log_std")),
                         tape.input(Array::scalar(entropy_const)));
  out.loss = tape.add(out.policy_loss, tape.scale(out.value_loss, cfg.value_coef));
  if (cfg.entropy_coef != 0.0) out.loss = tape.sub(out.loss, tape.scale(out.entropy, cfg.entropy_coef));
  return out;
}

std::vector<double> replay_log_probs(const Policy& policy, const RolloutBuffer& buffer,
                                     const SegmentRef& segment, double Kp) {
  Tape tape(policy.params());
  const ReplayVars rv = replay(tape, policy, buffer, std::span(&segment, 1), Kp);
  std::vector<double> out;
  for (Var v : rv.log_prob) out.push_back(tape.value(v)(0, 0));
  return out;
}

// ---------------------------------------------------------------------------
// Optimization

Adam::Adam(const grad::ParamStore& like, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(like), v_(like) {}

void Adam::step(grad::ParamStore& params, const grad::GradStore& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.entry(i).value.values();
    const auto g = grads.entry(i).value.values();
    auto m = m_.entry(i).value.values();
    auto v = v_.entry(i).value.values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      p[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

LossStats ppo_update(Policy& policy, Adam& optimizer, const RolloutBuffer& buffer,
                     const PPOConfig& cfg, Rng& shuffle_rng) {
  const grad::ParamStore saved_params = policy.params();
  const Adam saved_optimizer = optimizer;

  std::vector<SegmentRef> segments;
  for (int e = 0; e < static_cast<int>(buffer.envs.size()); ++e) {
    for (int s = 0; s < buffer.length; s += buffer.bptt_length) segments.push_back({e, s});
  }
  LossStats stats;
  int batches = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(segments.begin(), segments.end(), shuffle_rng);
    for (std::size_t b = 0; b < segments.size(); b += static_cast<std::size_t>(cfg.minibatch_segments)) {
      const std::size_t e = std::min(segments.size(), b + static_cast<std::size_t>(cfg.minibatch_segments));
      const std::span<const SegmentRef> mb(segments.data() + b, e - b);
      Tape tape(policy.params());
      const LossVars lv = record_loss(tape, policy, buffer, mb, cfg);
      const double loss = tape.value(lv.loss)(0, 0);
      grad::GradStore g;
      if (std::isfinite(loss)) g = tape.backward(lv.loss, Array::scalar(1.0));
      const double norm = std::isfinite(loss) ? std::sqrt(g.squared_norm()) : NAN;
      if (!std::isfinite(loss) || !std::isfinite(norm)) {
        policy.params() = saved_params;
        optimizer = saved_optimizer;
        std::string where;
        try {
          tape.check_finite();
        } catch (const NumericError& err) {
          where = std::string(": ") + err.what();
        }
        throw TrainingAbort("non-finite loss or gradient in epoch " + std::to_string(epoch) +
                            "; parameters restored to the start of the round" + where);
      }
      if (norm > cfg.grad_clip_norm) g.scale(cfg.grad_clip_norm / norm);
      optimizer.step(policy.params(), g);
      policy.project();

      stats.policy_loss += tape.value(lv.policy_loss)(0, 0);
      stats.value_loss += tape.value(lv.value_loss)(0, 0);
      stats.entropy += tape.value(lv.entropy)(0, 0);
      stats.grad_norm += norm;
      ++batches;
    }
  }
  stats.policy_loss /= batches;
  stats.value_loss /= batches;
  stats.entropy /= batches;
  stats.grad_norm /= batches;
  return stats;
}

// ---------------------------------------------------------------------------
// Logs and checkpoints

namespace {

std::string format_row(const TrainRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.step, r.mean_return,
                r.policy_loss, r.value_loss, r.entropy, r.grad_norm, r.seconds);
  return buf;
}

std::ofstream open_or_throw(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ofstream f(path, mode);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return f;
}

}  // namespace

void TrainingLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream f = open_or_throw(path, std::ios::out | std::ios::trunc);
  f << kHeader << "\n";
  for (const TrainRecord& r : records) f << format_row(r) << "\n";
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

TrainingLog TrainingLog::read_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(f, line) || line != kHeader) {
    throw std::runtime_error("'" + path.string() + "' is not a training log");
  }
  TrainingLog log;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw std::runtime_error("malformed training log row: " + line);
    TrainRecord r;
    r.step = std::stol(cells[0]);
    double* fields[] = {&r.mean_return, &r.policy_loss, &r.value_loss, &r.entropy, &r.grad_norm, &r.seconds};
    for (std::size_t i = 0; i < 6; ++i) *fields[i] = std::strtod(cells[i + 1].c_str(), nullptr);
    log.records.push_back(r);
  }
  return log;
}

void save_checkpoint(const Policy& policy, const std::filesystem::path& dir, const std::string& name) {
  grad::save_params(policy.params(), dir / (name + ".srlc"));
  std::ofstream meta = open_or_throw(dir / (name + ".meta"), std::ios::out | std::ios::trunc);
  meta << policy::policy_metadata(policy);
  if (!meta) throw std::runtime_error("failed writing checkpoint metadata in '" + dir.string() + "'");
}

Policy load_checkpoint(const std::filesystem::path& srlc_path) {
  if (!std::filesystem::exists(srlc_path)) {
    throw ConfigError("checkpoint '" + srlc_path.string() + "' does not exist");
  }
  std::filesystem::path meta_path = srlc_path;
  meta_path.replace_extension(".meta");
  std::ifstream meta(meta_path);
  if (!meta) throw ConfigError("checkpoint metadata '" + meta_path.string() + "' is missing");
  std::stringstream ss;
  ss << meta.rdbuf();
  const policy::PolicyMetadata m = policy::parse_policy_metadata(ss.str());
  return Policy(m.variant, m.dims, grad::load_params(srlc_path), m.scaling);
}

TrainResult train(const sim::Env& prototype, Policy initial, const PPOConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  const auto clock_start = std::chrono::steady_clock::now();
  Collector collector(prototype, cfg.n_envs, cfg.seed);
  Adam optimizer(initial.params(), cfg.lr);
  Rng shuffle_rng = make_rng(cfg.seed, Stream::kShuffle);
  TrainResult result{std::move(initial), {}};

  const bool writing = !options.out_dir.empty();
  std::ofstream csv;
  if (writing) {
    std::filesystem::create_directories(options.out_dir);
    csv = open_or_throw(options.out_dir / "train.csv", std::ios::out | std::ios::trunc);
    csv << TrainingLog::kHeader << "\n" << std::flush;
  }

  long step = 0;
  double last_return = std::numeric_limits<double>::quiet_NaN();
  while (step < cfg.total_steps) {
    RolloutBuffer buffer = collector.collect(result.policy, cfg);
    finalize_advantages(buffer, cfg.gamma, cfg.lambda);
    const LossStats stats = ppo_update(result.policy, optimizer, buffer, cfg, shuffle_rng);
    const long prev_step = step;
    step += static_cast<long>(cfg.rollout_length) * cfg.n_envs;

    if (!buffer.episode_returns.empty()) {
      last_return = std::accumulate(buffer.episode_returns.begin(), buffer.episode_returns.end(), 0.0) /
                    static_cast<double>(buffer.episode_returns.size());
    }
    TrainRecord rec{step, last_return, stats.policy_loss, stats.value_loss, stats.entropy,
                    stats.grad_norm, 0.0};
    if (options.record_wall_time) {
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
    }
    result.log.records.push_back(rec);
    if (writing) {
      csv << format_row(rec) << "\n" << std::flush;
      if (options.checkpoint_every > 0 &&
          step / options.checkpoint_every != prev_step / options.checkpoint_every) {
        save_checkpoint(result.policy, options.out_dir, std::to_string(step));
      }
    }
    if (options.on_round && !options.on_round(rec, result.policy)) break;
  }
  if (writing) save_checkpoint(result.policy, options.out_dir, "final");
  return result;
}

}  // namespace srlc::ppo
