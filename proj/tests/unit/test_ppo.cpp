#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "srlc/common/error.hpp"
#include "srlc/ppo/ppo.hpp"

using namespace srlc;
using namespace srlc::ppo;
using policy::Policy;
using policy::Variant;

namespace {

// Brute-force GAE: A_t = sum_k (γλ)^(k-t) prod_{j<k}(1 - done_j) δ_k.
std::vector<double> brute_gae(const std::vector<double>& r, const std::vector<double>& v,
                              const std::vector<std::uint8_t>& done, double boot, double g,
                              double l) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double next = k + 1 < n ? v[k + 1] : boot;
    delta[k] = r[k] + g * next * (done[k] ? 0.0 : 1.0) - v[k];
  }
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double weight = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      adv[t] += weight * delta[k];
      if (done[k]) break;
      weight *= g * l;
    }
  }
  return adv;
}

sim::LinearEnv linear_env(int episode_length = 300) {
  sim::LinearEnvConfig cfg;
  cfg.system = sim::generate_stable_linear(3, {4, 1, 1, 1, 1}, 0.9);
  sim::normalize_dc_gain(cfg.system);
  cfg.schedule.episode_length = episode_length;
  cfg.schedule.ref_hold = 100;
  return sim::LinearEnv(cfg);
}

sim::TankEnv tank_env() {
  sim::TankEnvConfig cfg;
  cfg.schedule.episode_length = 300;
  cfg.schedule.ref_lo = 2.0;
  cfg.schedule.ref_hi = 6.0;
  cfg.schedule.ref_hold = 100;
  cfg.schedule.disturbance = true;
  cfg.schedule.dist_hi = cfg.tank.a1;
  cfg.schedule.dist_hold = 50;
  return sim::TankEnv(cfg);
}

PPOConfig small_config() {
  PPOConfig c;
  c.rollout_length = 128;
  c.n_envs = 2;
  c.bptt_length = 16;
  c.minibatch_segments = 4;
  c.epochs = 2;
  c.total_steps = 512;
  c.Kp = 0.5;
  c.lr = 1e-3;
  return c;
}

policy::PolicyDims dims_for(Variant v) {
  policy::PolicyDims d;
  if (v == Variant::kStructure2) {
    d.observer = 2;
    d.ff_observer = 1;
  }
  if (v == Variant::kUnstructured) d.rnn = 16;
  d.mlp = 16;
  return d;
}

}  // namespace

TEST_CASE("GAE examples", "[ppo]") {
  const std::vector<double> r{1.0, -2.0, 0.5, 3.0}, v{0.3, -0.1, 0.7, 0.2};
  const std::vector<std::uint8_t> d{0, 1, 0, 0};
  const GaeResult g = compute_gae(r, v, d, 0.4, 0.9, 0.0);
  CHECK(g.advantages[0] == 1.0 + 0.9 * -0.1 - 0.3);
  CHECK(g.advantages[1] == -2.0 - -0.1);
  CHECK(g.advantages[3] == 3.0 + 0.9 * 0.4 - 0.2);
  for (std::size_t k = 0; k < 4; ++k) CHECK(g.returns[k] == g.advantages[k] + v[k]);

  const std::vector<double> zeros(4, 0.0);
  const std::vector<std::uint8_t> live(4, 0);
  const GaeResult tele = compute_gae(r, zeros, live, 0.0, 1.0, 1.0);
  CHECK(tele.advantages == std::vector<double>{2.5, 1.5, 3.5, 3.0});
}

TEST_CASE("GAE equals the brute-force sum", "[ppo][property]") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t len = trial < 1000 ? 1 + trial % 10 : 1 + trial % 50;
    std::vector<double> r(len), v(len);
    std::vector<std::uint8_t> d(len);
    for (std::size_t k = 0; k < len; ++k) {
      r[k] = n(rng);
      v[k] = n(rng);
      d[k] = u(rng) < 0.15;
    }
    const double boot = n(rng), gamma = 0.5 + 0.5 * u(rng), lambda = u(rng);
    const GaeResult g = compute_gae(r, v, d, boot, gamma, lambda);
    const std::vector<double> ref = brute_gae(r, v, d, boot, gamma, lambda);
    for (std::size_t k = 0; k < len; ++k) REQUIRE(std::abs(g.advantages[k] - ref[k]) < 1e-12);
  }
}

TEST_CASE("config validation", "[ppo]") {
  PPOConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.bptt_length = 48;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.clip_eps = 0.6;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.total_steps = 10;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("rollout collection", "[ppo]") {
  const sim::LinearEnv env = linear_env();
  PPOConfig cfg = small_config();
  cfg.rollout_length = 640;
  cfg.bptt_length = 64;

  SECTION("zero network acts as a P-controller") {
    Policy p = Policy::init(0, Variant::kStructure1, dims_for(Variant::kStructure1));
    for (auto& e : p.params()) {
      if (e.name != "log_std") e.value.fill(0.0);
    }
    Collector col(env, 2, 1);
    const RolloutBuffer b = col.collect(p, cfg);
    const double sigma = std::exp(policy::kLogStdInit);
    for (const EnvTrajectory& tr : b.envs) {
      for (std::size_t t = 0; t < tr.obs.size(); ++t) {
        const double mean = cfg.Kp * (tr.obs[t].y_ref[0] - tr.obs[t].y[0]);
        const double z = (tr.u_pre[t][0] - mean) / sigma;
        const double lp = -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2 * std::numbers::pi);
        REQUIRE(tr.log_prob[t] == Catch::Approx(lp).margin(1e-12));
        REQUIRE(tr.value[t] == 0.0);
      }
    }
  }

  SECTION("done flags follow the episode length") {
    const Policy p = Policy::init(0, Variant::kStructure1, dims_for(Variant::kStructure1));
    Collector col(env, 2, 1);
    const RolloutBuffer a = col.collect(p, cfg);
    const RolloutBuffer b = col.collect(p, cfg);
    for (std::size_t e = 0; e < 2; ++e) {
      std::vector<std::uint8_t> all = a.envs[e].done;
      all.insert(all.end(), b.envs[e].done.begin(), b.envs[e].done.end());
      for (std::size_t t = 0; t < all.size(); ++t) CHECK(all[t] == ((t + 1) % 300 == 0));
    }
    CHECK(a.episode_returns.size() == 4);
    CHECK(a.envs[0].snapshots.size() == 10);
  }

  SECTION("collection is deterministic") {
    const Policy p = Policy::init(0, Variant::kStructure2, dims_for(Variant::kStructure2));
    Collector c1(tank_env(), 2, 5), c2(tank_env(), 2, 5);
    const RolloutBuffer a = c1.collect(p, cfg), b = c2.collect(p, cfg);
    for (std::size_t e = 0; e < 2; ++e) {
      CHECK(a.envs[e].u_pre == b.envs[e].u_pre);
      CHECK(a.envs[e].reward == b.envs[e].reward);
    }
  }

  SECTION("reward scale reaches stored rewards but not episode returns") {
    const Policy p = Policy::init(0, Variant::kStructure1, dims_for(Variant::kStructure1));
    PPOConfig scaled = cfg;
    scaled.reward_scale = 0.25;
    Collector c1(env, 2, 1), c2(env, 2, 1);
    const RolloutBuffer a = c1.collect(p, cfg), b = c2.collect(p, scaled);
    for (std::size_t e = 0; e < 2; ++e) {
      REQUIRE(a.envs[e].reward.size() == b.envs[e].reward.size());
      for (std::size_t t = 0; t < a.envs[e].reward.size(); ++t) {
        CHECK(b.envs[e].reward[t] == 0.25 * a.envs[e].reward[t]);
      }
    }
    CHECK(a.episode_returns == b.episode_returns);
    scaled.reward_scale = 0.0;
    CHECK_THROWS_AS(scaled.validate(), ConfigError);
  }
}

TEST_CASE("replay reproduces stored log-probabilities", "[ppo]") {
  for (Variant v : {Variant::kStructure1, Variant::kStructure2, Variant::kUnstructured}) {
    const Policy p = Policy::init(4, v, dims_for(v));
    PPOConfig cfg = small_config();
    cfg.rollout_length = 640;
    cfg.bptt_length = 32;
    Collector col(tank_env(), 2, 2);
    const RolloutBuffer b = col.collect(p, cfg);
    double worst = 0.0;
    for (int e = 0; e < 2; ++e) {
      for (int s = 0; s < cfg.rollout_length; s += cfg.bptt_length) {
        const std::vector<double> lp = replay_log_probs(p, b, {e, s}, cfg.Kp);
        for (int t = 0; t < cfg.bptt_length; ++t) {
          worst = std::max(worst, std::abs(lp[static_cast<std::size_t>(t)] -
                                           b.envs[static_cast<std::size_t>(e)].log_prob[static_cast<std::size_t>(s + t)]));
        }
      }
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("advantage normalization", "[ppo][property]") {
  const Policy p = Policy::init(1, Variant::kStructure1, dims_for(Variant::kStructure1));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Collector col(linear_env(), 3, seed);
    RolloutBuffer b = col.collect(p, small_config());
    finalize_advantages(b, 0.99, 0.95);
    double sum = 0.0, ss = 0.0, n = 0.0;
    for (const auto& tr : b.envs) {
      for (double a : tr.advantages) {
        sum += a;
        ss += a * a;
        n += 1.0;
      }
    }
    const double mean = sum / n;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(std::sqrt(ss / n - mean * mean) - 1.0) < 1e-8);
  }
}

TEST_CASE("surrogate loss semantics", "[ppo]") {
  const PPOConfig cfg = small_config();
  const Policy p = Policy::init(3, Variant::kStructure1, dims_for(Variant::kStructure1));
  Collector col(linear_env(), 2, 3);
  RolloutBuffer b = col.collect(p, cfg);
  finalize_advantages(b, cfg.gamma, cfg.lambda);
  const std::vector<SegmentRef> segs{{0, 0}, {1, 32}, {0, 96}};

  SECTION("unit ratio gives minus the mean advantage") {
    grad::Tape tape(p.params());
    const LossVars lv = record_loss(tape, p, b, segs, cfg);
    double mean_adv = 0.0;
    for (const auto& s : segs) {
      for (int t = 0; t < cfg.bptt_length; ++t) {
        mean_adv += b.envs[static_cast<std::size_t>(s.env)].advantages[static_cast<std::size_t>(s.start + t)];
      }
    }
    mean_adv /= static_cast<double>(segs.size() * static_cast<std::size_t>(cfg.bptt_length));
    CHECK(tape.value(lv.policy_loss)(0, 0) == Catch::Approx(-mean_adv).margin(1e-12));

    PPOConfig wide = cfg;
    wide.clip_eps = 0.5;
    grad::Tape t2(p.params());
    CHECK(t2.value(record_loss(t2, p, b, segs, wide).policy_loss)(0, 0) ==
          tape.value(lv.policy_loss)(0, 0));
  }

  SECTION("clipped branch has zero gradient") {
    RolloutBuffer c = b;
    for (auto& tr : c.envs) {
      for (std::size_t k = 0; k < tr.log_prob.size(); ++k) {
        tr.log_prob[k] -= std::log(1.0 + 2.0 * cfg.clip_eps);
        tr.advantages[k] = 1.0 + std::abs(tr.advantages[k]);
      }
    }
    grad::Tape tape(p.params());
    const LossVars lv = record_loss(tape, p, c, segs, cfg);
    const grad::GradStore g = tape.backward(lv.policy_loss, grad::Array::scalar(1.0));
    CHECK(g.squared_norm() == 0.0);
  }
}

TEST_CASE("three-step loss matches per-sample arithmetic", "[ppo]") {
  PPOConfig cfg = small_config();
  cfg.rollout_length = 3;
  cfg.bptt_length = 3;
  cfg.n_envs = 1;
  cfg.value_coef = 0.7;
  cfg.entropy_coef = 0.05;
  const Policy p = Policy::init(6, Variant::kStructure2, dims_for(Variant::kStructure2));
  Collector col(tank_env(), 1, 9);
  RolloutBuffer b = col.collect(p, cfg);
  EnvTrajectory& tr = b.envs[0];
  const std::vector<double> stored = tr.log_prob;
  tr.log_prob = {stored[0] + 0.3, stored[1] - 0.5, stored[2] + 0.01};
  tr.advantages = {1.0, -2.0, 0.5};
  tr.returns = {-3.0, 0.25, 1.5};

  double surrogate = 0.0, value = 0.0;
  for (std::size_t t = 0; t < 3; ++t) {
    const double ratio = std::exp(stored[t] - tr.log_prob[t]);
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    surrogate += std::min(ratio * tr.advantages[t], clipped * tr.advantages[t]) / 3.0;
    value += (tr.value[t] - tr.returns[t]) * (tr.value[t] - tr.returns[t]) / 3.0;
  }
  const double log_std = p.params().at("log_std")(0, 0);
  const double entropy = log_std + 0.5 * (1.0 + std::log(2.0 * std::numbers::pi));
  const double expected = -surrogate + cfg.value_coef * value - cfg.entropy_coef * entropy;

  grad::Tape tape(p.params());
  const std::vector<SegmentRef> segs{{0, 0}};
  const LossVars lv = record_loss(tape, p, b, segs, cfg);
  CHECK(tape.value(lv.loss)(0, 0) == Catch::Approx(expected).margin(1e-12));
}

TEST_CASE("PPO gradients reach the observer", "[ppo][property]") {
  const PPOConfig cfg = small_config();
  for (Variant v : {Variant::kStructure1, Variant::kStructure2, Variant::kUnstructured}) {
    const Policy p = Policy::init(2, v, dims_for(v));
    Collector col(tank_env(), 2, 4);
    RolloutBuffer b = col.collect(p, cfg);
    finalize_advantages(b, cfg.gamma, cfg.lambda);
    const std::vector<SegmentRef> segs{{0, 16}, {1, 48}};
    grad::Tape tape(p.params());
    const grad::GradStore g = tape.backward(record_loss(tape, p, b, segs, cfg).loss,
                                            grad::Array::scalar(1.0));
    const std::string cell = v == Variant::kUnstructured ? "actor_rnn" : "observer";
    for (const char* part : {".W_in", ".W_rec"}) {
      double n = 0.0;
      for (double x : g.at(cell + part).values()) n += x * x;
      CHECK(n > 0.0);
    }
    if (v == Variant::kStructure2) {
      double n = 0.0;
      for (double x : g.at("ff_observer.W_in").values()) n += x * x;
      CHECK(n > 0.0);
    }
  }
}

TEST_CASE("Adam first step moves by the learning rate", "[ppo]") {
  grad::ParamStore p;
  p.add("w", grad::Array::vector({1.0, -2.0, 0.5}));
  grad::GradStore g(p);
  g.at("w") = grad::Array::vector({0.3, -4.0, 0.0});
  Adam opt(p, 0.01);
  opt.step(p, g);
  CHECK(p.at("w")[0] == Catch::Approx(1.0 - 0.01).margin(1e-9));
  CHECK(p.at("w")[1] == Catch::Approx(-2.0 + 0.01).margin(1e-9));
  CHECK(p.at("w")[2] == 0.5);
}

TEST_CASE("non-finite loss aborts the round and restores parameters", "[ppo]") {
  const PPOConfig cfg = small_config();
  Policy p = Policy::init(1, Variant::kStructure1, dims_for(Variant::kStructure1));
  Collector col(linear_env(), 2, 1);
  RolloutBuffer b = col.collect(p, cfg);
  finalize_advantages(b, cfg.gamma, cfg.lambda);
  b.envs[1].returns[5] = NAN;
  const grad::ParamStore before = p.params();
  Adam opt(p.params(), cfg.lr);
  Rng rng(0);
  CHECK_THROWS_AS(ppo_update(p, opt, b, cfg, rng), TrainingAbort);
  CHECK(p.params() == before);
}

TEST_CASE("training determinism and step accounting", "[ppo]") {
  PPOConfig cfg = small_config();
  cfg.total_steps = cfg.rollout_length;
  const auto env = tank_env();
  const TrainResult one = train(env, Policy::init(0, Variant::kStructure2, dims_for(Variant::kStructure2)), cfg);
  CHECK(one.log.records.size() == 1);
  CHECK(one.log.records[0].step == cfg.rollout_length * cfg.n_envs);

  cfg.total_steps = 1200;
  const auto init = Policy::init(0, Variant::kStructure1, dims_for(Variant::kStructure1));
  const TrainResult a = train(env, init, cfg);
  const TrainResult b = train(env, init, cfg);
  CHECK(a.log.records == b.log.records);
  CHECK(a.policy.params() == b.policy.params());
  CHECK(!(a.policy.params() == init.params()));
  for (std::size_t i = 0; i < a.log.records.size(); ++i) {
    CHECK(a.log.records[i].step == static_cast<long>((i + 1) * 256));
    CHECK(a.log.records[i].seconds == 0.0);
  }
}

TEST_CASE("training writes logs and checkpoints", "[ppo]") {
  const auto dir = std::filesystem::temp_directory_path() / "srlc_test_ppo_run";
  std::filesystem::remove_all(dir);
  PPOConfig cfg = small_config();
  cfg.total_steps = 1024;
  TrainOptions opt;
  opt.out_dir = dir;
  opt.checkpoint_every = 512;
  const TrainResult r =
      train(linear_env(), Policy::init(0, Variant::kUnstructured, dims_for(Variant::kUnstructured)), cfg, opt);
  CHECK(std::filesystem::exists(dir / "512.srlc"));
  CHECK(std::filesystem::exists(dir / "1024.meta"));
  const TrainingLog log = TrainingLog::read_csv(dir / "train.csv");
  CHECK(log.records == r.log.records);
  const Policy back = load_checkpoint(dir / "final.srlc");
  CHECK(back.variant() == Variant::kUnstructured);
  CHECK(back.params() == r.policy.params());
  std::filesystem::remove(dir / "512.meta");
  CHECK_THROWS_AS(load_checkpoint(dir / "512.srlc"), ConfigError);
  CHECK_THROWS_AS(load_checkpoint(dir / "nope.srlc"), ConfigError);
  std::filesystem::remove_all(dir);
}
