#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "srlc/common/error.hpp"
#include "srlc/gradcore/fd_check.hpp"
#include "srlc/policy/policy.hpp"

using namespace srlc;
using namespace srlc::policy;
using grad::Array;
using grad::Tape;
using grad::Var;

namespace {

PolicyDims linear_dims() { return PolicyDims{}; }

PolicyDims tank_dims(Variant v) {
  PolicyDims d;
  d.observer = v == Variant::kStructure2 ? 2 : 3;
  d.ff_observer = v == Variant::kStructure2 ? 1 : 0;
  return d;
}

Policy zeroed(Policy p) {
  for (auto& e : p.params()) e.value.fill(0.0);
  return p;
}

Array col(std::vector<double> v) { return Array::vector(std::move(v)); }

std::vector<double> apply_elman(const Array& W_in, const Array& W_rec, const Array& b,
                                const std::vector<double>& h, const std::vector<double>& x) {
  std::vector<double> out(static_cast<std::size_t>(b.rows()));
  for (int i = 0; i < b.rows(); ++i) {
    double s = b(i, 0);
    for (int j = 0; j < W_in.cols(); ++j) s += W_in(i, j) * x[static_cast<std::size_t>(j)];
    for (int j = 0; j < W_rec.cols(); ++j) s += W_rec(i, j) * h[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = std::tanh(s);
  }
  return out;
}

sim::Observation make_obs(double y, double d, double ref) { return {{y}, {d}, {ref}}; }

}  // namespace

TEST_CASE("variant names round-trip", "[policy]") {
  for (Variant v : {Variant::kStructure1, Variant::kStructure2, Variant::kUnstructured}) {
    CHECK(parse_variant(variant_name(v)) == v);
  }
  CHECK_THROWS_AS(parse_variant("lstm"), ConfigError);
}

TEST_CASE("observer step examples", "[policy]") {
  const Policy p = zeroed(Policy::init(1, Variant::kStructure1, linear_dims()));
  Tape t(p.params());
  const Var x = p.observer_step(t, t.input(Array(10, 1, 0.7)), t.input(col({2.0})),
                                t.input(col({-1.0})), t.input(col({0.3})), Var{});
  for (double v : t.value(x).values()) CHECK(v == 0.0);

  Policy q = Policy::init(2, Variant::kStructure1, linear_dims());
  q.params().at("observer.W_rec").fill(0.0);
  Tape t2(q.params());
  const Var a = q.observer_step(t2, t2.input(Array(10, 1, 0.9)), t2.input(col({2.0})),
                                t2.input(col({-1.0})), t2.input(col({0.3})), Var{});
  const Var b = q.observer_step(t2, t2.input(Array(10, 1, -0.4)), t2.input(col({2.0})),
                                t2.input(col({-1.0})), t2.input(col({0.3})), Var{});
  CHECK(t2.value(a) == t2.value(b));

  const Policy s2 = Policy::init(3, Variant::kStructure2, tank_dims(Variant::kStructure2));
  Tape t3(s2.params());
  CHECK_THROWS_AS(s2.observer_step(t3, t3.input(Array(2, 1)), t3.input(col({1.0})),
                                   t3.input(col({1.0})), t3.input(col({0.0})), Var{}),
                  ConfigError);
  const Policy s1 = Policy::init(3, Variant::kStructure1, linear_dims());
  Tape t4(s1.params());
  CHECK_THROWS_AS(s1.ff_observer_step(t4, t4.input(Array(1, 1)), t4.input(col({0.0}))),
                  ConfigError);
}

TEST_CASE("50-step observer rollout matches a plain recurrence", "[policy]") {
  const Policy p = Policy::init(11, Variant::kStructure1, linear_dims());
  const auto& P = p.params();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  HiddenState h = p.initial_hidden();
  std::vector<double> oracle(10, 0.0);
  std::vector<double> u_prev{0.0};
  Rng unused(0);
  for (int t = 0; t < 50; ++t) {
    const sim::Observation o = make_obs(n(rng), n(rng), n(rng));
    const ActResult r = act(p, h, o, u_prev, unused, true, 0.0, {-100.0, 100.0});
    oracle = apply_elman(P.at("observer.W_in"), P.at("observer.W_rec"), P.at("observer.b"), oracle,
                         {o.y[0], u_prev[0], o.d[0]});
    for (std::size_t i = 0; i < 10; ++i) CHECK(r.next.xhat[i] == Catch::Approx(oracle[i]).margin(1e-13));
    h = r.next;
    u_prev = r.u;
  }
}

TEST_CASE("feedforward observer examples", "[policy]") {
  Policy p = Policy::init(4, Variant::kStructure2, tank_dims(Variant::kStructure2));
  Rng rng(0);
  HiddenState h = p.initial_hidden();
  std::vector<double> u{1.0};
  for (int t = 0; t < 30; ++t) {
    const ActResult r = act(p, h, make_obs(3.0 + t, 0.0, 4.0), u, rng, false, 1.0, {0.0, 10.0});
    CHECK(r.next.xd == std::vector<double>{0.0});
    h = r.next;
    u = r.u;
  }

  // Small weights make the cell a contraction; iterate a constant d to its fixed point.
  for (auto name : {"ff_observer.W_in", "ff_observer.W_rec", "ff_observer.b"}) {
    for (double& v : p.params().at(name).values()) v *= 0.5;
  }
  p.params().at("ff_observer.b").fill(0.1);
  double xd = 0.0;
  const double w_in = p.params().at("ff_observer.W_in")(0, 0);
  const double w_rec = p.params().at("ff_observer.W_rec")(0, 0);
  double prev = 1.0;
  int iters = 0;
  while (std::abs(xd - prev) > 1e-10 && iters < 10000) {
    prev = xd;
    xd = std::tanh(w_in * 0.3 + w_rec * xd + 0.1);
    ++iters;
  }
  REQUIRE(iters < 10000);
  h = p.initial_hidden();
  for (int t = 0; t < iters + 50; ++t) {
    h = act(p, h, make_obs(2.0, 0.3, 4.0), u, rng, true, 0.0, {0.0, 10.0}).next;
  }
  CHECK(h.xd[0] == Catch::Approx(xd).margin(1e-9));
}

TEST_CASE("feedforward estimate is isolated from y and u", "[policy][property]") {
  const Policy p = Policy::init(9, Variant::kStructure2, tank_dims(Variant::kStructure2));
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 2.0);
  std::uniform_real_distribution<double> dist(0.0, 0.5);
  for (int trial = 0; trial < 200; ++trial) {
    HiddenState a = p.initial_hidden(), b = a;
    std::vector<double> ua{0.0}, ub{0.0};
    Rng ra(trial), rb(trial + 1000);
    for (int t = 0; t < 20; ++t) {
      const double d = dist(rng);
      const ActResult x = act(p, a, make_obs(n(rng), d, n(rng)), ua, ra, false, 1.0, {0.0, 10.0});
      const ActResult y = act(p, b, make_obs(n(rng), d, n(rng)), ub, rb, false, 1.0, {0.0, 10.0});
      REQUIRE(x.next.xd == y.next.xd);
      a = x.next;
      b = y.next;
      ua = {n(rng)};
      ub = {n(rng)};
    }
  }
}

TEST_CASE("heads with zero parameters", "[policy]") {
  for (Variant v : {Variant::kStructure1, Variant::kStructure2, Variant::kUnstructured}) {
    const PolicyDims d = tank_dims(v);
    const Policy p = zeroed(Policy::init(1, v, d));
    Rng rng(0);
    const ActResult r = act(p, p.initial_hidden(), make_obs(1.0, 0.2, 3.0), std::vector<double>{0.5},
                            rng, true, 2.0, {0.0, 10.0});
    CHECK(r.value == 0.0);
    REQUIRE(r.mean.size() == 1);
    CHECK(r.mean[0] == 4.0);  // pure P-control: 2 * (3 - 1)
    CHECK(r.u[0] == 4.0);
    const ActResult clipped = act(p, p.initial_hidden(), make_obs(1.0, 0.2, 9.0),
                                  std::vector<double>{0.5}, rng, true, 2.0, {0.0, 10.0});
    CHECK(clipped.u[0] == 10.0);
    CHECK(clipped.u_pre[0] == 16.0);
  }
}

TEST_CASE("log-probability at the mean is the Gaussian peak", "[policy]") {
  PolicyDims d;
  d.n_y = 2;
  d.n_u = 2;
  Policy p = Policy::init(5, Variant::kStructure1, d);
  p.params().at("log_std") = Array::vector({-0.3, 0.2});
  Rng rng(0);
  sim::Observation o{{0.1, 0.2}, {0.0}, {0.5, -0.5}};
  const ActResult r = act(p, p.initial_hidden(), o, std::vector<double>{0.0, 0.0}, rng, true, 0.0,
                          {-100.0, 100.0});
  const double expected = -0.5 * std::log(2 * std::numbers::pi * std::exp(-0.6)) -
                          0.5 * std::log(2 * std::numbers::pi * std::exp(0.4));
  CHECK(r.log_prob == Catch::Approx(expected).margin(1e-12));
}

TEST_CASE("controller gradient with respect to the estimate", "[policy]") {
  const Policy p = Policy::init(6, Variant::kStructure1, linear_dims());
  grad::ParamStore store = p.params();
  store.add("probe.xhat", Array(10, 3, 0.0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  for (double& v : store.at("probe.xhat").values()) v = u(rng);
  const Policy probe(Variant::kStructure1, linear_dims(), p.params());
  auto program = [&](Tape& t) {
    const Var m = probe.controller_mean(t, t.param("probe.xhat"), Var{},
                                        t.input(Array(1, 3, std::vector<double>{0.2, -0.5, 1.0})));
    return t.mean(t.mul(m, m));
  };
  CHECK(grad::fd_check(program, store, 64, 1e-6) < 1e-5);
}

TEST_CASE("critic shares the observer with the controller", "[policy]") {
  const Policy p = Policy::init(7, Variant::kStructure1, linear_dims());
  std::size_t recurrent_cells = 0;
  for (const auto& e : p.params()) recurrent_cells += e.name.ends_with(".W_rec");
  CHECK(recurrent_cells == 1);

  // Perturbing observer weights moves both heads.
  Policy q = p;
  q.params().at("observer.W_in")(0, 0) += 0.5;
  Rng rng(0);
  HiddenState hp = p.initial_hidden(), hq = q.initial_hidden();
  std::vector<double> u{0.0};
  ActResult rp, rq;
  for (int t = 0; t < 3; ++t) {
    rp = act(p, hp, make_obs(1.0, 0.0, 0.5), u, rng, true, 0.0, {-10.0, 10.0});
    rq = act(q, hq, make_obs(1.0, 0.0, 0.5), u, rng, true, 0.0, {-10.0, 10.0});
    hp = rp.next;
    hq = rq.next;
  }
  CHECK(rp.value != rq.value);
  CHECK(rp.mean != rq.mean);
}

TEST_CASE("unstructured baseline has separate actor and critic RNNs", "[policy]") {
  const Policy p = Policy::init(8, Variant::kUnstructured, linear_dims());
  CHECK(p.params().at("actor_rnn.W_in").rows() == 64);
  CHECK(p.params().at("actor_rnn.W_in").cols() == 4);
  CHECK(p.params().at("critic_rnn.W_rec").rows() == 64);
  Policy q = p;
  for (double& v : q.params().at("critic_rnn.W_in").values()) v *= -1.0;
  Rng rng(0);
  HiddenState hp = p.initial_hidden(), hq = q.initial_hidden();
  std::vector<double> u{0.0};
  for (int t = 0; t < 5; ++t) {
    const ActResult a = act(p, hp, make_obs(0.5, 0.1, 1.0), u, rng, true, 0.0, {-10.0, 10.0});
    const ActResult b = act(q, hq, make_obs(0.5, 0.1, 1.0), u, rng, true, 0.0, {-10.0, 10.0});
    CHECK(a.mean == b.mean);
    CHECK(a.next.xhat == b.next.xhat);
    CHECK(a.next.critic != b.next.critic);
    hp = a.next;
    hq = b.next;
  }
}

TEST_CASE("initialization invariants", "[policy]") {
  for (Variant v : {Variant::kStructure1, Variant::kStructure2, Variant::kUnstructured}) {
    const PolicyDims d = v == Variant::kStructure2 ? tank_dims(v) : linear_dims();
    CHECK(Policy::init(3, v, d).params() == Policy::init(3, v, d).params());
    CHECK(!(Policy::init(3, v, d).params() == Policy::init(4, v, d).params()));
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const Policy p = Policy::init(seed, v, d);
      CHECK(p.params().scalar_count() == param_count(v, d));
      for (const auto& e : p.params()) {
        if (e.name == "log_std") {
          for (double x : e.value.values()) CHECK(x == kLogStdInit);
        } else if (e.name.find(".b") != std::string::npos) {
          for (double x : e.value.values()) CHECK(x == 0.0);
        } else {
          const double bound = 1.0 / std::sqrt(static_cast<double>(e.value.cols()));
          for (double x : e.value.values()) CHECK(std::abs(x) <= bound);
        }
      }
    }
  }
  const Policy s2 = Policy::init(0, Variant::kStructure2, tank_dims(Variant::kStructure2));
  const HiddenState h = s2.initial_hidden();
  CHECK(h.xhat.size() == 2);
  CHECK(h.xd.size() == 1);
  CHECK(Policy::init(0, Variant::kUnstructured, linear_dims()).initial_hidden().xhat.size() == 64);
  CHECK_THROWS_AS(Policy::init(0, Variant::kStructure2, linear_dims()), ConfigError);
}

TEST_CASE("structured policies are smaller than the baseline", "[policy]") {
  const std::size_t u = param_count(Variant::kUnstructured, linear_dims());
  CHECK(param_count(Variant::kStructure1, linear_dims()) < u);
  CHECK(param_count(Variant::kStructure1, tank_dims(Variant::kStructure1)) < u);
  CHECK(param_count(Variant::kStructure2, tank_dims(Variant::kStructure2)) < u);
}

TEST_CASE("hidden states stay in the open unit interval", "[policy][property]") {
  for (Variant v : {Variant::kStructure1, Variant::kStructure2, Variant::kUnstructured}) {
    const Policy p = Policy::init(12, v, tank_dims(v));
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 3.0);
    Rng ex(1);
    HiddenState h = p.initial_hidden();
    std::vector<double> u{0.0};
    for (int t = 0; t < 300; ++t) {
      const ActResult r = act(p, h, make_obs(n(rng), n(rng), n(rng)), u, ex, false, 0.5, {-5.0, 5.0});
      for (const auto* part : {&r.next.xhat, &r.next.xd, &r.next.critic}) {
        for (double x : *part) {
          CHECK(x > -1.0);
          CHECK(x < 1.0);
        }
      }
      h = r.next;
      u = r.u;
    }
  }
}

TEST_CASE("episodes with identical observations give identical means", "[policy][property]") {
  const Policy p = Policy::init(13, Variant::kStructure1, linear_dims());
  std::vector<sim::Observation> seq;
  for (int t = 0; t < 40; ++t) seq.push_back(make_obs(std::sin(t), 0.0, 0.5));
  auto run = [&] {
    std::vector<std::vector<double>> means;
    HiddenState h = p.initial_hidden();
    std::vector<double> u{0.0};
    Rng rng(0);
    for (const auto& o : seq) {
      const ActResult r = act(p, h, o, u, rng, true, 0.5, {-10.0, 10.0});
      means.push_back(r.mean);
      h = r.next;
      u = r.u;
    }
    return means;
  };
  CHECK(run() == run());
}

TEST_CASE("non-finite observations are rejected", "[policy]") {
  const Policy p = Policy::init(0, Variant::kStructure1, linear_dims());
  Rng rng(0);
  CHECK_THROWS_AS(act(p, p.initial_hidden(), make_obs(NAN, 0.0, 1.0), std::vector<double>{0.0}, rng,
                      true, 1.0, {-1.0, 1.0}),
                  NumericError);
}

TEST_CASE("log_std projection", "[policy]") {
  Policy p = Policy::init(0, Variant::kStructure1, linear_dims());
  p.params().at("log_std").fill(7.0);
  p.project();
  CHECK(p.params().at("log_std")(0, 0) == kLogStdMax);
  p.params().at("log_std").fill(-70.0);
  p.project();
  CHECK(p.params().at("log_std")(0, 0) == kLogStdMin);
}

TEST_CASE("metadata round-trip", "[policy]") {
  const PolicyDims d = tank_dims(Variant::kStructure2);
  const PolicyMetadata m = parse_policy_metadata(policy_metadata(Policy::init(0, Variant::kStructure2, d)));
  CHECK(m.variant == Variant::kStructure2);
  CHECK(m.dims == d);
  CHECK(m.scaling.identity());
  const SignalScaling s{4.0, 0.5, 5.0, 0.2, 0.25, 4.0 / 3.0};
  CHECK(parse_policy_metadata(policy_metadata(Policy::init(0, Variant::kStructure2, d, s))).scaling == s);
  CHECK_THROWS_AS(parse_policy_metadata(policy_metadata(Policy::init(0, Variant::kStructure2, d)) + "u_scale=0\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_policy_metadata("variant=structure1\nn_y=x\n"), ConfigError);
  CHECK_THROWS_AS(parse_policy_metadata("garbage"), ConfigError);
}

TEST_CASE("signal scaling equals pre-normalized inputs with a mapped output", "[policy]") {
  const SignalScaling s{4.0, 0.5, 5.0, 0.2, 0.25, 4.0};
  const sim::ActionBounds wide{-1e9, 1e9};
  Rng rng(0);
  for (Variant v : {Variant::kStructure1, Variant::kStructure2, Variant::kUnstructured}) {
    const Policy plain = Policy::init(8, v, tank_dims(v));
    const Policy scaled(plain.variant(), plain.dims(), plain.params(), s);
    HiddenState hp = plain.initial_hidden(), hs = scaled.initial_hidden();
    std::vector<double> u_raw{3.0};
    for (int t = 0; t < 5; ++t) {
      const sim::Observation raw{{2.0 + 0.7 * t}, {0.1 * t}, {5.0}};
      const sim::Observation norm{{(raw.y[0] - 4.0) * 0.5}, {(raw.d[0] - 0.25) * 4.0}, {(5.0 - 4.0) * 0.5}};
      const std::vector<double> u_norm{(u_raw[0] - 5.0) * 0.2};
      const ActResult a = act(plain, hp, norm, u_norm, rng, true, 0.0, wide);
      const ActResult b = act(scaled, hs, raw, u_raw, rng, true, 0.0, wide);
      CHECK(b.mean[0] == Catch::Approx(5.0 + a.mean[0] / 0.2).margin(1e-12));
      CHECK(b.value == Catch::Approx(a.value).margin(1e-12));
      hp = a.next;
      hs = b.next;
      u_raw = b.u;
    }
  }
  CHECK_THROWS_AS(Policy(Variant::kStructure1, tank_dims(Variant::kStructure1),
                         Policy::init(0, Variant::kStructure1, tank_dims(Variant::kStructure1)).params(),
                         SignalScaling{0.0, 0.0}),
                  ConfigError);
}
