#include "srlc/app/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "srlc/common/error.hpp"

namespace srlc::app {

namespace {

struct Field {
  std::string section;
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("'" + v + "' is not a number");
  return out;
}

template <typename Int>
Int to_int(const std::string& v) {
  Int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("'" + v + "' is not an integer");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("'" + v + "' is not true or false");
}

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename Ref>
Field real(const char* s, const char* k, Ref ref) {
  return {s, k, [ref](ExperimentConfig& c, const std::string& v) { ref(c) = to_double(v); },
          [ref](const ExperimentConfig& c) { return g17(ref(const_cast<ExperimentConfig&>(c))); }};
}

template <typename Ref>
Field integer(const char* s, const char* k, Ref ref) {
  return {s, k,
          [ref](ExperimentConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(ref(c))>;
            ref(c) = to_int<T>(v);
          },
          [ref](const ExperimentConfig& c) { return std::to_string(ref(const_cast<ExperimentConfig&>(c))); }};
}

template <typename Ref>
Field boolean(const char* s, const char* k, Ref ref) {
  return {s, k, [ref](ExperimentConfig& c, const std::string& v) { ref(c) = to_bool(v); },
          [ref](const ExperimentConfig& c) {
            return std::string(ref(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
          }};
}

template <typename Ref>
Field text(const char* s, const char* k, Ref ref) {
  return {s, k, [ref](ExperimentConfig& c, const std::string& v) { ref(c) = v; },
          [ref](const ExperimentConfig& c) { return ref(const_cast<ExperimentConfig&>(c)); }};
}

#define REF(expr) [](ExperimentConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      text("env", "kind", REF(env.kind)),
      integer("env", "episode_length", REF(env.schedule.episode_length)),
      real("env", "ref_lo", REF(env.schedule.ref_lo)),
      real("env", "ref_hi", REF(env.schedule.ref_hi)),
      integer("env", "ref_hold", REF(env.schedule.ref_hold)),
      boolean("env", "disturbance", REF(env.schedule.disturbance)),
      real("env", "dist_lo", REF(env.schedule.dist_lo)),
      real("env", "dist_hi", REF(env.schedule.dist_hi)),
      integer("env", "dist_hold", REF(env.schedule.dist_hold)),
      text("env", "system", REF(env.system)),
      integer("env", "n_x", REF(env.n_x)),
      integer("env", "system_seed", REF(env.system_seed)),
      real("env", "radius_max", REF(env.radius_max)),
      real("env", "radius_min", REF(env.radius_min)),
      real("env", "scalar_a", REF(env.scalar_a)),
      real("env", "scalar_b", REF(env.scalar_b)),
      real("env", "scalar_c", REF(env.scalar_c)),
      real("env", "w_std", REF(env.w_std)),
      real("env", "v_std", REF(env.v_std)),
      boolean("env", "normalize_dc_gain", REF(env.normalize_dc_gain)),
      real("env", "u_lo", REF(env.u_lo)),
      real("env", "u_hi", REF(env.u_hi)),
      real("env", "a1", REF(env.tank.a1)),
      real("env", "a2", REF(env.tank.a2)),
      real("env", "A1", REF(env.tank.A1)),
      real("env", "A2", REF(env.tank.A2)),
      real("env", "K_pump", REF(env.tank.K_pump)),
      real("env", "g", REF(env.tank.g)),
      real("env", "dt", REF(env.tank.dt)),
      real("env", "u_max", REF(env.tank.u_max)),
      real("env", "x_max", REF(env.tank.x_max)),
      real("env", "init_lo", REF(env.init_lo)),
      real("env", "init_hi", REF(env.init_hi)),

      {"policy", "variant",
       [](ExperimentConfig& c, const std::string& v) { c.policy.variant = policy::parse_variant(v); },
       [](const ExperimentConfig& c) { return std::string(policy::variant_name(c.policy.variant)); }},
      integer("policy", "observer", REF(policy.dims.observer)),
      integer("policy", "ff_observer", REF(policy.dims.ff_observer)),
      integer("policy", "rnn", REF(policy.dims.rnn)),
      integer("policy", "mlp", REF(policy.dims.mlp)),
      real("policy", "Kp", REF(policy.Kp)),
      real("policy", "y_offset", REF(policy.scaling.y_offset)),
      real("policy", "y_scale", REF(policy.scaling.y_scale)),
      real("policy", "u_offset", REF(policy.scaling.u_offset)),
      real("policy", "u_scale", REF(policy.scaling.u_scale)),
      real("policy", "d_offset", REF(policy.scaling.d_offset)),
      real("policy", "d_scale", REF(policy.scaling.d_scale)),

      real("ppo", "gamma", REF(ppo.gamma)),
      real("ppo", "lambda", REF(ppo.lambda)),
      real("ppo", "clip_eps", REF(ppo.clip_eps)),
      real("ppo", "lr", REF(ppo.lr)),
      integer("ppo", "epochs", REF(ppo.epochs)),
      integer("ppo", "rollout_length", REF(ppo.rollout_length)),
      integer("ppo", "n_envs", REF(ppo.n_envs)),
      integer("ppo", "minibatch_segments", REF(ppo.minibatch_segments)),
      integer("ppo", "bptt_length", REF(ppo.bptt_length)),
      real("ppo", "value_coef", REF(ppo.value_coef)),
      real("ppo", "entropy_coef", REF(ppo.entropy_coef)),
      real("ppo", "grad_clip_norm", REF(ppo.grad_clip_norm)),
      real("ppo", "reward_scale", REF(ppo.reward_scale)),

      {"run", "seeds",
       [](ExperimentConfig& c, const std::string& v) { c.run.seeds = parse_seed_list(v); },
       [](const ExperimentConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.run.seeds.size(); ++i) {
           s += (i ? "," : "") + std::to_string(c.run.seeds[i]);
         }
         return s;
       }},
      integer("run", "total_steps", REF(run.total_steps)),
      integer("run", "checkpoint_every", REF(run.checkpoint_every)),
      text("run", "output_dir", REF(run.output_dir)),
      boolean("run", "record_wall_time", REF(run.record_wall_time)),
      integer("run", "eval_levels", REF(run.eval_levels)),
      integer("run", "statefit_levels", REF(run.statefit_levels)),
      integer("run", "statefit_steps", REF(run.statefit_steps)),
      integer("run", "warmup", REF(run.warmup)),
  };
  return all;
}

#undef REF

const char* const kSections[] = {"env", "policy", "ppo", "run"};

// io dims and cross-section copies that are not config keys of their own.
void derive(ExperimentConfig& c) {
  c.policy.dims.n_y = 1;
  c.policy.dims.n_u = 1;
  c.policy.dims.n_d = 1;
  c.ppo.Kp = c.policy.Kp;
  c.ppo.total_steps = c.run.total_steps;
  c.ppo.seed = c.run.seeds.empty() ? 0 : c.run.seeds.front();
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty entry in seed list '" + std::string(text) + "'");
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(to_int<std::uint64_t>(item));
    } else {
      const auto lo = to_int<std::uint64_t>(trim(item.substr(0, dots)));
      const auto hi = to_int<std::uint64_t>(trim(item.substr(dots + 2)));
      if (hi < lo) throw ConfigError("seed range '" + item + "' is descending");
      for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
    }
  }
  if (out.empty()) throw ConfigError("seed list is empty");
  return out;
}

void ExperimentConfig::validate() const {
  if (env.kind != "linear" && env.kind != "tank") {
    throw ConfigError("env.kind must be 'linear' or 'tank', got '" + env.kind + "'");
  }
  if (env.kind == "linear" && env.system != "random" && env.system != "scalar") {
    throw ConfigError("env.system must be 'random' or 'scalar', got '" + env.system + "'");
  }
  env.schedule.validate();
  if (env.kind == "tank") env.tank.validate();
  (void)make_env(env);  // builds and validates the plant
  policy::validate_dims(policy.variant, policy.dims);
  policy.scaling.validate();
  if (policy.variant != policy::Variant::kUnstructured) {
    const std::size_t structured = policy::param_count(policy.variant, policy.dims);
    const std::size_t baseline = policy::param_count(policy::Variant::kUnstructured, policy.dims);
    if (structured >= baseline) {
      throw ConfigError("structured policy has " + std::to_string(structured) +
                        " parameters, not fewer than the unstructured baseline's " +
                        std::to_string(baseline));
    }
  }
  ppo.validate();
  if (run.seeds.empty()) throw ConfigError("run.seeds is empty");
  if (run.checkpoint_every < 0) throw ConfigError("run.checkpoint_every must be >= 0");
  if (run.eval_levels < 1 || run.statefit_levels < 1) throw ConfigError("level counts must be >= 1");
  if (run.warmup < 0 || run.warmup >= env.schedule.episode_length ||
      run.statefit_steps <= run.warmup || run.statefit_steps > env.schedule.episode_length) {
    throw ConfigError("need 0 <= warmup < statefit_steps <= episode_length");
  }
}

ExperimentConfig parse_config(std::string_view input) {
  std::map<std::pair<std::string, std::string>, const Field*> index;
  for (const Field& f : fields()) index[{f.section, f.key}] = &f;

  ExperimentConfig c;
  std::set<std::string> seen_sections;
  std::set<std::pair<std::string, std::string>> seen_keys;
  std::string section;
  std::stringstream ss{std::string(input)};
  std::string raw;
  int line_no = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw ConfigError("line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(ss, raw)) {
    ++line_no;
    const auto comment = raw.find_first_of("#;");
    const std::string line = trim(comment == std::string::npos ? raw : raw.substr(0, comment));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (std::find(std::begin(kSections), std::end(kSections), section) == std::end(kSections)) {
        fail("unknown section [" + section + "]");
      }
      if (!seen_sections.insert(section).second) fail("duplicate section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    if (section.empty()) fail("key outside of a section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = index.find({section, key});
    if (it == index.end()) fail("unknown key '" + key + "' in [" + section + "]");
    if (!seen_keys.insert({section, key}).second) fail("duplicate key '" + key + "'");
    try {
      it->second->set(c, value);
    } catch (const ConfigError& e) {
      fail(section + "." + key + ": " + e.what());
    }
  }
  for (const char* s : kSections) {
    if (!seen_sections.contains(s)) throw ConfigError(std::string("missing section [") + s + "]");
  }
  derive(c);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_text(const ExperimentConfig& c) {
  std::string out;
  std::string current;
  for (const Field& f : fields()) {
    if (f.section != current) {
      out += (current.empty() ? "[" : "\n[") + f.section + "]\n";
      current = f.section;
    }
    out += f.key + " = " + f.get(c) + "\n";
  }
  return out;
}

std::unique_ptr<sim::Env> make_env(const EnvSection& env) {
  if (env.kind == "tank") {
    sim::TankEnvConfig t;
    t.tank = env.tank;
    t.schedule = env.schedule;
    t.v_std = env.v_std;
    t.init_lo = env.init_lo;
    t.init_hi = env.init_hi;
    return std::make_unique<sim::TankEnv>(t);
  }
  sim::LinearEnvConfig l;
  if (env.system == "scalar") {
    l.system.A = Eigen::MatrixXd::Constant(1, 1, env.scalar_a);
    l.system.B = Eigen::MatrixXd::Constant(1, 1, env.scalar_b);
    l.system.N = Eigen::MatrixXd::Zero(1, 2);
    l.system.N(0, 0) = 1.0;
    l.system.C = Eigen::MatrixXd::Constant(1, 1, env.scalar_c);
  } else {
    l.system = sim::generate_stable_linear(env.system_seed, {env.n_x, 1, 1, 1, 1}, env.radius_max,
                                           env.radius_min);
  }
  l.system.w_std = env.w_std;
  l.system.v_std = env.v_std;
  if (env.normalize_dc_gain) sim::normalize_dc_gain(l.system);
  l.system.validate();
  l.schedule = env.schedule;
  l.u_lo = env.u_lo;
  l.u_hi = env.u_hi;
  return std::make_unique<sim::LinearEnv>(l);
}

ppo::PPOConfig ppo_for_seed(const ExperimentConfig& c, std::uint64_t seed) {
  ppo::PPOConfig p = c.ppo;
  p.seed = seed;
  p.Kp = c.policy.Kp;
  p.total_steps = c.run.total_steps;
  return p;
}

}  // namespace srlc::app
