#include "srlc/policy/policy.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "srlc/common/error.hpp"

namespace srlc::policy {

using grad::Array;
using grad::Tape;
using grad::Var;

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kStructure1: return "structure1";
    case Variant::kStructure2: return "structure2";
    case Variant::kUnstructured: return "unstructured";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "structure1") return Variant::kStructure1;
  if (name == "structure2") return Variant::kStructure2;
  if (name == "unstructured") return Variant::kUnstructured;
  throw ConfigError("unknown policy variant '" + std::string(name) +
                    "' (expected structure1, structure2 or unstructured)");
}

void validate_dims(Variant v, const PolicyDims& d) {
  if (d.n_y < 1 || d.n_u < 1 || d.n_d < 1) throw ConfigError("policy io dims must be >= 1");
  if (d.mlp < 1) throw ConfigError("policy mlp width must be >= 1");
  switch (v) {
    case Variant::kStructure1:
      if (d.observer < 1) throw ConfigError("structure1 needs observer >= 1");
      if (d.ff_observer != 0) throw ConfigError("structure1 has no feedforward observer");
      break;
    case Variant::kStructure2:
      if (d.observer < 1 || d.ff_observer < 1) {
        throw ConfigError("structure2 needs observer >= 1 and ff_observer >= 1");
      }
      break;
    case Variant::kUnstructured:
      if (d.rnn < 1) throw ConfigError("unstructured needs rnn >= 1");
      break;
  }
}

namespace {

// Ordered (name, rows, cols, is_bias) entries for a variant.
struct Entry {
  std::string name;
  int rows;
  int cols;
  bool bias;
};

void add_elman(std::vector<Entry>& out, const std::string& p, int hidden, int input) {
  out.push_back({p + ".W_in", hidden, input, false});
  out.push_back({p + ".W_rec", hidden, hidden, false});
  out.push_back({p + ".b", hidden, 1, true});
}

void add_mlp(std::vector<Entry>& out, const std::string& p, int input, int width, int output) {
  out.push_back({p + ".W0", width, input, false});
  out.push_back({p + ".b0", width, 1, true});
  out.push_back({p + ".W1", width, width, false});
  out.push_back({p + ".b1", width, 1, true});
  out.push_back({p + ".W2", output, width, false});
  out.push_back({p + ".b2", output, 1, true});
}

std::vector<Entry> layout(Variant v, const PolicyDims& d) {
  std::vector<Entry> out;
  switch (v) {
    case Variant::kStructure1: {
      add_elman(out, "observer", d.observer, d.n_y + d.n_u + d.n_d);
      const int head_in = d.observer + d.n_y;
      add_mlp(out, "controller", head_in, d.mlp, d.n_u);
      add_mlp(out, "critic", head_in, d.mlp, 1);
      break;
    }
    case Variant::kStructure2: {
      add_elman(out, "ff_observer", d.ff_observer, d.n_d);
      add_elman(out, "observer", d.observer, d.n_y + d.n_u + d.ff_observer);
      const int head_in = d.observer + d.ff_observer + d.n_y;
      add_mlp(out, "controller", head_in, d.mlp, d.n_u);
      add_mlp(out, "critic", head_in, d.mlp, 1);
      break;
    }
    case Variant::kUnstructured: {
      const int in = d.n_y + d.n_d + d.n_u + d.n_y;
      add_elman(out, "actor_rnn", d.rnn, in);
      add_elman(out, "critic_rnn", d.rnn, in);
      add_mlp(out, "controller", d.rnn, d.mlp, d.n_u);
      add_mlp(out, "critic", d.rnn, d.mlp, 1);
      break;
    }
  }
  out.push_back({"log_std", d.n_u, 1, true});
  return out;
}

}  // namespace

std::size_t param_count(Variant v, const PolicyDims& dims) {
  std::size_t n = 0;
  for (const Entry& e : layout(v, dims)) n += static_cast<std::size_t>(e.rows) * e.cols;
  return n;
}

Var elman_step(Tape& tape, const std::string& prefix, Var h_prev, Var input) {
  const Var pre = tape.affine(tape.param(prefix + ".W_in"), input, tape.param(prefix + ".b"));
  return tape.tanh(tape.add(pre, tape.linear(tape.param(prefix + ".W_rec"), h_prev)));
}

Var mlp_forward(Tape& tape, const std::string& prefix, Var x) {
  Var h = tape.tanh(tape.affine(tape.param(prefix + ".W0"), x, tape.param(prefix + ".b0")));
  h = tape.tanh(tape.affine(tape.param(prefix + ".W1"), h, tape.param(prefix + ".b1")));
  return tape.affine(tape.param(prefix + ".W2"), h, tape.param(prefix + ".b2"));
}

void SignalScaling::validate() const {
  for (double s : {y_scale, u_scale, d_scale}) {
    if (!std::isfinite(s) || s == 0.0) throw ConfigError("input scales must be finite and nonzero");
  }
  for (double o : {y_offset, u_offset, d_offset}) {
    if (!std::isfinite(o)) throw ConfigError("input offsets must be finite");
  }
}

Policy::Policy(Variant variant, PolicyDims dims, grad::ParamStore params, SignalScaling scaling)
    : variant_(variant), dims_(dims), params_(std::move(params)), scaling_(scaling) {
  validate_dims(variant_, dims_);
  scaling_.validate();
  const std::vector<Entry> expected = layout(variant_, dims_);
  if (expected.size() != params_.size()) {
    throw ConfigError("parameter set does not match " + std::string(variant_name(variant_)) +
                      " layout");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& e = params_.entry(i);
    if (e.name != expected[i].name || e.value.rows() != expected[i].rows ||
        e.value.cols() != expected[i].cols) {
      throw ConfigError("parameter '" + e.name + "' " + e.value.shape_string() +
                        " does not match expected '" + expected[i].name + "' " +
                        std::to_string(expected[i].rows) + "x" + std::to_string(expected[i].cols));
    }
  }
}

Policy Policy::init(std::uint64_t seed, Variant variant, const PolicyDims& dims,
                    const SignalScaling& scaling) {
  validate_dims(variant, dims);
  Rng rng = make_rng(seed, Stream::kPolicyInit);
  grad::ParamStore store;
  for (const Entry& e : layout(variant, dims)) {
    Array a(e.rows, e.cols, 0.0);
    if (e.name == "log_std") {
      a.fill(kLogStdInit);
    } else if (!e.bias) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(e.cols));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& v : a.values()) v = u(rng);
    }
    store.add(e.name, std::move(a));
  }
  return Policy(variant, dims, std::move(store), scaling);
}

HiddenState Policy::initial_hidden() const {
  HiddenState h;
  switch (variant_) {
    case Variant::kStructure1:
      h.xhat.assign(static_cast<std::size_t>(dims_.observer), 0.0);
      break;
    case Variant::kStructure2:
      h.xhat.assign(static_cast<std::size_t>(dims_.observer), 0.0);
      h.xd.assign(static_cast<std::size_t>(dims_.ff_observer), 0.0);
      break;
    case Variant::kUnstructured:
      h.xhat.assign(static_cast<std::size_t>(dims_.rnn), 0.0);
      h.critic.assign(static_cast<std::size_t>(dims_.rnn), 0.0);
      break;
  }
  return h;
}

Var Policy::observer_step(Tape& tape, Var xhat_prev, Var y, Var u_prev, Var d, Var xd_cur) const {
  switch (variant_) {
    case Variant::kStructure1:
      return elman_step(tape, "observer", xhat_prev, tape.concat({y, u_prev, d}));
    case Variant::kStructure2:
      if (!xd_cur.valid()) throw ConfigError("structure2 observer requires the feedforward estimate");
      return elman_step(tape, "observer", xhat_prev, tape.concat({y, u_prev, xd_cur}));
    case Variant::kUnstructured:
      break;
  }
  throw ConfigError("the unstructured policy has no observer cell");
}

Var Policy::ff_observer_step(Tape& tape, Var xd_prev, Var d) const {
  if (variant_ != Variant::kStructure2) {
    throw ConfigError("feedforward observer exists only in structure2");
  }
  return elman_step(tape, "ff_observer", xd_prev, d);
}

namespace {
Var head_input(Tape& tape, Var xhat, Var xd, Var y_ref) {
  return xd.valid() ? tape.concat({xhat, xd, y_ref}) : tape.concat({xhat, y_ref});
}
}  // namespace

Var Policy::controller_mean(Tape& tape, Var xhat, Var xd, Var y_ref) const {
  if (variant_ == Variant::kUnstructured) return mlp_forward(tape, "controller", xhat);
  return mlp_forward(tape, "controller", head_input(tape, xhat, xd, y_ref));
}

Var Policy::critic_value(Tape& tape, Var xhat, Var xd, Var y_ref) const {
  if (variant_ == Variant::kUnstructured) return mlp_forward(tape, "critic", xhat);
  return mlp_forward(tape, "critic", head_input(tape, xhat, xd, y_ref));
}

StepVars Policy::step(Tape& tape, const StepInputs& raw) const {
  StepInputs in = raw;
  if (!scaling_.identity()) {
    auto affine = [&](Var v, double offset, double scale) {
      Array o = tape.value(v);
      o.fill(offset);
      return tape.scale(tape.sub(v, tape.input(std::move(o))), scale);
    };
    in.y = affine(raw.y, scaling_.y_offset, scaling_.y_scale);
    in.y_ref = affine(raw.y_ref, scaling_.y_offset, scaling_.y_scale);
    in.u_prev = affine(raw.u_prev, scaling_.u_offset, scaling_.u_scale);
    in.d = affine(raw.d, scaling_.d_offset, scaling_.d_scale);
  }
  StepVars out;
  switch (variant_) {
    case Variant::kStructure1:
      out.xhat = observer_step(tape, in.xhat_prev, in.y, in.u_prev, in.d, Var{});
      break;
    case Variant::kStructure2:
      out.xd = ff_observer_step(tape, in.xd_prev, in.d);
      out.xhat = observer_step(tape, in.xhat_prev, in.y, in.u_prev, in.d, out.xd);
      break;
    case Variant::kUnstructured: {
      const Var x = tape.concat({in.y, in.d, in.u_prev, in.y_ref});
      out.xhat = elman_step(tape, "actor_rnn", in.xhat_prev, x);
      out.critic = elman_step(tape, "critic_rnn", in.critic_prev, x);
      out.u_mean = mlp_forward(tape, "controller", out.xhat);
      out.value = mlp_forward(tape, "critic", out.critic);
      break;
    }
  }
  if (variant_ != Variant::kUnstructured) {
    const Var head = head_input(tape, out.xhat, out.xd, in.y_ref);
    out.u_mean = mlp_forward(tape, "controller", head);
    out.value = mlp_forward(tape, "critic", head);
  }
  if (!scaling_.identity()) {
    Array o = tape.value(out.u_mean);
    o.fill(scaling_.u_offset);
    out.u_mean = tape.add(tape.scale(out.u_mean, 1.0 / scaling_.u_scale), tape.input(std::move(o)));
  }
  return out;
}

void Policy::project() {
  for (double& v : params_.at("log_std").values()) v = std::clamp(v, kLogStdMin, kLogStdMax);
}

namespace {

// Stacks per-env vectors as columns of a rows x n array.
template <typename Get>
Array stack_columns(std::size_t n, int rows, Get get) {
  Array out(rows, static_cast<int>(n));
  for (std::size_t c = 0; c < n; ++c) {
    const std::vector<double>& v = get(c);
    if (static_cast<int>(v.size()) != rows) {
      throw std::invalid_argument("batched policy input has size " + std::to_string(v.size()) +
                                  ", expected " + std::to_string(rows));
    }
    for (int r = 0; r < rows; ++r) out(r, static_cast<int>(c)) = v[static_cast<std::size_t>(r)];
  }
  return out;
}

std::vector<double> column_of(const Array& a, std::size_t c) {
  std::vector<double> v(static_cast<std::size_t>(a.rows()));
  for (int r = 0; r < a.rows(); ++r) v[static_cast<std::size_t>(r)] = a(r, static_cast<int>(c));
  return v;
}

}  // namespace

std::vector<ActResult> act_batch(const Policy& policy, std::span<const HiddenState> hidden,
                                 std::span<const sim::Observation> obs,
                                 std::span<const std::vector<double>> prev_u,
                                 std::span<Rng* const> rngs, bool deterministic, double Kp,
                                 const sim::ActionBounds& bounds) {
  const std::size_t n = obs.size();
  if (hidden.size() != n || prev_u.size() != n || (!deterministic && rngs.size() != n)) {
    throw std::invalid_argument("act_batch: inconsistent batch sizes");
  }
  const PolicyDims& d = policy.dims();
  for (const sim::Observation& o : obs) {
    for (const auto* v : {&o.y, &o.d, &o.y_ref}) {
      for (double x : *v) {
        if (!std::isfinite(x)) throw NumericError("non-finite observation passed to the policy");
      }
    }
  }

  Tape tape(policy.params());
  StepInputs in;
  in.y = tape.input(stack_columns(n, d.n_y, [&](std::size_t c) -> const auto& { return obs[c].y; }));
  in.d = tape.input(stack_columns(n, d.n_d, [&](std::size_t c) -> const auto& { return obs[c].d; }));
  in.y_ref = tape.input(
      stack_columns(n, d.n_y, [&](std::size_t c) -> const auto& { return obs[c].y_ref; }));
  in.u_prev = tape.input(stack_columns(n, d.n_u, [&](std::size_t c) -> const auto& { return prev_u[c]; }));
  const HiddenState& h0 = hidden.empty() ? HiddenState{} : hidden[0];
  in.xhat_prev = tape.input(stack_columns(
      n, static_cast<int>(h0.xhat.size()), [&](std::size_t c) -> const auto& { return hidden[c].xhat; }));
  if (policy.variant() == Variant::kStructure2) {
    in.xd_prev = tape.input(stack_columns(n, d.ff_observer,
                                          [&](std::size_t c) -> const auto& { return hidden[c].xd; }));
  }
  if (policy.variant() == Variant::kUnstructured) {
    in.critic_prev = tape.input(
        stack_columns(n, d.rnn, [&](std::size_t c) -> const auto& { return hidden[c].critic; }));
  }

  if (Kp != 0.0 && d.n_u != d.n_y) {
    throw ConfigError("the P-controller prior needs as many inputs as outputs");
  }
  const StepVars sv = policy.step(tape, in);
  Array prior(d.n_u, static_cast<int>(n));
  for (std::size_t c = 0; c < n; ++c) {
    for (int r = 0; r < d.n_u; ++r) {
      const double e = obs[c].y_ref[static_cast<std::size_t>(r)] - obs[c].y[static_cast<std::size_t>(r)];
      prior(r, static_cast<int>(c)) = Kp * e;
    }
  }
  const Var mean = tape.add(tape.input(std::move(prior)), sv.u_mean);
  const Array& log_std = policy.params().at("log_std");
  Array u_pre = tape.value(mean);
  if (!deterministic) {
    for (std::size_t c = 0; c < n; ++c) {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (int r = 0; r < d.n_u; ++r) {
        u_pre(r, static_cast<int>(c)) += std::exp(log_std(r, 0)) * normal(*rngs[c]);
      }
    }
  }
  const Var logp = tape.gaussian_log_density(tape.input(u_pre), mean, tape.param("log_std"));

  std::vector<ActResult> out(n);
  for (std::size_t c = 0; c < n; ++c) {
    ActResult& r = out[c];
    r.u_pre = column_of(u_pre, c);
    r.u = r.u_pre;
    for (double& u : r.u) u = std::clamp(u, bounds.lo, bounds.hi);
    r.mean = column_of(tape.value(mean), c);
    r.log_prob = tape.value(logp)(0, static_cast<int>(c));
    r.value = tape.value(sv.value)(0, static_cast<int>(c));
    r.next.xhat = column_of(tape.value(sv.xhat), c);
    if (sv.xd.valid()) r.next.xd = column_of(tape.value(sv.xd), c);
    if (sv.critic.valid()) r.next.critic = column_of(tape.value(sv.critic), c);
  }
  return out;
}

ActResult act(const Policy& policy, const HiddenState& hidden, const sim::Observation& obs,
              std::span<const double> prev_u, Rng& rng, bool deterministic, double Kp,
              const sim::ActionBounds& bounds) {
  const std::vector<double> pu(prev_u.begin(), prev_u.end());
  Rng* r = &rng;
  return act_batch(policy, std::span(&hidden, 1), std::span(&obs, 1), std::span(&pu, 1),
                   std::span(&r, 1), deterministic, Kp, bounds)[0];
}

std::string policy_metadata(const Policy& policy) {
  const PolicyDims& d = policy.dims();
  const SignalScaling& s = policy.scaling();
  std::ostringstream os;
  os.precision(17);
  os << "variant=" << variant_name(policy.variant()) << "\n"
     << "n_y=" << d.n_y << "\n"
     << "n_u=" << d.n_u << "\n"
     << "n_d=" << d.n_d << "\n"
     << "observer=" << d.observer << "\n"
     << "ff_observer=" << d.ff_observer << "\n"
     << "rnn=" << d.rnn << "\n"
     << "mlp=" << d.mlp << "\n";
  if (!s.identity()) {
    os << "y_offset=" << s.y_offset << "\n"
       << "y_scale=" << s.y_scale << "\n"
       << "u_offset=" << s.u_offset << "\n"
       << "u_scale=" << s.u_scale << "\n"
       << "d_offset=" << s.d_offset << "\n"
       << "d_scale=" << s.d_scale << "\n";
  }
  return os.str();
}

PolicyMetadata parse_policy_metadata(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed metadata line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get_int = [&](const char* key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError(std::string("metadata is missing '") + key + "'");
    try {
      return std::stoi(it->second);
    } catch (const std::exception&) {
      throw ConfigError(std::string("metadata value for '") + key + "' is not an integer");
    }
  };
  if (!kv.contains("variant")) throw ConfigError("metadata is missing 'variant'");
  const Variant v = parse_variant(kv["variant"]);
  PolicyDims d;
  d.n_y = get_int("n_y");
  d.n_u = get_int("n_u");
  d.n_d = get_int("n_d");
  d.observer = get_int("observer");
  d.ff_observer = get_int("ff_observer");
  d.rnn = get_int("rnn");
  d.mlp = get_int("mlp");
  validate_dims(v, d);
  SignalScaling s;
  auto get_real = [&](const char* key, double& out) {
    const auto it = kv.find(key);
    if (it == kv.end()) return;
    try {
      out = std::stod(it->second);
    } catch (const std::exception&) {
      throw ConfigError(std::string("metadata value for '") + key + "' is not a number");
    }
  };
  get_real("y_offset", s.y_offset);
  get_real("y_scale", s.y_scale);
  get_real("u_offset", s.u_offset);
  get_real("u_scale", s.u_scale);
  get_real("d_offset", s.d_offset);
  get_real("d_scale", s.d_scale);
  s.validate();
  return {v, d, s};
}

}  // namespace srlc::policy
