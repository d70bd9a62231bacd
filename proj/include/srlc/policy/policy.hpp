#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "srlc/common/random.hpp"
#include "srlc/gradcore/tape.hpp"
#include "srlc/sim/env.hpp"

namespace srlc::policy {

enum class Variant { kStructure1, kStructure2, kUnstructured };

std::string_view variant_name(Variant v);
// Accepts "structure1", "structure2", "unstructured"; throws ConfigError.
Variant parse_variant(std::string_view name);

struct PolicyDims {
  int n_y = 1;
  int n_u = 1;
  int n_d = 1;
  int observer = 10;     // x̂ size (Structure 1/2)
  int ff_observer = 0;   // x̂ᵈ size (Structure 2 only)
  int rnn = 64;          // recurrent width of the unstructured baseline
  int mlp = 64;          // hidden width of controller and critic heads

  friend bool operator==(const PolicyDims&, const PolicyDims&) = default;
};

// Throws ConfigError if the dims do not fit the variant.
void validate_dims(Variant v, const PolicyDims& dims);
std::size_t param_count(Variant v, const PolicyDims& dims);

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 1.0;
inline constexpr double kLogStdInit = -0.5;

// Fixed affine maps between plant units and network units: y, y_ref, u_prev
// and d enter as (v - offset) * scale, and the controller head's output o
// leaves as u_offset + o / u_scale. The P-controller prior and the
// exploration noise stay in plant units.
struct SignalScaling {
  double y_offset = 0.0;
  double y_scale = 1.0;
  double u_offset = 0.0;
  double u_scale = 1.0;
  double d_offset = 0.0;
  double d_scale = 1.0;

  bool identity() const { return *this == SignalScaling{}; }
  // Throws ConfigError on zero or non-finite scales.
  void validate() const;

  friend bool operator==(const SignalScaling&, const SignalScaling&) = default;
};

// Recurrent state carried between steps of one env. For the unstructured
// baseline `xhat` is the actor RNN state and `critic` the critic RNN state.
struct HiddenState {
  std::vector<double> xhat;
  std::vector<double> xd;
  std::vector<double> critic;

  friend bool operator==(const HiddenState&, const HiddenState&) = default;
};

// Tape handles for one batched step. Columns are independent samples.
struct StepVars {
  grad::Var xhat;
  grad::Var xd;      // invalid unless Structure 2
  grad::Var critic;  // invalid unless unstructured
  grad::Var u_mean;  // learned part of the action mean, n_u x batch
  grad::Var value;   // 1 x batch
};

struct StepInputs {
  grad::Var xhat_prev;
  grad::Var xd_prev;
  grad::Var critic_prev;
  grad::Var y;
  grad::Var d;
  grad::Var u_prev;
  grad::Var y_ref;
};

// Elman cell: tanh(W_in·input + W_rec·h_prev + b), parameters "<prefix>.W_in" etc.
grad::Var elman_step(grad::Tape& tape, const std::string& prefix, grad::Var h_prev,
                     grad::Var input);
// Two tanh hidden layers and a linear output, parameters "<prefix>.W0".."<prefix>.b2".
grad::Var mlp_forward(grad::Tape& tape, const std::string& prefix, grad::Var x);

class Policy {
 public:
  Policy(Variant variant, PolicyDims dims, grad::ParamStore params, SignalScaling scaling = {});

  // Weights uniform in ±1/sqrt(fan_in), biases zero, log_std = -0.5.
  static Policy init(std::uint64_t seed, Variant variant, const PolicyDims& dims,
                     const SignalScaling& scaling = {});

  Variant variant() const { return variant_; }
  const PolicyDims& dims() const { return dims_; }
  const SignalScaling& scaling() const { return scaling_; }
  const grad::ParamStore& params() const { return params_; }
  grad::ParamStore& params() { return params_; }

  HiddenState initial_hidden() const;

  // x̂ = tanh(W_in·concat(y, u_prev, d | x̂ᵈ) + W_rec·x̂_prev + b).
  // Structure 1 feeds d; Structure 2 feeds the current x̂ᵈ instead.
  grad::Var observer_step(grad::Tape& tape, grad::Var xhat_prev, grad::Var y,
                          grad::Var u_prev, grad::Var d, grad::Var xd_cur) const;
  // x̂ᵈ = tanh(W_in·d + W_rec·x̂ᵈ_prev + b). Structure 2 only.
  grad::Var ff_observer_step(grad::Tape& tape, grad::Var xd_prev, grad::Var d) const;
  grad::Var controller_mean(grad::Tape& tape, grad::Var xhat, grad::Var xd,
                            grad::Var y_ref) const;
  grad::Var critic_value(grad::Tape& tape, grad::Var xhat, grad::Var xd,
                         grad::Var y_ref) const;

  // One full recurrent step for every variant; applies the input scaling.
  StepVars step(grad::Tape& tape, const StepInputs& in) const;

  // Clamp log_std into its admissible range.
  void project();

 private:
  Variant variant_;
  PolicyDims dims_;
  grad::ParamStore params_;
  SignalScaling scaling_;
};

struct ActResult {
  std::vector<double> u;       // clipped, applied to the plant
  std::vector<double> u_pre;   // pre-clip sample
  std::vector<double> mean;    // full action mean incl. P-controller prior
  double log_prob = 0.0;       // of u_pre under the pre-clip Gaussian
  double value = 0.0;
  HiddenState next;
};

// Advances the observers on (obs, prev_u) and samples an action
// u = clip(Kp·(y_ref - y) + u_mean + σ·ε). Throws NumericError on non-finite
// observations.
ActResult act(const Policy& policy, const HiddenState& hidden, const sim::Observation& obs,
              std::span<const double> prev_u, Rng& rng, bool deterministic, double Kp,
              const sim::ActionBounds& bounds);

// Batched act over independent envs; rngs[i] drives column i. `rngs` may be
// empty when deterministic.
std::vector<ActResult> act_batch(const Policy& policy, std::span<const HiddenState> hidden,
                                 std::span<const sim::Observation> obs,
                                 std::span<const std::vector<double>> prev_u,
                                 std::span<Rng* const> rngs, bool deterministic, double Kp,
                                 const sim::ActionBounds& bounds);

struct PolicyMetadata {
  Variant variant = Variant::kStructure1;
  PolicyDims dims;
  SignalScaling scaling;
};

// Sidecar metadata (key=value lines) describing a checkpoint's policy.
std::string policy_metadata(const Policy& policy);
// Throws ConfigError on malformed text. Missing scaling keys mean identity.
PolicyMetadata parse_policy_metadata(std::string_view text);

}  // namespace srlc::policy
