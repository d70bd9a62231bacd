#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "srlc/gradcore/array.hpp"
#include "srlc/gradcore/param_store.hpp"

namespace srlc::grad {

enum class Op : std::uint8_t {
  kParam,
  kInput,
  kAffine,
  kTanh,
  kAdd,
  kSub,
  kMul,
  kScale,
  kExp,
  kMinimum,
  kConcat,
  kSlice,
  kSquaredError,
  kMean,
  kGaussianLogDensity,
  kClip,
};

std::string_view op_name(Op op);

// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class Axis { kRows, kCols };

// Records primitive operations as they execute and differentiates them in
// reverse. Values are feature x batch matrices; parameters broadcast across
// the batch axis where noted.
//
// A Tape borrows the ParamStore it was built against; the store must outlive
// it and must not change while the tape is alive.
class Tape {
 public:
  explicit Tape(const ParamStore& params);

  // Leaf bound to a named parameter. Repeated calls return the same node, so
  // gradients from every use accumulate.
  Var param(std::string_view name);
  // Constant leaf; never receives a gradient.
  Var input(Array value);

  // W·x + b with W (o x i), x (i x n), b (o x 1) broadcast over columns.
  Var affine(Var w, Var x, Var b);
  // W·x
  Var linear(Var w, Var x) { return affine(w, x, Var{}); }
  Var tanh(Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var x, double k);
  Var exp(Var x);
  Var minimum(Var a, Var b);
  Var concat(std::span<const Var> parts, Axis axis = Axis::kRows);
  Var concat(std::initializer_list<Var> parts, Axis axis = Axis::kRows) {
    return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
  }
  // Rows [begin, begin + count).
  Var slice(Var x, int begin, int count);
  // Element-wise (pred - target)^2.
  Var squared_error(Var pred, Var target);
  // Mean over the batch axis: (r x n) -> (r x 1).
  Var mean(Var x);
  // Log-density of a diagonal Gaussian, summed over rows: x, mean (k x n),
  // log_std (k x 1) broadcast -> (1 x n).
  Var gaussian_log_density(Var x, Var mean, Var log_std);
  // Clamp to [lo, hi]; gradient is zero where the input lies outside.
  Var clip(Var x, double lo, double hi);

  const Array& value(Var v) const;
  Op op(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  const ParamStore& params() const { return *params_; }

  // Gradient of <cotangent, value(output)> with respect to every parameter.
  // Parameters that do not influence the output get exact zeros.
  GradStore backward(Var output, const Array& cotangent) const;

  // Throws NumericError naming the first op whose output is not finite.
  void check_finite() const;

  // Test fixture: makes the backward rule of `op` wrong (scaled by 1.5).
  void corrupt_rule(std::optional<Op> op) { corrupted_ = op; }

 private:
  struct Node {
    explicit Node(Op o, int in_a = -1, int in_b = -1, int in_c = -1)
        : op(o), a(in_a), b(in_b), c(in_c) {}
    Op op;
    int a = -1;
    int b = -1;
    int c = -1;
    double k0 = 0.0;
    double k1 = 0.0;
    int param_index = -1;
    bool needs_grad = false;
    std::vector<int> parts;
    Array value;
  };

  Var push(Node node);
  const Node& node(Var v) const;
  [[noreturn]] void shape_error(Op op, const std::string& detail) const;

  const ParamStore* params_;
  std::vector<Node> nodes_;
  std::vector<int> param_nodes_;
  std::optional<Op> corrupted_;
};

// A program maps declared inputs to outputs by recording ops on a tape.
using Program = std::function<std::vector<Var>(Tape&, std::span<const Var> inputs)>;

struct ForwardResult {
  Tape tape;
  std::vector<Var> output_vars;
  std::vector<Array> outputs;
};

ForwardResult forward(const Program& program, const ParamStore& params,
                      std::vector<Array> inputs);

GradStore backward(const Tape& tape, Var output, const Array& cotangent);

}  // namespace srlc::grad
