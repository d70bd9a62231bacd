#include "srlc/gradcore/tape.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "srlc/common/error.hpp"

namespace srlc::grad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

ConstMapMat view(const Array& a) { return ConstMapMat(a.data(), a.rows(), a.cols()); }
MapMat view(Array& a) { return MapMat(a.data(), a.rows(), a.cols()); }

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kParam: return "param";
    case Op::kInput: return "input";
    case Op::kAffine: return "affine";
    case Op::kTanh: return "tanh";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kExp: return "exp";
    case Op::kMinimum: return "minimum";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kSquaredError: return "squared_error";
    case Op::kMean: return "mean";
    case Op::kGaussianLogDensity: return "gaussian_log_density";
    case Op::kClip: return "clip";
  }
  return "unknown";
}

Tape::Tape(const ParamStore& params)
    : params_(&params), param_nodes_(params.size(), -1) {
  nodes_.reserve(256);
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw ConfigError("tape: invalid variable handle");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

void Tape::shape_error(Op op, const std::string& detail) const {
  throw ConfigError("shape mismatch in op '" + std::string(op_name(op)) + "' (node " +
                    std::to_string(nodes_.size()) + "): " + detail);
}

const Array& Tape::value(Var v) const { return node(v).value; }
Op Tape::op(Var v) const { return node(v).op; }

Var Tape::param(std::string_view name) {
  const int idx = params_->index_of(name);
  if (idx < 0) throw ConfigError("tape: program references undeclared parameter '" +
                                 std::string(name) + "'");
  int& slot = param_nodes_[static_cast<std::size_t>(idx)];
  if (slot >= 0) return Var{slot};
  Node n(Op::kParam);
  n.param_index = idx;
  n.needs_grad = true;
  n.value = params_->entry(static_cast<std::size_t>(idx)).value;
  slot = push(std::move(n)).id;
  return Var{slot};
}

Var Tape::input(Array value) {
  Node n(Op::kInput);
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::affine(Var w, Var x, Var b) {
  const Array& W = node(w).value;
  const Array& X = node(x).value;
  if (W.cols() != X.rows()) {
    shape_error(Op::kAffine, "W is " + W.shape_string() + " but x is " + X.shape_string());
  }
  Array out(W.rows(), X.cols());
  view(out).noalias() = view(W) * view(X);
  Node n(Op::kAffine, w.id, x.id);
  n.needs_grad = node(w).needs_grad || node(x).needs_grad;
  if (b.valid()) {
    const Array& B = node(b).value;
    if (B.rows() != W.rows() || B.cols() != 1) {
      shape_error(Op::kAffine, "bias is " + B.shape_string() + ", expected " +
                                   std::to_string(W.rows()) + "x1");
    }
    for (int r = 0; r < out.rows(); ++r) {
      const double br = B(r, 0);
      for (int c = 0; c < out.cols(); ++c) out(r, c) += br;
    }
    n.c = b.id;
    n.needs_grad = n.needs_grad || node(b).needs_grad;
  }
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::tanh(Var x) {
  const Array& X = node(x).value;
  Array out(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = std::tanh(X[i]);
  Node n(Op::kTanh, x.id);
  n.needs_grad = node(x).needs_grad;
  n.value = std::move(out);
  return push(std::move(n));
}

namespace {
template <typename F>
Array elementwise(const Array& A, const Array& B, F f) {
  Array out(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = f(A[i], B[i]);
  return out;
}
}  // namespace

#define SRLC_BINARY_OP(NAME, OPCODE, EXPR)                                      \
  Var Tape::NAME(Var a, Var b) {                                                 \
    const Array& A = node(a).value;                                              \
    const Array& B = node(b).value;                                              \
    if (!A.same_shape(B)) {                                                      \
      shape_error(OPCODE, A.shape_string() + " vs " + B.shape_string());         \
    }                                                                            \
    Node n(OPCODE, a.id, b.id);                                                  \
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;                     \
    n.value = elementwise(A, B, [](double p, double q) { return EXPR; });        \
    return push(std::move(n));                                                   \
  }

SRLC_BINARY_OP(add, Op::kAdd, p + q)
SRLC_BINARY_OP(sub, Op::kSub, p - q)
SRLC_BINARY_OP(mul, Op::kMul, p * q)
SRLC_BINARY_OP(minimum, Op::kMinimum, std::min(p, q))
SRLC_BINARY_OP(squared_error, Op::kSquaredError, (p - q) * (p - q))

#undef SRLC_BINARY_OP

Var Tape::scale(Var x, double k) {
  const Array& X = node(x).value;
  Array out(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = k * X[i];
  Node n(Op::kScale, x.id);
  n.k0 = k;
  n.needs_grad = node(x).needs_grad;
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::exp(Var x) {
  const Array& X = node(x).value;
  Array out(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = std::exp(X[i]);
  Node n(Op::kExp, x.id);
  n.needs_grad = node(x).needs_grad;
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::concat(std::span<const Var> parts, Axis axis) {
  if (parts.empty()) shape_error(Op::kConcat, "no inputs");
  const Array& first = node(parts[0]).value;
  int rows = 0, cols = 0;
  Node n(Op::kConcat);
  n.k0 = axis == Axis::kRows ? 0.0 : 1.0;
  for (Var p : parts) {
    const Array& P = node(p).value;
    if (axis == Axis::kRows) {
      if (P.cols() != first.cols()) {
        shape_error(Op::kConcat, "column counts differ: " + P.shape_string() + " vs " +
                                     first.shape_string());
      }
      rows += P.rows();
      cols = P.cols();
    } else {
      if (P.rows() != first.rows()) {
        shape_error(Op::kConcat, "row counts differ: " + P.shape_string() + " vs " +
                                     first.shape_string());
      }
      cols += P.cols();
      rows = P.rows();
    }
    n.parts.push_back(p.id);
    n.needs_grad = n.needs_grad || node(p).needs_grad;
  }
  Array out(rows, cols);
  int offset = 0;
  for (Var p : parts) {
    const Array& P = node(p).value;
    if (axis == Axis::kRows) {
      std::copy(P.values().begin(), P.values().end(),
                out.values().begin() + static_cast<std::ptrdiff_t>(offset) * cols);
      offset += P.rows();
    } else {
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < P.cols(); ++c) out(r, offset + c) = P(r, c);
      }
      offset += P.cols();
    }
  }
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::slice(Var x, int begin, int count) {
  const Array& X = node(x).value;
  if (begin < 0 || count < 0 || begin + count > X.rows()) {
    shape_error(Op::kSlice, "rows [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") of " + X.shape_string());
  }
  Array out(count, X.cols());
  std::copy(X.values().begin() + static_cast<std::ptrdiff_t>(begin) * X.cols(),
            X.values().begin() + static_cast<std::ptrdiff_t>(begin + count) * X.cols(),
            out.values().begin());
  Node n(Op::kSlice, x.id);
  n.k0 = begin;
  n.k1 = count;
  n.needs_grad = node(x).needs_grad;
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::mean(Var x) {
  const Array& X = node(x).value;
  if (X.cols() == 0) shape_error(Op::kMean, "empty batch axis");
  Array out(X.rows(), 1);
  for (int r = 0; r < X.rows(); ++r) {
    double s = 0.0;
    for (int c = 0; c < X.cols(); ++c) s += X(r, c);
    out(r, 0) = s / X.cols();
  }
  Node n(Op::kMean, x.id);
  n.needs_grad = node(x).needs_grad;
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::gaussian_log_density(Var x, Var mean, Var log_std) {
  const Array& X = node(x).value;
  const Array& M = node(mean).value;
  const Array& S = node(log_std).value;
  if (!X.same_shape(M)) {
    shape_error(Op::kGaussianLogDensity, "x " + X.shape_string() + " vs mean " + M.shape_string());
  }
  if (S.rows() != X.rows() || S.cols() != 1) {
    shape_error(Op::kGaussianLogDensity,
                "log_std is " + S.shape_string() + ", expected " + std::to_string(X.rows()) + "x1");
  }
  Array out(1, X.cols());
  for (int c = 0; c < X.cols(); ++c) {
    double s = 0.0;
    for (int r = 0; r < X.rows(); ++r) {
      const double z = (X(r, c) - M(r, c)) * std::exp(-S(r, 0));
      s += -0.5 * z * z - S(r, 0) - kHalfLog2Pi;
    }
    out(0, c) = s;
  }
  Node n(Op::kGaussianLogDensity, x.id, mean.id, log_std.id);
  n.needs_grad = node(x).needs_grad || node(mean).needs_grad || node(log_std).needs_grad;
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::clip(Var x, double lo, double hi) {
  if (!(lo <= hi)) shape_error(Op::kClip, "lower bound exceeds upper bound");
  const Array& X = node(x).value;
  Array out(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = std::clamp(X[i], lo, hi);
  Node n(Op::kClip, x.id);
  n.k0 = lo;
  n.k1 = hi;
  n.needs_grad = node(x).needs_grad;
  n.value = std::move(out);
  return push(std::move(n));
}

void Tape::check_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].value.all_finite()) {
      throw NumericError("non-finite value produced by op '" +
                         std::string(op_name(nodes_[i].op)) + "' at node " +
                         std::to_string(i));
    }
  }
}

GradStore Tape::backward(Var output, const Array& cotangent) const {
  const Node& out_node = node(output);
  if (!cotangent.same_shape(out_node.value)) {
    throw ConfigError("backward: cotangent is " + cotangent.shape_string() +
                      " but output is " + out_node.value.shape_string());
  }
  GradStore grads(*params_);
  std::vector<Array> g(nodes_.size());
  g[static_cast<std::size_t>(output.id)] = cotangent;

  auto slot = [&](int id) -> Array* {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return nullptr;
    Array& s = g[static_cast<std::size_t>(id)];
    if (s.size() == 0 && n.value.size() != 0) s = Array(n.value.rows(), n.value.cols());
    return &s;
  };

  for (int id = output.id; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) continue;
    Array& gi = g[static_cast<std::size_t>(id)];
    if (gi.size() == 0) continue;
    if (corrupted_ && *corrupted_ == n.op) {
      for (double& v : gi.values()) v *= 1.5;
    }

    switch (n.op) {
      case Op::kParam: {
        auto dst = grads.entry(static_cast<std::size_t>(n.param_index)).value.values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gi[i];
        break;
      }
      case Op::kInput:
        break;
      case Op::kAffine: {
        const Array& W = nodes_[static_cast<std::size_t>(n.a)].value;
        const Array& X = nodes_[static_cast<std::size_t>(n.b)].value;
        if (Array* gw = slot(n.a)) view(*gw).noalias() += view(gi) * view(X).transpose();
        if (Array* gx = slot(n.b)) view(*gx).noalias() += view(W).transpose() * view(gi);
        if (n.c >= 0) {
          if (Array* gb = slot(n.c)) {
            for (int r = 0; r < gi.rows(); ++r) {
              double s = 0.0;
              for (int c = 0; c < gi.cols(); ++c) s += gi(r, c);
              (*gb)(r, 0) += s;
            }
          }
        }
        break;
      }
      case Op::kTanh: {
        if (Array* gx = slot(n.a)) {
          for (std::size_t i = 0; i < gi.size(); ++i) {
            const double y = n.value[i];
            (*gx)[i] += gi[i] * (1.0 - y * y);
          }
        }
        break;
      }
      case Op::kAdd:
      case Op::kSub: {
        const double sign = n.op == Op::kAdd ? 1.0 : -1.0;
        if (Array* ga = slot(n.a)) {
          for (std::size_t i = 0; i < gi.size(); ++i) (*ga)[i] += gi[i];
        }
        if (Array* gb = slot(n.b)) {
          for (std::size_t i = 0; i < gi.size(); ++i) (*gb)[i] += sign * gi[i];
        }
        break;
      }
      case Op::kMul: {
        const Array& A = nodes_[static_cast<std::size_t>(n.a)].value;
        const Array& B = nodes_[static_cast<std::size_t>(n.b)].value;
        if (Array* ga = slot(n.a)) {
          for (std::size_t i = 0; i < gi.size(); ++i) (*ga)[i] += gi[i] * B[i];
        }
        if (Array* gb = slot(n.b)) {
          for (std::size_t i = 0; i < gi.size(); ++i) (*gb)[i] += gi[i] * A[i];
        }
        break;
      }
      case Op::kScale: {
        if (Array* gx = slot(n.a)) {
          for (std::size_t i = 0; i < gi.size(); ++i) (*gx)[i] += n.k0 * gi[i];
        }
        break;
      }
      case Op::kExp: {
        if (Array* gx = slot(n.a)) {
          for (std::size_t i = 0; i < gi.size(); ++i) (*gx)[i] += gi[i] * n.value[i];
        }
        break;
      }
      case Op::kMinimum: {
        const Array& A = nodes_[static_cast<std::size_t>(n.a)].value;
        const Array& B = nodes_[static_cast<std::size_t>(n.b)].value;
        Array* ga = slot(n.a);
        Array* gb = slot(n.b);
        for (std::size_t i = 0; i < gi.size(); ++i) {
          if (A[i] <= B[i]) {
            if (ga) (*ga)[i] += gi[i];
          } else if (gb) {
            (*gb)[i] += gi[i];
          }
        }
        break;
      }
      case Op::kConcat: {
        int offset = 0;
        const bool rows = n.k0 == 0.0;
        for (int part : n.parts) {
          const Array& P = nodes_[static_cast<std::size_t>(part)].value;
          if (Array* gp = slot(part)) {
            for (int r = 0; r < P.rows(); ++r) {
              for (int c = 0; c < P.cols(); ++c) {
                (*gp)(r, c) += rows ? gi(offset + r, c) : gi(r, offset + c);
              }
            }
          }
          offset += rows ? P.rows() : P.cols();
        }
        break;
      }
      case Op::kSlice: {
        if (Array* gx = slot(n.a)) {
          const auto begin = static_cast<std::size_t>(n.k0) * static_cast<std::size_t>(gx->cols());
          for (std::size_t i = 0; i < gi.size(); ++i) (*gx)[begin + i] += gi[i];
        }
        break;
      }
      case Op::kSquaredError: {
        const Array& A = nodes_[static_cast<std::size_t>(n.a)].value;
        const Array& B = nodes_[static_cast<std::size_t>(n.b)].value;
        Array* ga = slot(n.a);
        Array* gb = slot(n.b);
        for (std::size_t i = 0; i < gi.size(); ++i) {
          const double d = 2.0 * (A[i] - B[i]) * gi[i];
          if (ga) (*ga)[i] += d;
          if (gb) (*gb)[i] -= d;
        }
        break;
      }
      case Op::kMean: {
        if (Array* gx = slot(n.a)) {
          const double inv = 1.0 / gx->cols();
          for (int r = 0; r < gx->rows(); ++r) {
            for (int c = 0; c < gx->cols(); ++c) (*gx)(r, c) += gi(r, 0) * inv;
          }
        }
        break;
      }
      case Op::kGaussianLogDensity: {
        const Array& X = nodes_[static_cast<std::size_t>(n.a)].value;
        const Array& M = nodes_[static_cast<std::size_t>(n.b)].value;
        const Array& S = nodes_[static_cast<std::size_t>(n.c)].value;
        Array* gx = slot(n.a);
        Array* gm = slot(n.b);
        Array* gs = slot(n.c);
        for (int r = 0; r < X.rows(); ++r) {
          const double inv_sigma = std::exp(-S(r, 0));
          double gsum = 0.0;
          for (int c = 0; c < X.cols(); ++c) {
            const double z = (X(r, c) - M(r, c)) * inv_sigma;
            const double go = gi(0, c);
            if (gx) (*gx)(r, c) -= go * z * inv_sigma;
            if (gm) (*gm)(r, c) += go * z * inv_sigma;
            gsum += go * (z * z - 1.0);
          }
          if (gs) (*gs)(r, 0) += gsum;
        }
        break;
      }
      case Op::kClip: {
        if (Array* gx = slot(n.a)) {
          const Array& X = nodes_[static_cast<std::size_t>(n.a)].value;
          for (std::size_t i = 0; i < gi.size(); ++i) {
            if (X[i] >= n.k0 && X[i] <= n.k1) (*gx)[i] += gi[i];
          }
        }
        break;
      }
    }
  }
  return grads;
}

ForwardResult forward(const Program& program, const ParamStore& params,
                      std::vector<Array> inputs) {
  ForwardResult result{Tape(params), {}, {}};
  std::vector<Var> in;
  in.reserve(inputs.size());
  for (auto& a : inputs) in.push_back(result.tape.input(std::move(a)));
  result.output_vars = program(result.tape, in);
  for (Var v : result.output_vars) result.outputs.push_back(result.tape.value(v));
  return result;
}

GradStore backward(const Tape& tape, Var output, const Array& cotangent) {
  return tape.backward(output, cotangent);
}

}  // namespace srlc::grad
