#include "srlc/gradcore/fd_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "srlc/common/error.hpp"
#include "srlc/common/random.hpp"

namespace srlc::grad {
namespace {

double evaluate(const ScalarProgram& program, const ParamStore& params) {
  Tape tape(params);
  const Var out = program(tape);
  tape.check_finite();
  const Array& v = tape.value(out);
  if (v.size() != 1) throw ConfigError("fd_check: program output must be 1x1, got " + v.shape_string());
  return v[0];
}

}  // namespace

double fd_check(const ScalarProgram& program, const ParamStore& params,
                int probe_count, double epsilon, const FdCheckOptions& options) {
  if (probe_count < 1) throw ConfigError("fd_check: probe_count must be >= 1");
  if (!(epsilon >= 1e-8 && epsilon <= 1e-4)) {
    throw ConfigError("fd_check: epsilon must lie in [1e-8, 1e-4]");
  }
  const std::size_t total = params.scalar_count();
  if (total == 0) throw ConfigError("fd_check: no parameters to probe");

  Tape tape(params);
  tape.corrupt_rule(options.corrupt);
  const Var out = program(tape);
  tape.check_finite();
  if (tape.value(out).size() != 1) {
    throw ConfigError("fd_check: program output must be 1x1, got " +
                      tape.value(out).shape_string());
  }
  const GradStore grads = tape.backward(out, Array(1, 1, 1.0));

  Rng rng(derive_seed(options.seed, Stream::kProbe));
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  ParamStore probe = params;
  double worst = 0.0;
  for (int p = 0; p < probe_count; ++p) {
    std::size_t flat = pick(rng);
    std::size_t entry = 0;
    while (flat >= probe.entry(entry).value.size()) {
      flat -= probe.entry(entry).value.size();
      ++entry;
    }
    double& coord = probe.entry(entry).value[flat];
    const double original = coord;
    coord = original + epsilon;
    const double f_plus = evaluate(program, probe);
    coord = original - epsilon;
    const double f_minus = evaluate(program, probe);
    coord = original;

    const double fd = (f_plus - f_minus) / (2.0 * epsilon);
    const double g = grads.entry(entry).value[flat];
    worst = std::max(worst, std::abs(g - fd) / std::max(std::abs(g), 1e-8));
  }
  return worst;
}

}  // namespace srlc::grad
