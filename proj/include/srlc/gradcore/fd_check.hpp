#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "srlc/gradcore/tape.hpp"

namespace srlc::grad {

// Records a scalar (1x1) objective on the given tape.
using ScalarProgram = std::function<Var(Tape&)>;

struct FdCheckOptions {
  std::uint64_t seed = 0;
  // Deliberately broken backward rule, for mutation tests.
  std::optional<Op> corrupt;
};

// Worst relative error between reverse-mode gradients and central finite
// differences over `probe_count` randomly chosen parameter coordinates.
// Relative error is |g - fd| / max(|g|, 1e-8).
double fd_check(const ScalarProgram& program, const ParamStore& params,
                int probe_count, double epsilon, const FdCheckOptions& options = {});

}  // namespace srlc::grad
