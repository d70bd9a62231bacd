#include "srlc/gradcore/array.hpp"

#include <algorithm>
#include <cmath>

#include "srlc/common/error.hpp"

namespace srlc::grad {

Array::Array(int rows, int cols, double fill)
    : rows_(rows), cols_(cols),
      data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {
  if (rows < 0 || cols < 0) throw ConfigError("Array: negative dimension");
}

Array::Array(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows < 0 || cols < 0 ||
      data_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw ConfigError("Array: data size does not match " + shape_string());
  }
}

Array Array::scalar(double v) {
  Array a(1, 1, v);
  a.rank_ = 0;
  return a;
}

Array Array::vector(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  Array a(n, 1, std::move(v));
  a.rank_ = 1;
  return a;
}

Array Array::vector(std::initializer_list<double> v) {
  return vector(std::vector<double>(v));
}

Array Array::with_rank(int rank, int rows, int cols, std::vector<double> data) {
  if (rank < 0 || rank > 2) throw ConfigError("Array: rank must be 0, 1 or 2");
  if (rank == 0 && (rows != 1 || cols != 1)) throw ConfigError("Array: rank-0 must be 1x1");
  if (rank == 1 && cols != 1) throw ConfigError("Array: rank-1 must be a column");
  Array a(rows, cols, std::move(data));
  a.rank_ = rank;
  return a;
}

bool Array::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Array::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Array::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

}  // namespace srlc::grad
