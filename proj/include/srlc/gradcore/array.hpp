#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace srlc::grad {

// Dense row-major array of doubles with rank 0, 1 or 2.
//
// Rank 0 is stored as 1x1 and rank 1 as an n x 1 column. Inside the tape the
// column axis is the batch axis: a value with c columns holds c independent
// samples.
class Array {
 public:
  Array() = default;
  Array(int rows, int cols, double fill = 0.0);
  Array(int rows, int cols, std::vector<double> data);

  static Array scalar(double v);
  static Array vector(std::vector<double> v);
  static Array vector(std::initializer_list<double> v);
  static Array with_rank(int rank, int rows, int cols, std::vector<double> data);

  int rank() const { return rank_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool same_shape(const Array& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;
  void fill(double v);
  std::string shape_string() const;

  friend bool operator==(const Array&, const Array&) = default;

 private:
  int rank_ = 2;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

}  // namespace srlc::grad
