#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "srlc/gradcore/array.hpp"

namespace srlc::grad {

struct NamedArray {
  std::string name;
  Array value;

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

// Insertion-ordered name -> Array map. Iteration order is the order entries
// were added, which is also the serialization order.
class NamedArrays {
 public:
  void add(std::string name, Array value);
  bool contains(std::string_view name) const { return index_of(name) >= 0; }
  int index_of(std::string_view name) const;

  const Array& at(std::string_view name) const;
  Array& at(std::string_view name);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const NamedArray& entry(std::size_t i) const { return entries_[i]; }
  NamedArray& entry(std::size_t i) { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  std::size_t scalar_count() const;
  bool all_finite() const;
  // Same names, same order, same shapes.
  bool same_layout(const NamedArrays& other) const;

  friend bool operator==(const NamedArrays&, const NamedArrays&) = default;

 private:
  std::vector<NamedArray> entries_;
};

class ParamStore : public NamedArrays {};

// Gradients for a ParamStore; always has the exact key set and shapes of the
// store it was created from.
class GradStore : public NamedArrays {
 public:
  GradStore() = default;
  explicit GradStore(const ParamStore& like);

  double squared_norm() const;
  void scale(double k);
  // this += k * other
  void axpy(double k, const GradStore& other);
};

}  // namespace srlc::grad
