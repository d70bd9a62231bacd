#include "srlc/gradcore/param_store.hpp"

#include "srlc/common/error.hpp"

namespace srlc::grad {

void NamedArrays::add(std::string name, Array value) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  entries_.push_back({std::move(name), std::move(value)});
}

int NamedArrays::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

const Array& NamedArrays::at(std::string_view name) const {
  const int i = index_of(name);
  if (i < 0) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return entries_[static_cast<std::size_t>(i)].value;
}

Array& NamedArrays::at(std::string_view name) {
  const int i = index_of(name);
  if (i < 0) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return entries_[static_cast<std::size_t>(i)].value;
}

std::size_t NamedArrays::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

bool NamedArrays::all_finite() const {
  for (const auto& e : entries_) {
    if (!e.value.all_finite()) return false;
  }
  return true;
}

bool NamedArrays::same_layout(const NamedArrays& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (entries_[i].name != other.entries_[i].name ||
        !entries_[i].value.same_shape(other.entries_[i].value)) {
      return false;
    }
  }
  return true;
}

GradStore::GradStore(const ParamStore& like) {
  for (const auto& e : like) {
    add(e.name, Array::with_rank(e.value.rank(), e.value.rows(), e.value.cols(),
                                 std::vector<double>(e.value.size(), 0.0)));
  }
}

double GradStore::squared_norm() const {
  double s = 0.0;
  for (const auto& e : *this) {
    for (double v : e.value.values()) s += v * v;
  }
  return s;
}

void GradStore::scale(double k) {
  for (auto& e : *this) {
    for (double& v : e.value.values()) v *= k;
  }
}

void GradStore::axpy(double k, const GradStore& other) {
  if (!same_layout(other)) throw ConfigError("GradStore::axpy: layout mismatch");
  for (std::size_t i = 0; i < size(); ++i) {
    auto dst = entry(i).value.values();
    auto src = other.entry(i).value.values();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += k * src[j];
  }
}

}  // namespace srlc::grad
