#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dyndiff/numerics/tensor.hpp"
#include "dyndiff/rng.hpp"

namespace dyndiff::numerics {

/// Named trainable tensors, iterated in name order.
template <typename T>
class ParameterStore {
 public:
  using Map = std::map<std::string, Tensor<T>>;

  /// Registers a new parameter; the name must be unused.
  Tensor<T>& add(const std::string& name, Tensor<T> value);
  Tensor<T>& add_zeros(const std::string& name, Shape shape);
  /// N(0, std^2) entries.
  Tensor<T>& add_normal(const std::string& name, Shape shape, double stddev, Rng& rng);
  Tensor<T>& add_constant(const std::string& name, Shape shape, T value);

  const Tensor<T>& at(const std::string& name) const;
  Tensor<T>& at(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  /// Total scalar count.
  std::size_t parameter_count() const;

  void zero_grad();
  double grad_norm() const;

  typename Map::iterator begin() { return params_.begin(); }
  typename Map::iterator end() { return params_.end(); }
  typename Map::const_iterator begin() const { return params_.begin(); }
  typename Map::const_iterator end() const { return params_.end(); }

  /// Deep copy with values converted to U (no gradients).
  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& [name, tensor] : params_) {
      std::vector<U> values(tensor.data().begin(), tensor.data().end());
      out.add(name, Tensor<U>::from_data(tensor.shape(), std::move(values), true));
    }
    return out;
  }

  /// Snapshot of all values in name order.
  std::vector<std::vector<T>> snapshot() const;
  void restore(const std::vector<std::vector<T>>& values);

 private:
  Map params_;
};

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace dyndiff::numerics
