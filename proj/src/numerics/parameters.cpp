#include "dyndiff/numerics/parameters.hpp"

#include <cmath>
#include <stdexcept>

namespace dyndiff::numerics {

template <typename T>
Tensor<T>& ParameterStore<T>::add(const std::string& name, Tensor<T> value) {
  if (params_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  value.node().requires_grad = true;
  return params_.emplace(name, std::move(value)).first->second;
}

template <typename T>
Tensor<T>& ParameterStore<T>::add_zeros(const std::string& name, Shape shape) {
  return add(name, Tensor<T>::zeros(std::move(shape), true));
}

template <typename T>
Tensor<T>& ParameterStore<T>::add_normal(const std::string& name, Shape shape, double stddev,
                                         Rng& rng) {
  std::vector<T> values(numerics::numel(shape));
  for (auto& v : values) v = static_cast<T>(rng.normal() * stddev);
  return add(name, Tensor<T>::from_data(std::move(shape), std::move(values), true));
}

template <typename T>
Tensor<T>& ParameterStore<T>::add_constant(const std::string& name, Shape shape, T value) {
  return add(name, Tensor<T>::full(std::move(shape), value, true));
}

template <typename T>
const Tensor<T>& ParameterStore<T>::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

template <typename T>
Tensor<T>& ParameterStore<T>::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

template <typename T>
double ParameterStore<T>::grad_norm() const {
  double total = 0.0;
  for (const auto& [_, t] : params_)
    for (T g : t.grad()) total += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(total);
}

template <typename T>
std::vector<std::vector<T>> ParameterStore<T>::snapshot() const {
  std::vector<std::vector<T>> out;
  out.reserve(params_.size());
  for (const auto& [_, t] : params_) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

template <typename T>
void ParameterStore<T>::restore(const std::vector<std::vector<T>>& values) {
  if (values.size() != params_.size()) throw std::invalid_argument("snapshot size mismatch");
  std::size_t i = 0;
  for (auto& [name, t] : params_) {
    auto dst = t.mutable_data();
    if (values[i].size() != dst.size()) throw std::invalid_argument("snapshot mismatch at " + name);
    std::copy(values[i].begin(), values[i].end(), dst.begin());
    ++i;
  }
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace dyndiff::numerics
