#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dyndiff/numerics/parameters.hpp"
#include "dyndiff/numerics/tensor.hpp"

namespace dyndiff::numerics {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

/// Relative error floor: gradients smaller than this are compared on an
/// absolute scale of this size.
inline constexpr double kGradCheckFloor = 1e-6;

/// Compares backward() gradients of the scalar built by `loss` with central
/// differences (f(x+eps) - f(x-eps)) / (2 eps) for every entry of every
/// tensor in `inputs`. Throws std::runtime_error if two forward evaluations
/// at the same point disagree.
template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& loss,
                           std::vector<std::pair<std::string, Tensor<T>>> inputs,
                           double eps = 1e-4, double tol = 1e-4);

template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& loss, ParameterStore<T>& params,
                           double eps = 1e-4, double tol = 1e-4);

extern template GradCheckReport grad_check<float>(const std::function<Tensor<float>()>&,
                                                  std::vector<std::pair<std::string, Tensor<float>>>,
                                                  double, double);
extern template GradCheckReport grad_check<double>(const std::function<Tensor<double>()>&,
                                                   std::vector<std::pair<std::string, Tensor<double>>>,
                                                   double, double);
extern template GradCheckReport grad_check<float>(const std::function<Tensor<float>()>&,
                                                  ParameterStore<float>&, double, double);
extern template GradCheckReport grad_check<double>(const std::function<Tensor<double>()>&,
                                                   ParameterStore<double>&, double, double);

}  // namespace dyndiff::numerics
