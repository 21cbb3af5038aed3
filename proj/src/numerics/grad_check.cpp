#include "dyndiff/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dyndiff::numerics {

template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& loss,
                           std::vector<std::pair<std::string, Tensor<T>>> inputs, double eps,
                           double tol) {
  auto evaluate = [&]() {
    NoGradGuard guard;
    return static_cast<double>(loss().item());
  };

  const double first = evaluate();
  const double second = evaluate();
  if (first != second) {
    throw std::runtime_error("grad_check: loss is not deterministic (" + std::to_string(first) +
                             " vs " + std::to_string(second) + ")");
  }

  for (auto& [_, t] : inputs) t.zero_grad();
  loss().backward();

  GradCheckReport report;
  report.max_rel_error = 0.0;
  for (auto& [name, t] : inputs) {
    std::vector<T> analytic(t.numel(), T(0));
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T original = values[i];
      values[i] = static_cast<T>(original + eps);
      const double up = evaluate();
      values[i] = static_cast<T>(original - eps);
      const double down = evaluate();
      values[i] = original;

      const double numeric = (up - down) / (2.0 * eps);
      const double exact = static_cast<double>(analytic[i]);
      const double denom = std::max({std::abs(exact), std::abs(numeric), kGradCheckFloor});
      const double rel = std::abs(exact - numeric) / denom;
      ++report.entries_checked;
      if (report.worst_parameter.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_parameter = name;
        report.worst_index = i;
        report.worst_analytic = exact;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& loss, ParameterStore<T>& params,
                           double eps, double tol) {
  std::vector<std::pair<std::string, Tensor<T>>> inputs;
  for (auto& [name, t] : params) inputs.emplace_back(name, t);
  return grad_check<T>(loss, std::move(inputs), eps, tol);
}

template GradCheckReport grad_check<float>(const std::function<Tensor<float>()>&,
                                           std::vector<std::pair<std::string, Tensor<float>>>, double,
                                           double);
template GradCheckReport grad_check<double>(const std::function<Tensor<double>()>&,
                                            std::vector<std::pair<std::string, Tensor<double>>>,
                                            double, double);
template GradCheckReport grad_check<float>(const std::function<Tensor<float>()>&,
                                           ParameterStore<float>&, double, double);
template GradCheckReport grad_check<double>(const std::function<Tensor<double>()>&,
                                            ParameterStore<double>&, double, double);

}  // namespace dyndiff::numerics
