#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "leafae/graph.hpp"

namespace leafae {

struct GradCheckResult {
  bool passed = false;
  double max_relative_error = 0.0;
  std::size_t entries_checked = 0;
};

template <typename T>
using ScalarFunction = std::function<Var<T>(Graph<T>&, std::span<const Var<T>>)>;

/// Compares reverse-mode gradients of a scalar function against central
/// differences. The error per entry is |analytic - numeric| / max(1, |analytic|);
/// the check passes iff the maximum is <= tol. `max_entries_per_input` > 0
/// checks an evenly strided subset of each input.
template <typename T>
GradCheckResult grad_check(const ScalarFunction<T>& f, const std::vector<Tensor<T>>& inputs,
                           double step, double tol, std::size_t max_entries_per_input = 0) {
  if (!(step > 0.0)) throw ContractViolation("grad_check: step must be positive");

  std::vector<Tensor<T>> analytic;
  {
    Graph<T> g;
    std::vector<Var<T>> vars;
    for (const auto& x : inputs) vars.push_back(g.leaf(x, true));
    Var<T> out = f(g, vars);
    if (out.shape().size() != 0) {
      throw ContractViolation("grad_check: function output is not a scalar, shape " +
                              to_string(out.shape()));
    }
    Gradients<T> grads = g.backward(out);
    for (std::size_t i = 0; i < vars.size(); ++i) {
      const Tensor<T>* gi = grads.find(vars[i]);
      analytic.push_back(gi ? *gi : Tensor<T>(inputs[i].shape()));
    }
  }

  auto evaluate = [&](const std::vector<Tensor<T>>& xs) {
    Graph<T> g;
    std::vector<Var<T>> vars;
    for (const auto& x : xs) vars.push_back(g.constant(x));
    return static_cast<double>(f(g, vars).value().item());
  };

  GradCheckResult result;
  std::vector<Tensor<T>> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::size_t n = inputs[i].size();
    const std::size_t stride =
        max_entries_per_input == 0 ? 1 : std::max<std::size_t>(1, n / max_entries_per_input);
    for (std::size_t j = 0; j < n; j += stride) {
      const T original = probe[i][j];
      probe[i][j] = static_cast<T>(original + step);
      const double up = evaluate(probe);
      probe[i][j] = static_cast<T>(original - step);
      const double down = evaluate(probe);
      probe[i][j] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double exact = static_cast<double>(analytic[i][j]);
      const double err = std::abs(exact - numeric) / std::max(1.0, std::abs(exact));
      result.max_relative_error = std::max(result.max_relative_error, err);
      ++result.entries_checked;
    }
  }
  result.passed = result.max_relative_error <= tol;
  return result;
}

/// Single-input convenience form.
template <typename T>
GradCheckResult grad_check(const std::function<Var<T>(Graph<T>&, Var<T>)>& f,
                           const Tensor<T>& x, double step, double tol) {
  ScalarFunction<T> wrapped = [&f](Graph<T>& g, std::span<const Var<T>> vars) {
    return f(g, vars[0]);
  };
  return grad_check<T>(wrapped, std::vector<Tensor<T>>{x}, step, tol);
}

}  // namespace leafae
