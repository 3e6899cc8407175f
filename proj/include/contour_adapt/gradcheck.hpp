#pragma once

// Central finite-difference check of tape gradients. The op under test maps
// a set of input tensors to a scalar loss; the checker compares the tape's
// analytic gradient of every requires_grad input element against
// (f(x+h) - f(x-h)) / 2h.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "contour_adapt/tape.hpp"
#include "contour_adapt/tensor.hpp"

namespace ca {

struct GradCheckReport {
  bool pass = true;
  double max_rel_err = 0.0;
  std::size_t worst_input = 0;  // index into the inputs vector
  std::size_t worst_elem = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  std::string str() const {
    return std::string(pass ? "pass" : "FAIL") + " max_rel_err=" + std::to_string(max_rel_err) +
           " at input " + std::to_string(worst_input) + " elem " + std::to_string(worst_elem) +
           " (analytic " + std::to_string(worst_analytic) + ", numeric " +
           std::to_string(worst_numeric) + ")";
  }
};

template <class T>
struct GradCheckOptions {
  T step = std::is_same_v<T, float> ? T(1e-2) : T(1e-5);
  double tolerance = std::is_same_v<T, float> ? 1e-3 : 1e-5;
  // Relative error denominators below this floor count as matching zeros.
  double denom_floor = std::is_same_v<T, float> ? 1e-3 : 1e-8;
};

template <class T>
using ScalarOp = std::function<TensorT<T>(const std::vector<TensorT<T>>&, TapeT<T>*)>;

template <class T>
GradCheckReport finite_diff_check(const ScalarOp<T>& op, std::vector<TensorT<T>> inputs,
                                  const GradCheckOptions<T>& opt = {}) {
  for (auto& in : inputs) in.set_requires_grad(true);

  TapeT<T> tape;
  TensorT<T> loss = op(inputs, &tape);
  GradStoreT<T> store = tape.backward(loss);

  GradCheckReport report;
  const double h = static_cast<double>(opt.step);
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    const std::vector<T>* analytic = store.find(inputs[ti]);
    for (std::size_t e = 0; e < inputs[ti].numel(); ++e) {
      double a = analytic != nullptr ? static_cast<double>((*analytic)[e]) : 0.0;

      auto eval_shifted = [&](double delta) {
        std::vector<TensorT<T>> probe = inputs;
        probe[ti] = inputs[ti].clone();
        probe[ti].mutable_data()[e] = static_cast<T>(static_cast<double>(probe[ti].data()[e]) + delta);
        return static_cast<double>(op(probe, nullptr).item());
      };
      double numeric = (eval_shifted(h) - eval_shifted(-h)) / (2.0 * h);

      double denom = std::max({std::abs(a), std::abs(numeric), opt.denom_floor});
      double rel = std::abs(a - numeric) / denom;
      if (std::abs(a - numeric) <= opt.denom_floor) rel = 0.0;  // matching near-zeros
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_input = ti;
        report.worst_elem = e;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.pass = report.max_rel_err < opt.tolerance;
  return report;
}

}  // namespace ca
