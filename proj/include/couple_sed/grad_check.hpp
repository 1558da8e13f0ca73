#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "couple_sed/tensor.hpp"

namespace csed::numkit {

/// Thrown when two evaluations of the loss at identical parameters disagree.
class UnreliableCheckError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Evaluates a scalar loss at `params`. When `grads` is non-null it must be
/// filled with d(loss)/d(params[i]) for every tensor, shaped like params.
using LossFn = std::function<double(std::span<const Tensor> params, std::vector<Tensor>* grads)>;

struct GradCheckOptions {
  /// Denominator floor for the relative error, so parameters whose true
  /// gradient is ~0 are judged on absolute error instead.
  double abs_floor = 1e-6;
  /// Check at most this many coordinates per tensor (0 = all), evenly strided.
  std::size_t max_per_tensor = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t n_checked = 0;
};

/// Compares analytic gradients against central differences
/// (f(p + eps) - f(p - eps)) / (2 eps), coordinate by coordinate. The relative
/// error of one coordinate is |a - n| / max(|a|, |n|, abs_floor).
GradCheckResult grad_check(const LossFn& loss_fn, std::vector<Tensor> params, double eps,
                           const GradCheckOptions& options = {});

}  // namespace csed::numkit
