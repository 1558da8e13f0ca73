#include "couple_sed/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace csed::numkit {

GradCheckResult grad_check(const LossFn& loss_fn, std::vector<Tensor> params, double eps,
                           const GradCheckOptions& options) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  std::vector<Tensor> analytic;
  const double base = loss_fn(params, &analytic);
  const double again = loss_fn(params, nullptr);
  if (base != again || !std::isfinite(base)) {
    throw UnreliableCheckError("grad_check: loss is not deterministic at the base point");
  }
  if (analytic.size() != params.size()) {
    throw ShapeError("grad_check: loss_fn returned " + std::to_string(analytic.size()) +
                     " gradients for " + std::to_string(params.size()) + " tensors");
  }

  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    require_shape(analytic[p], params[p].shape(), "grad_check gradient");
    const std::size_t n = params[p].size();
    const std::size_t stride =
        (options.max_per_tensor == 0 || n <= options.max_per_tensor) ? 1 : n / options.max_per_tensor;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = params[p][i];
      params[p][i] = saved + eps;
      const double up = loss_fn(params, nullptr);
      params[p][i] = saved - eps;
      const double down = loss_fn(params, nullptr);
      params[p][i] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[p][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double err = std::abs(a - numeric) / denom;
      ++result.n_checked;
      if (err > result.max_rel_error || !std::isfinite(err)) {
        result.max_rel_error = err;
        result.worst_tensor = p;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace csed::numkit
