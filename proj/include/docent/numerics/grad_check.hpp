#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "docent/numerics/errors.hpp"
#include "docent/numerics/params.hpp"

namespace docent {

template <class T>
struct LossAndGrad {
  T loss{};
  Gradients<T> grads;
};

/// Evaluates a loss (and, when asked, its analytic gradient) at `params`.
template <class T>
using DifferentiableLoss =
    std::function<LossAndGrad<T>(const ParamStore<T>& params, bool want_grad)>;

struct GradCheckOptions {
  std::size_t samples = 200;
  double step = 1e-5;
  double denominator_eps = 1e-6;
  std::uint64_t seed = 0x5eed;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Central-difference check. The sample budget is split evenly across
/// parameter tensors; tensors smaller than their share are checked exhaustively.
template <class T>
GradCheckResult grad_check(const DifferentiableLoss<T>& fn, ParamStore<T> params,
                           const GradCheckOptions& options = {}) {
  if (!(options.step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  const LossAndGrad<T> base = fn(params, true);
  if (!std::isfinite(static_cast<double>(base.loss))) {
    throw NumericError("grad_check: non-finite loss at base point");
  }
  std::mt19937_64 rng(options.seed);
  const std::size_t tensors = std::max<std::size_t>(params.size(), 1);
  const std::size_t quota = (options.samples + tensors - 1) / tensors;

  GradCheckResult result;
  auto eval = [&](const ParamStore<T>& p) {
    const T v = fn(p, false).loss;
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError("grad_check: non-finite loss under perturbation");
    }
    return static_cast<double>(v);
  };

  for (auto& [name, tensor] : params) {
    std::vector<std::size_t> coords(tensor.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > quota) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(quota);
    }
    const auto g_it = base.grads.find(name);
    for (const std::size_t idx : coords) {
      const double analytic =
          g_it == base.grads.end() ? 0.0 : static_cast<double>(g_it->second[idx]);
      const T saved = tensor[idx];
      tensor[idx] = static_cast<T>(static_cast<double>(saved) + options.step);
      const double plus = eval(params);
      tensor[idx] = static_cast<T>(static_cast<double>(saved) - options.step);
      const double minus = eval(params);
      tensor[idx] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double rel = std::abs(analytic - numeric) /
                         (std::abs(analytic) + std::abs(numeric) + options.denominator_eps);
      ++result.checked;
      if (result.checked == 1 || rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_param = name;
        result.worst_index = idx;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace docent
