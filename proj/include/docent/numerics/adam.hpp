#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "docent/numerics/params.hpp"

namespace docent {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  ParamStore<T> first_moment;
  ParamStore<T> second_moment;
};

/// One bias-corrected Adam update of every parameter named in `grads`.
/// Parameters without a gradient entry are left alone.
template <class T>
void adam_step(ParamStore<T>& params, const Gradients<T>& grads,
               AdamState<T>& state) {
  const AdamConfig& c = state.config;
  if (!(c.lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) {
      throw std::invalid_argument("adam: gradient for unknown parameter '" + name + "'");
    }
    if (!it->second.same_shape(g)) {
      throw std::invalid_argument("adam: shape mismatch for parameter '" + name +
                                  "': " + shape_string(it->second.shape()) +
                                  " vs gradient " + shape_string(g.shape()));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor<T>& p = params.find(name)->second;
    auto [m_it, m_new] = state.first_moment.try_emplace(name, p.shape());
    auto [v_it, v_new] = state.second_moment.try_emplace(name, p.shape());
    Tensor<T>& m = m_it->second;
    Tensor<T>& v = v_it->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = c.beta1 * static_cast<double>(m[i]) + (1.0 - c.beta1) * gi;
      const double vi = c.beta2 * static_cast<double>(v[i]) + (1.0 - c.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = c.lr * (mi / correct1) / (std::sqrt(vi / correct2) + c.eps);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
    }
  }
}

}  // namespace docent
