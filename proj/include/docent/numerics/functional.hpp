#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace docent {

/// Floor applied to log arguments and normalization denominators.
inline constexpr double kEpsFloor = 1e-12;

template <class T>
std::vector<T> softmax(std::span<const T> logits) {
  if (logits.empty()) throw std::invalid_argument("empty logits");
  const T peak = *std::max_element(logits.begin(), logits.end());
  std::vector<T> out(logits.size());
  T total{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

template <class T>
std::vector<T> softmax(const std::vector<T>& logits) {
  return softmax(std::span<const T>(logits));
}

template <class T>
T log_sum_exp(std::span<const T> logits) {
  if (logits.empty()) throw std::invalid_argument("empty logits");
  const T peak = *std::max_element(logits.begin(), logits.end());
  T total{0};
  for (const T v : logits) total += std::exp(v - peak);
  return peak + std::log(total);
}

/// -log(probs[target]) with the probability floored at kEpsFloor.
template <class T>
T cross_entropy(std::span<const T> probs, std::size_t target) {
  if (target >= probs.size()) {
    throw std::out_of_range("cross_entropy target " + std::to_string(target) +
                            " outside " + std::to_string(probs.size()) +
                            " classes");
  }
  const T p = std::max(probs[target], static_cast<T>(kEpsFloor));
  return -std::log(p);
}

template <class T>
T cross_entropy(const std::vector<T>& probs, std::size_t target) {
  return cross_entropy(std::span<const T>(probs), target);
}

/// (x - mean) / sqrt(var + eps) * gain + bias, population variance.
template <class T>
std::vector<T> layer_norm(std::span<const T> x, std::span<const T> gain,
                          std::span<const T> bias) {
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("layer_norm needs at least 2 values");
  if (gain.size() != n || bias.size() != n) {
    throw std::invalid_argument("layer_norm gain/bias width mismatch");
  }
  T mean{0};
  for (const T v : x) mean += v;
  mean /= static_cast<T>(n);
  T var{0};
  for (const T v : x) var += (v - mean) * (v - mean);
  var /= static_cast<T>(n);
  const T inv = T{1} / std::sqrt(var + static_cast<T>(kEpsFloor));
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = (x[i] - mean) * inv * gain[i] + bias[i];
  }
  return out;
}

template <class T>
T dot(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: width mismatch");
  T acc{0};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
T l2_norm(std::span<const T> a) {
  return std::sqrt(dot(a, a));
}

/// Cosine similarity; throws on a zero-norm argument.
template <class T>
T cosine(std::span<const T> a, std::span<const T> b) {
  const T na = l2_norm(a);
  const T nb = l2_norm(b);
  if (!(na > T{0}) || !(nb > T{0})) {
    throw std::domain_error("cosine of a zero-norm vector");
  }
  const T c = dot(a, b) / (na * nb);
  return std::clamp(c, T{-1}, T{1});
}

inline double gelu_exact(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

}  // namespace docent
