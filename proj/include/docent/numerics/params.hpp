#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "docent/numerics/tensor.hpp"

namespace docent {

/// Named learnable tensors. Ordered so iteration (and therefore every
/// reduction over parameters) is deterministic.
template <class T>
using ParamStore = std::map<std::string, Tensor<T>>;

/// Parameter name -> gradient of identical shape.
template <class T>
using Gradients = std::map<std::string, Tensor<T>>;

template <class T>
const Tensor<T>& require_param(const ParamStore<T>& store,
                               const std::string& name) {
  auto it = store.find(name);
  if (it == store.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

template <class T>
Tensor<T>& require_param(ParamStore<T>& store, const std::string& name) {
  auto it = store.find(name);
  if (it == store.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

template <class T>
std::size_t parameter_count(const ParamStore<T>& store) {
  std::size_t n = 0;
  for (const auto& [name, t] : store) n += t.size();
  return n;
}

template <class To, class From>
ParamStore<To> cast_params(const ParamStore<From>& store) {
  ParamStore<To> out;
  for (const auto& [name, t] : store) out.emplace(name, t.template cast<To>());
  return out;
}

/// FNV-1a over the raw bytes of one tensor; used for frozen-weight checks.
template <class T>
std::uint64_t tensor_checksum(const Tensor<T>& t) {
  std::uint64_t h = 1469598103934665603ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
  for (std::size_t i = 0; i < t.size() * sizeof(T); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace docent
