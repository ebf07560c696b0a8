#pragma once

#include <cstddef>

// Raw row-major GEMM loops. All three accumulate into `c` (c += ...).
namespace docent::kernels {

// c[n x m] += a[n x k] * b[k x m]
template <class T>
void gemm_nn(const T* __restrict a, const T* __restrict b, T* __restrict c,
             std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    T* ci = c + i * m;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      if (av == T{0}) continue;
      const T* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[n x m] += a[n x k] * b[m x k]^T
template <class T>
void gemm_nt(const T* __restrict a, const T* __restrict b, T* __restrict c,
             std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* ai = a + i * k;
    T* ci = c + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const T* bj = b + j * k;
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// c[k x m] += a[n x k]^T * b[n x m]
template <class T>
void gemm_tn(const T* __restrict a, const T* __restrict b, T* __restrict c,
             std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* ai = a + i * k;
    const T* bi = b + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      if (av == T{0}) continue;
      T* cp = c + p * m;
      for (std::size_t j = 0; j < m; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace docent::kernels
