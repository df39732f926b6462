#pragma once

#include <cstdlib>
#include <stdexcept>

#include <dlfcn.h>

namespace ascnet {

namespace detail {

// cblas layout/transpose constants
inline constexpr int kRowMajor = 101;
inline constexpr int kNoTrans = 111;
inline constexpr int kTrans = 112;

using sgemm_fn = void (*)(int, int, int, int, int, int, float, const float*,
                          int, const float*, int, float, float*, int);
using dgemm_fn = void (*)(int, int, int, int, int, int, double, const double*,
                          int, const double*, int, double, double*, int);

struct BlasHandle {
  sgemm_fn sgemm = nullptr;
  dgemm_fn dgemm = nullptr;
};

// OpenBLAS picks its kernels in the library constructor, and falls back to a
// several-times-slower generic path when cpuid model detection fails (common
// in VMs that mask the model). Loading lazily lets us request the AVX-512
// kernels through the environment before the detection runs, so the library
// must not be linked at load time.
inline const BlasHandle& blas() {
  static const BlasHandle handle = [] {
#if defined(__GNUC__) && defined(__x86_64__)
    if (!std::getenv("OPENBLAS_CORETYPE") && __builtin_cpu_supports("avx512f"))
      setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
#endif
    void* lib = dlopen("libopenblas.so.0", RTLD_NOW | RTLD_LOCAL);
    if (!lib) lib = dlopen("libopenblas.so", RTLD_NOW | RTLD_LOCAL);
    if (!lib)
      throw std::runtime_error("blas: cannot load libopenblas: " +
                               std::string(dlerror()));
    BlasHandle h;
    h.sgemm = reinterpret_cast<sgemm_fn>(dlsym(lib, "cblas_sgemm"));
    h.dgemm = reinterpret_cast<dgemm_fn>(dlsym(lib, "cblas_dgemm"));
    if (!h.sgemm || !h.dgemm)
      throw std::runtime_error("blas: cblas symbols not found in libopenblas");
    return h;
  }();
  return handle;
}

}  // namespace detail

// Row-major C = alpha * op(A) * op(B) + beta * C.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc) {
  detail::blas().sgemm(detail::kRowMajor,
                       trans_a ? detail::kTrans : detail::kNoTrans,
                       trans_b ? detail::kTrans : detail::kNoTrans, m, n, k,
                       alpha, a, lda, b, ldb, beta, c, ldc);
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
                 const double* a, int lda, const double* b, int ldb,
                 double beta, double* c, int ldc) {
  detail::blas().dgemm(detail::kRowMajor,
                       trans_a ? detail::kTrans : detail::kNoTrans,
                       trans_b ? detail::kTrans : detail::kNoTrans, m, n, k,
                       alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace ascnet
