#pragma once

// Dense inner loops used by the autodiff engine. Every kernel has a scalar
// reference implementation; vector variants are chosen once at runtime from
// the CPU's capabilities and must agree with the reference to rounding.

#include <cstddef>
#include <string_view>

namespace stgin::simd {

enum class Variant { scalar, avx2 };

struct KernelTable {
  Variant variant;
  const char* name;

  // C(m×n) += A(m×k) · B(k×n)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // C(m×n) += Aᵀ · B with A stored k×m, B stored k×n
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // C(m×n) += A · Bᵀ with A stored m×k, B stored n×k
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);

  double (*dot)(std::size_t n, const double* x, const double* y);
  // y += alpha · x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  // out = x ⊙ y
  void (*mul)(std::size_t n, const double* x, const double* y, double* out);
  // out += x ⊙ y
  void (*mul_acc)(std::size_t n, const double* x, const double* y, double* out);
  // out = x + y
  void (*add)(std::size_t n, const double* x, const double* y, double* out);
};

const KernelTable& scalar_kernels();

/// nullptr when the CPU (or the build) lacks the instruction set.
const KernelTable* avx2_kernels();

/// Active table. Picked on first use: the best supported variant, unless the
/// STGIN_SIMD environment variable names another one ("scalar", "avx2").
const KernelTable& kernels();

/// Overrides the active table. Returns false if the variant is unavailable.
bool select(Variant v);

std::string_view variant_name(Variant v);

}  // namespace stgin::simd
