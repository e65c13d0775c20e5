#include <atomic>
#include <cstdlib>
#include <string_view>

#include "stgin/simd/kernels.hpp"

namespace stgin::simd {

#if defined(STGIN_HAVE_AVX2)
namespace avx2 {
const KernelTable& table();
}
#endif

namespace {

bool cpu_has_avx2() {
#if defined(STGIN_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* initial_table() {
  const KernelTable* best = avx2_kernels();
  if (best == nullptr) best = &scalar_kernels();
  if (const char* env = std::getenv("STGIN_SIMD")) {
    std::string_view want(env);
    if (want == "scalar") return &scalar_kernels();
    if (want == "avx2" && avx2_kernels() != nullptr) return avx2_kernels();
  }
  return best;
}

std::atomic<const KernelTable*>& active() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable* avx2_kernels() {
#if defined(STGIN_HAVE_AVX2)
  static const bool supported = cpu_has_avx2();
  return supported ? &avx2::table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& kernels() { return *active().load(std::memory_order_acquire); }

bool select(Variant v) {
  const KernelTable* t = v == Variant::scalar ? &scalar_kernels() : avx2_kernels();
  if (t == nullptr) return false;
  active().store(t, std::memory_order_release);
  return true;
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::scalar: return "scalar";
    case Variant::avx2: return "avx2";
  }
  return "unknown";
}

}  // namespace stgin::simd
