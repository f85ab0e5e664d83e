#include <cstdlib>
#include <string_view>

#include "coopt/kernels.hpp"

namespace coopt::kernels {

#if defined(COOPT_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

const KernelTable* avx2() {
#if defined(COOPT_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() {
  static const KernelTable* chosen = [] {
    const char* env = std::getenv("COOPT_SIMD");
    if (env != nullptr && std::string_view(env) == "scalar") return &scalar();
    const KernelTable* simd = avx2();
    return simd != nullptr ? simd : &scalar();
  }();
  return *chosen;
}

}  // namespace coopt::kernels
