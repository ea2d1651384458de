#include "cflx/simd.hpp"

#include <cstdlib>
#include <cstring>

namespace cflx::simd {
namespace {

struct Active {
    const Kernels* k;
    const char* name;
};

Active resolve() {
    const char* want = std::getenv("CFLX_SIMD");
#if defined(CFLX_BUILD_AVX2)
    if (want && std::strcmp(want, "scalar") == 0)
        return {&scalar_kernels(), "scalar"};
    if (cpu_has_avx2()) return {&avx2_kernels(), "avx2"};
#else
    (void)want;
#endif
    return {&scalar_kernels(), "scalar"};
}

const Active& instance() {
    static const Active a = resolve();
    return a;
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Kernels& active() { return *instance().k; }
const char* active_name() { return instance().name; }

}  // namespace cflx::simd
