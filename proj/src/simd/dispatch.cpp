#include <atomic>
#include <cstdlib>
#include <string_view>

#include "bbphase/simd/kernels.hpp"

namespace bbphase::simd {

namespace {

const Kernels* detect() {
    const char* env = std::getenv("BBPHASE_KERNELS");
    const std::string_view want = env ? env : "auto";
    if (want == "scalar") return &scalar_kernels();
    if (const Kernels* k = avx2_kernels()) return k;
    return &scalar_kernels();
}

std::atomic<const Kernels*>& slot() {
    static std::atomic<const Kernels*> active{detect()};
    return active;
}

}  // namespace

const Kernels& active_kernels() { return *slot().load(std::memory_order_acquire); }

bool select_kernels(Isa isa) {
    const Kernels* k = isa == Isa::Scalar ? &scalar_kernels() : avx2_kernels();
    if (!k) return false;
    slot().store(k, std::memory_order_release);
    return true;
}

}  // namespace bbphase::simd
