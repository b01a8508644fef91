#include "sdelab/kernels.hpp"

#include <cstdlib>

namespace sdelab::kernels {

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(_M_X64)) && defined(__GNUC__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

namespace {

struct Active {
    const KernelTable* t;
    std::string name;
};

Active& active() {
    static Active a = [] {
        Active init{&scalar_table, "scalar"};
        const char* env = std::getenv("SDELAB_SIMD");
        const std::string want = env ? env : "";
        if (want == "scalar") return init;
        if (cpu_has_avx2() && avx2_table.dot != nullptr && (want.empty() || want == "avx2")) {
            init = {&avx2_table, "avx2"};
        }
        return init;
    }();
    return a;
}

}  // namespace

const KernelTable& table() { return *active().t; }

const std::string& backend() { return active().name; }

bool set_backend(const std::string& name) {
    if (name == "scalar") {
        active() = {&scalar_table, "scalar"};
        return true;
    }
    if (name == "avx2" && cpu_has_avx2() && avx2_table.dot != nullptr) {
        active() = {&avx2_table, "avx2"};
        return true;
    }
    return false;
}

}  // namespace sdelab::kernels
