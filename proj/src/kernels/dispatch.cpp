#include <atomic>
#include <cstdlib>
#include <cstring>

#include "aml/errors.hpp"
#include "aml/kernels.hpp"

namespace aml::kern {
namespace {

std::atomic<const Ops*> g_active{nullptr};
std::atomic<Backend> g_backend{Backend::scalar};

Backend pick_backend() {
    if (const char* env = std::getenv("AMLDETECT_KERNEL")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
#if defined(AML_HAVE_AVX2_TU)
        if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Backend::avx2;
#endif
        // Unknown or unsupported request falls through to autodetection.
    }
#if defined(AML_HAVE_AVX2_TU)
    if (cpu_has_avx2()) return Backend::avx2;
#endif
    return Backend::scalar;
}

const Ops* table_for(Backend b) {
#if defined(AML_HAVE_AVX2_TU)
    if (b == Backend::avx2) return &avx2_ops();
#endif
    (void)b;
    return &scalar_ops();
}

}  // namespace

void set_backend(Backend b) {
#if !defined(AML_HAVE_AVX2_TU)
    if (b == Backend::avx2) throw ContractError("avx2 backend not built on this platform");
#else
    if (b == Backend::avx2 && !cpu_has_avx2())
        throw ContractError("avx2 backend requested but CPU lacks AVX2");
#endif
    g_backend.store(b);
    g_active.store(table_for(b));
}

const Ops& ops() {
    const Ops* t = g_active.load();
    if (t == nullptr) {
        Backend b = pick_backend();
        g_backend.store(b);
        g_active.store(table_for(b));
        t = g_active.load();
    }
    return *t;
}

Backend active_backend() {
    ops();
    return g_backend.load();
}

std::string backend_name(Backend b) {
    switch (b) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
    }
    return "unknown";
}

}  // namespace aml::kern
