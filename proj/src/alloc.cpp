// Global allocator override: every heap block is 64-byte aligned.
//
// Vectorized kernels (Eigen's in particular) pick their load/store peeling
// from runtime pointer alignment, so two allocations of the same size can
// yield bitwise-different floating-point reductions depending on heap
// history. Pinning the alignment keeps every code path identical, which the
// toolkit relies on for bitwise-reproducible training and prediction.

#include <cstdlib>
#include <new>

namespace {

constexpr std::size_t kAlign = 64;

void* aligned_new(std::size_t size) {
    if (size == 0) size = 1;
    for (;;) {
        void* p = nullptr;
        if (posix_memalign(&p, kAlign, size) == 0) return p;
        std::new_handler handler = std::get_new_handler();
        if (!handler) throw std::bad_alloc();
        handler();
    }
}

}  // namespace

void* operator new(std::size_t size) { return aligned_new(size); }
void* operator new[](std::size_t size) { return aligned_new(size); }

void* operator new(std::size_t size, const std::nothrow_t&) noexcept {
    try {
        return aligned_new(size);
    } catch (...) {
        return nullptr;
    }
}
void* operator new[](std::size_t size, const std::nothrow_t&) noexcept {
    try {
        return aligned_new(size);
    } catch (...) {
        return nullptr;
    }
}

void operator delete(void* p) noexcept { std::free(p); }
void operator delete[](void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }
void operator delete[](void* p, std::size_t) noexcept { std::free(p); }
void operator delete(void* p, const std::nothrow_t&) noexcept { std::free(p); }
void operator delete[](void* p, const std::nothrow_t&) noexcept { std::free(p); }
