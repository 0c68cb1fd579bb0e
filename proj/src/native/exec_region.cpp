#include "icdbm/native/exec_region.hpp"

#include <cerrno>
#include <cstring>
#include <string>

#include <sys/mman.h>
#include <unistd.h>

namespace icdbm::native {

namespace {
size_t round_up(size_t n, size_t page) { return (n + page - 1) & ~(page - 1); }
}  // namespace

void MprotectBackend::unprotect(uint64_t page_addr, size_t page_size) {
    if (::mprotect(reinterpret_cast<void*>(uintptr_t(page_addr)), page_size,
                   PROT_READ | PROT_WRITE | PROT_EXEC) != 0)
        throw RegionError(std::string("mprotect(rwx): ") + std::strerror(errno));
    ++calls;
}

ExecRegion::ExecRegion(size_t code_capacity, size_t data_capacity) {
    page_size_ = size_t(::sysconf(_SC_PAGESIZE));
    code_size_ = round_up(code_capacity, page_size_);
    data_size_ = round_up(data_capacity, page_size_);
    map_size_ = code_size_ + data_size_;

    void* p = ::mmap(nullptr, map_size_, PROT_READ | PROT_WRITE,
                     MAP_PRIVATE | MAP_ANONYMOUS, -1, 0);
    if (p == MAP_FAILED)
        throw RegionError(std::string("mmap: ") + std::strerror(errno));
    map_ = static_cast<uint8_t*>(p);
    guard_ = std::make_unique<PageGuard>(page_size_, backend_);
}

ExecRegion::~ExecRegion() {
    if (map_) ::munmap(map_, map_size_);
}

void ExecRegion::seal_code() {
    if (sealed_) throw RegionError("code already sealed");
    if (::mprotect(map_, code_size_, PROT_READ | PROT_EXEC) != 0)
        throw RegionError(std::string("mprotect(rx): ") + std::strerror(errno));
    sealed_ = true;
}

void flush_icache_barrier(const void* span, size_t len) {
#if defined(__x86_64__)
    // Same-thread code modification needs only a serializing instruction
    // before re-entering the modified bytes.
    unsigned a = 0, b = 0, c = 0, d = 0;
    __asm__ __volatile__("cpuid"
                         : "+a"(a), "=b"(b), "+c"(c), "=d"(d)
                         :
                         : "memory");
    (void)span;
    (void)len;
#else
    __builtin___clear_cache(const_cast<char*>(static_cast<const char*>(span)),
                            const_cast<char*>(static_cast<const char*>(span)) + len);
#endif
}

}  // namespace icdbm::native
