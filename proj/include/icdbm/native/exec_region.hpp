#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>

#include "icdbm/dbm_engine.hpp"
#include "icdbm/x86_codec.hpp"

// Executable memory for emitted IC sites: a code area that transitions
// write -> read+exec once after emission (and back to writable per page, via
// PageGuard, when the engine patches), followed by always-writable data pages
// holding the per-site cells the code addresses rip-relatively.

namespace icdbm::native {

struct RegionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// mprotect-backed PageGuard backend; grants read+write+exec.
class MprotectBackend final : public UnprotectBackend {
public:
    void unprotect(uint64_t page_addr, size_t page_size) override;
    size_t calls = 0;
};

class ExecRegion {
public:
    ExecRegion(size_t code_capacity, size_t data_capacity);
    ~ExecRegion();
    ExecRegion(const ExecRegion&) = delete;
    ExecRegion& operator=(const ExecRegion&) = delete;

    uint8_t* code_base() { return map_; }
    size_t code_size() const { return code_size_; }
    uint8_t* data_base() { return map_ + code_size_; }
    size_t data_size() const { return data_size_; }
    size_t page_size() const { return page_size_; }

    /// Drops write permission on the code pages; call once after emission.
    void seal_code();
    bool sealed() const { return sealed_; }

    x86::CodeBuffer code_view() {
        return x86::CodeBuffer::view(uint64_t(uintptr_t(map_)), map_, code_size_);
    }

    MprotectBackend& backend() { return backend_; }
    PageGuard& guard() { return *guard_; }

private:
    uint8_t* map_ = nullptr;
    size_t map_size_ = 0;
    size_t code_size_ = 0;
    size_t data_size_ = 0;
    size_t page_size_ = 0;
    bool sealed_ = false;
    MprotectBackend backend_;
    std::unique_ptr<PageGuard> guard_;
};

/// Makes freshly written instruction bytes visible to subsequent execution on
/// this thread (serializing step; x86_64 needs nothing stronger for
/// same-thread modification).
void flush_icache_barrier(const void* span, size_t len);

}  // namespace icdbm::native
