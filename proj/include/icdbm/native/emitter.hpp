#pragma once

#include <cstdint>
#include <string_view>

#include "icdbm/native/exec_region.hpp"

// Emits the six-instruction IC hit/miss skeleton (cached-class load, object
// class load, compare, miss branch, offset load, indexed property load) as a
// directly callable function:
//
//   uint64_t site(const uint64_t* slots, const uint64_t* biased_class_ptr)
//
// slots points at the object's slot array; biased_class_ptr is the address of
// the object's class-id word minus kClassLoadBias, so the emitted class load
// uses the fixed displacement form. A miss returns kUndefinedWord and the
// caller handles it; property values must never equal that sentinel.
//
// Each site owns a cell record in the region's data area:
//   +0  cached class id     +8  cached offset (slot index)
//   +16 result scratch      +24 cell base address (self pointer)

namespace icdbm::native {

inline constexpr int kClassLoadBias = 0x30;

enum class SiteVariant : uint8_t {
    Canonical,       // offset load rip-relative, fused pair -> O2
    SwappedDest,     // property load writes a different register -> O1
    NonRipRelative,  // offset load through a base register -> ineligible
    ExtraScheduled,  // one register move between label and pair -> still O2
};
const char* variant_name(SiteVariant v);

struct EmittedSite {
    uint32_t site_id = 0;
    SiteVariant variant = SiteVariant::Canonical;
    uint64_t entry_addr = 0;
    uint64_t label_addr = 0;  // first hit-path instruction, recorded at emission
    uint64_t cell_addr = 0;

    uint64_t* class_cell = nullptr;
    uint64_t* offset_cell = nullptr;
    uint64_t* result_cell = nullptr;

    using Fn = uint64_t (*)(const uint64_t* slots, const uint64_t* biased_class_ptr);
    Fn fn() const { return reinterpret_cast<Fn>(uintptr_t(entry_addr)); }
    uint64_t offset_cell_addr() const { return cell_addr + 8; }
};

class SiteEmitter {
public:
    explicit SiteEmitter(ExecRegion& region) : region_(region) {}

    /// Emits one site; the region must not be sealed yet.
    EmittedSite emit(SiteVariant variant);

    size_t code_used() const { return code_pos_; }

private:
    ExecRegion& region_;
    size_t code_pos_ = 0;
    size_t data_pos_ = 0;
    uint32_t next_site_id_ = 0;
};

}  // namespace icdbm::native
