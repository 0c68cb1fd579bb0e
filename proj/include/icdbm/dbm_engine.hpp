#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "icdbm/object_model.hpp"
#include "icdbm/x86_codec.hpp"

// Classifies inline-cache hit-path instruction windows, builds in-place
// replacement plans for the recognized shapes, applies them, and supports the
// fast 4-byte displacement rewrite on later misses. Sound by construction:
// only bytes of a positively classified span are ever written.

namespace icdbm {

enum class OptLevel : uint8_t { O0 = 0, O1 = 1, O2 = 2 };
const char* opt_level_name(OptLevel level);

enum class FailReason : uint8_t {
    UnrecognizedSequence,
    BranchEncountered,
    NotRipRelative,
    NotMov,
    DestNotRegister,
    WrongIcStruct,
    ImmediateTooWide,
    WindowExhausted,
};
const char* fail_reason_name(FailReason r);
std::optional<FailReason> fail_reason_from_name(std::string_view name);

struct Classification {
    enum class Kind : uint8_t { EligibleO2, EligibleO1, Ineligible };

    Kind kind = Kind::Ineligible;
    x86::DecodedInsn offset_insn;  // the rip-relative offset load (eligible only)
    x86::DecodedInsn fused_insn;   // the indexed property load (EligibleO2 only)
    FailReason reason = FailReason::UnrecognizedSequence;
    uint64_t stopped_at = 0;

    bool eligible() const { return kind != Kind::Ineligible; }
    OptLevel level() const {
        return kind == Kind::EligibleO2  ? OptLevel::O2
               : kind == Kind::EligibleO1 ? OptLevel::O1
                                          : OptLevel::O0;
    }
};

/// In-place replacement for one classified span. The displacement (O2) or
/// immediate (O1) occupies the four bytes at disp_field_addr so later misses
/// rewrite only those.
struct PatchPlan {
    uint64_t span_addr = 0;
    uint32_t span_len = 0;
    std::vector<uint8_t> replacement;  // replacement.size() == span_len, nop padded
    OptLevel level = OptLevel::O0;
    uint64_t disp_field_addr = 0;
    uint32_t word_size = kWordSize;
    int32_t base_disp = 0;  // constant offset folded into the O2 displacement
};

struct PatchError : std::runtime_error {
    PatchError(FailReason r, const std::string& what) : std::runtime_error(what), reason(r) {}
    FailReason reason;
};

/// Replacement longer than the original span. Cannot happen for spans the
/// site emitter produced; guards foreign byte corpora.
struct PaddingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Issues page-unprotection calls through a backend, at most once per page.
class UnprotectBackend {
public:
    virtual ~UnprotectBackend() = default;
    virtual void unprotect(uint64_t page_addr, size_t page_size) = 0;
};

/// Backend that only records calls; the default for non-native buffers.
class RecordingBackend final : public UnprotectBackend {
public:
    void unprotect(uint64_t page_addr, size_t) override { calls.push_back(page_addr); }
    std::vector<uint64_t> calls;
};

class PageGuard {
public:
    PageGuard(size_t page_size, UnprotectBackend& backend)
        : page_size_(page_size), backend_(backend) {
        if (page_size == 0 || (page_size & (page_size - 1)) != 0)
            throw std::invalid_argument("page size must be a power of two");
    }

    /// Unprotects every page overlapping [span_addr, span_addr+span_len);
    /// pages already unprotected are not touched again.
    void ensure_writable(uint64_t span_addr, size_t span_len);

    size_t unprotect_count() const { return pages_.size(); }
    bool is_unprotected(uint64_t addr) const {
        return pages_.count(addr & ~uint64_t(page_size_ - 1)) != 0;
    }
    size_t page_size() const { return page_size_; }

private:
    size_t page_size_;
    UnprotectBackend& backend_;
    std::set<uint64_t> pages_;
};

struct ModificationEvent {
    uint64_t t_ns = 0;      // offset from the engine clock origin
    uint64_t cumulative = 0;
    OptLevel level = OptLevel::O0;
    bool repatch = false;
};

class DbmEngine {
public:
    struct Config {
        uint32_t word_size = kWordSize;
        OptLevel max_level = OptLevel::O2;
        size_t window_max = 8;  // instructions scanned per site
    };

    DbmEngine(x86::CodeBuffer& buf, PageGuard& guard, Config config);
    DbmEngine(x86::CodeBuffer& buf, PageGuard& guard) : DbmEngine(buf, guard, Config{}) {}

    /// Scans the hit-path window at label_addr for the two-instruction
    /// property-read shape. ic_struct_offset_addr is the address of the cell
    /// the offset load must read; a rip-relative load of any other address
    /// bails the analysis.
    Classification analyze_site(uint64_t label_addr, uint64_t ic_struct_offset_addr,
                                std::optional<x86::Reg> obj_reg_hint = std::nullopt);

    /// Builds the replacement for an eligible classification. Throws
    /// PatchError{ImmediateTooWide} when the computed field does not fit in a
    /// signed 32-bit immediate, PaddingError when the replacement would be
    /// longer than the span.
    static PatchPlan build_patch(const Classification& c, int64_t slot_index,
                                 uint32_t word_size, int32_t base_disp);

    void apply_patch(const PatchPlan& plan);
    void repatch_offset(const PatchPlan& plan, int64_t new_slot_index);

    /// Downgrades EligibleO2 to EligibleO1 when the configured level cap asks
    /// for it; identity otherwise.
    Classification capped(Classification c) const;

    bool patching_enabled() const { return config_.max_level != OptLevel::O0; }
    const Config& config() const { return config_; }
    x86::CodeBuffer& buffer() { return buf_; }
    PageGuard& guard() { return guard_; }

    // Per-site analysis bookkeeping used by the miss handler.
    size_t analysis_count(uint32_t site_id) const;
    void count_analysis(uint32_t site_id);

    const std::vector<ModificationEvent>& modification_events() const { return events_; }
    uint64_t modification_count() const { return events_.size(); }

    /// Replaces the event clock (nanoseconds since an arbitrary origin).
    void set_clock(std::function<uint64_t()> clock) { clock_ = std::move(clock); }
    /// Hook run after every code write, e.g. an instruction-cache barrier.
    void set_post_write_hook(std::function<void(uint64_t, size_t)> hook) {
        post_write_ = std::move(hook);
    }

private:
    void write_span(uint64_t addr, std::span<const uint8_t> bytes);
    void record_event(OptLevel level, bool repatch);

    x86::CodeBuffer& buf_;
    PageGuard& guard_;
    Config config_;
    std::unordered_map<uint32_t, size_t> analysis_counts_;
    std::vector<ModificationEvent> events_;
    std::function<uint64_t()> clock_;
    std::function<void(uint64_t, size_t)> post_write_;
};

}  // namespace icdbm
