#include "icdbm/dbm_engine.hpp"

#include <chrono>
#include <limits>

namespace icdbm {

using x86::DecodedInsn;
using x86::InsnKind;

const char* opt_level_name(OptLevel level) {
    switch (level) {
        case OptLevel::O0: return "O0";
        case OptLevel::O1: return "O1";
        case OptLevel::O2: return "O2";
    }
    return "?";
}

namespace {
constexpr const char* kFailNames[] = {
    "UnrecognizedSequence", "BranchEncountered", "NotRipRelative", "NotMov",
    "DestNotRegister",      "WrongIcStruct",     "ImmediateTooWide", "WindowExhausted",
};
}  // namespace

const char* fail_reason_name(FailReason r) { return kFailNames[uint8_t(r)]; }

std::optional<FailReason> fail_reason_from_name(std::string_view name) {
    for (size_t i = 0; i < std::size(kFailNames); ++i)
        if (name == kFailNames[i]) return FailReason(i);
    return std::nullopt;
}

void PageGuard::ensure_writable(uint64_t span_addr, size_t span_len) {
    if (span_len == 0) return;
    uint64_t mask = ~uint64_t(page_size_ - 1);
    uint64_t first = span_addr & mask;
    uint64_t last = (span_addr + span_len - 1) & mask;
    for (uint64_t page = first;; page += page_size_) {
        if (pages_.insert(page).second)
            backend_.unprotect(page, page_size_);
        if (page == last) break;
    }
}

DbmEngine::DbmEngine(x86::CodeBuffer& buf, PageGuard& guard, Config config)
    : buf_(buf), guard_(guard), config_(config) {
    auto origin = std::chrono::steady_clock::now();
    clock_ = [origin] {
        return uint64_t(std::chrono::duration_cast<std::chrono::nanoseconds>(
                            std::chrono::steady_clock::now() - origin)
                            .count());
    };
}

Classification DbmEngine::analyze_site(uint64_t label_addr, uint64_t ic_struct_offset_addr,
                                       std::optional<x86::Reg> obj_reg_hint) {
    if (!buf_.contains(label_addr))
        throw x86::BoundsError("site label outside the code buffer");

    auto ineligible = [](FailReason r, uint64_t at) {
        Classification c;
        c.kind = Classification::Kind::Ineligible;
        c.reason = r;
        c.stopped_at = at;
        return c;
    };

    uint64_t p = label_addr;
    for (size_t scanned = 0; scanned < config_.window_max && buf_.contains(p); ++scanned) {
        DecodedInsn insn = x86::decode_one(buf_, p);
        if (insn.kind == InsnKind::Unknown)
            return ineligible(FailReason::UnrecognizedSequence, p);
        if (insn.is_branch())
            return ineligible(FailReason::BranchEncountered, p);

        if (insn.reads_memory() || insn.writes_memory()) {
            // First memory access after the label: this must be the offset
            // load, judged against the recognition criteria in order.
            if (!insn.is_mov())
                return ineligible(FailReason::NotMov, p);
            if (!insn.reads_memory() || !insn.writes_register())
                return ineligible(FailReason::DestNotRegister, p);
            if (!insn.is_rip_relative_load())
                return ineligible(FailReason::NotRipRelative, p);
            if (insn.rip_target != ic_struct_offset_addr)
                return ineligible(FailReason::WrongIcStruct, p);

            Classification c;
            c.kind = Classification::Kind::EligibleO1;
            c.offset_insn = insn;

            uint64_t next_addr = p + insn.length;
            if (buf_.contains(next_addr)) {
                DecodedInsn next = x86::decode_one(buf_, next_addr);
                bool fusable = next.kind == InsnKind::MovRegFromBaseIndexScaleDisp &&
                               next.index_reg == insn.dest_reg &&
                               next.dest_reg == insn.dest_reg &&
                               next.scale == config_.word_size &&
                               (!obj_reg_hint || next.base_reg == *obj_reg_hint);
                if (fusable) {
                    c.kind = Classification::Kind::EligibleO2;
                    c.fused_insn = next;
                }
            }
            return c;
        }

        // Register-only instructions are scheduling noise; keep scanning.
        p += insn.length;
    }
    return ineligible(FailReason::WindowExhausted, p);
}

PatchPlan DbmEngine::build_patch(const Classification& c, int64_t slot_index,
                                 uint32_t word_size, int32_t base_disp) {
    if (!c.eligible())
        throw std::invalid_argument("cannot build a patch for an ineligible site");

    PatchPlan plan;
    plan.word_size = word_size;
    plan.base_disp = base_disp;
    plan.span_addr = c.offset_insn.addr;

    std::vector<uint8_t> body;
    if (c.kind == Classification::Kind::EligibleO2) {
        int64_t disp = slot_index * int64_t(word_size) + int64_t(base_disp);
        if (disp < std::numeric_limits<int32_t>::min() ||
            disp > std::numeric_limits<int32_t>::max())
            throw PatchError(FailReason::ImmediateTooWide,
                             "property displacement does not fit in 32 bits");
        plan.level = OptLevel::O2;
        plan.span_len = c.offset_insn.length + c.fused_insn.length;
        body = x86::encode_mov_reg_base_disp(c.fused_insn.dest_reg, c.fused_insn.base_reg,
                                             int32_t(disp));
    } else {
        if (slot_index < std::numeric_limits<int32_t>::min() ||
            slot_index > std::numeric_limits<int32_t>::max())
            throw PatchError(FailReason::ImmediateTooWide,
                             "slot index does not fit in a 32-bit immediate");
        plan.level = OptLevel::O1;
        plan.span_len = c.offset_insn.length;
        body = x86::encode_mov_reg_imm32(c.offset_insn.dest_reg, int32_t(slot_index));
    }

    if (body.size() > plan.span_len)
        throw PaddingError("replacement longer than the original span");
    plan.disp_field_addr = plan.span_addr + body.size() - 4;
    plan.replacement = std::move(body);
    if (size_t pad = plan.span_len - plan.replacement.size(); pad > 0) {
        auto nop = x86::encode_nop(pad);
        plan.replacement.insert(plan.replacement.end(), nop.begin(), nop.end());
    }
    return plan;
}

void DbmEngine::write_span(uint64_t addr, std::span<const uint8_t> bytes) {
    if (!buf_.contains(addr, bytes.size()))
        throw x86::BoundsError("patch span outside the code buffer");
    guard_.ensure_writable(addr, bytes.size());
    // Tail first, first byte last, to narrow torn-read windows; exclusive
    // mutation is still the correctness contract.
    if (bytes.size() > 1)
        buf_.write_bytes(addr + 1, bytes.subspan(1));
    buf_.write_bytes(addr, bytes.subspan(0, 1));
    if (post_write_) post_write_(addr, bytes.size());
}

void DbmEngine::apply_patch(const PatchPlan& plan) {
    if (plan.replacement.size() != plan.span_len)
        throw std::invalid_argument("plan replacement does not cover its span");
    write_span(plan.span_addr, plan.replacement);
    record_event(plan.level, /*repatch=*/false);
}

void DbmEngine::repatch_offset(const PatchPlan& plan, int64_t new_slot_index) {
    int64_t value = plan.level == OptLevel::O2
                        ? new_slot_index * int64_t(plan.word_size) + int64_t(plan.base_disp)
                        : new_slot_index;
    if (value < std::numeric_limits<int32_t>::min() ||
        value > std::numeric_limits<int32_t>::max())
        throw PatchError(FailReason::ImmediateTooWide,
                         "new displacement does not fit in 32 bits");
    uint8_t bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = uint8_t(uint32_t(value) >> (8 * i));
    write_span(plan.disp_field_addr, bytes);
    record_event(plan.level, /*repatch=*/true);
}

Classification DbmEngine::capped(Classification c) const {
    if (c.kind == Classification::Kind::EligibleO2 && config_.max_level < OptLevel::O2) {
        c.kind = Classification::Kind::EligibleO1;
        c.fused_insn = x86::DecodedInsn{};
    }
    return c;
}

size_t DbmEngine::analysis_count(uint32_t site_id) const {
    auto it = analysis_counts_.find(site_id);
    return it == analysis_counts_.end() ? 0 : it->second;
}

void DbmEngine::count_analysis(uint32_t site_id) { ++analysis_counts_[site_id]; }

void DbmEngine::record_event(OptLevel level, bool repatch) {
    events_.push_back(ModificationEvent{clock_(), events_.size() + 1, level, repatch});
}

}  // namespace icdbm
