#include "icdbm/ic_runtime.hpp"

#include <cassert>

namespace icdbm {

void AnalysisMemo::recognize(OptLevel lv, PatchPlan p) {
    assert(state == State::Unanalyzed);
    state = State::Recognized;
    level = lv;
    plan = std::move(p);
}

void AnalysisMemo::fail(FailReason r) {
    assert(state == State::Unanalyzed);
    state = State::Failed;
    reason = r;
}

namespace {

void update_cache(InlineCache& ic, const HeapObject* obj, uint32_t slot_index) {
    ic.cached_offset = slot_index;
    ic.cached_class = obj->hclass().id();
    if (ic.native_offset_cell) *ic.native_offset_cell = slot_index;
    if (ic.native_class_cell) *ic.native_class_cell = obj->hclass().id();
}

// First own-property miss: analyze the window once and memoize the result;
// apply the patch right away when the engine is allowed to write code.
void analyze_and_memoize(InlineCache& ic, uint32_t slot_index, DbmEngine& engine) {
    engine.count_analysis(ic.site_id);
    Classification c = engine.analyze_site(ic.site_addr, ic.ic_offset_cell_addr);
    if (!c.eligible()) {
        ic.memo.fail(c.reason);
        return;
    }
    c = engine.capped(c);
    int32_t base_disp = c.kind == Classification::Kind::EligibleO2 ? c.fused_insn.disp : 0;
    try {
        PatchPlan plan =
            DbmEngine::build_patch(c, slot_index, engine.config().word_size, base_disp);
        if (engine.patching_enabled())
            engine.apply_patch(plan);
        ic.memo.recognize(plan.level, std::move(plan));
    } catch (const PatchError& err) {
        ic.memo.fail(err.reason);
    }
}

}  // namespace

uint64_t cache_miss(InlineCache& ic, const Heap& heap, const HeapObject* obj,
                    PropertyName name, DbmEngine& engine) {
    auto own = heap.lookup_own(obj, name);
    if (!own) {
        // Prototype hits do not populate the cache; only own-property offsets
        // are cacheable in this monomorphic scheme.
        auto hit = heap.lookup_chain(obj, name);
        return hit ? hit->holder->slot(hit->slot) : kUndefinedWord;
    }

    uint64_t value = obj->slot(*own);
    switch (ic.memo.state) {
        case AnalysisMemo::State::Unanalyzed:
            update_cache(ic, obj, *own);
            analyze_and_memoize(ic, *own, engine);
            break;
        case AnalysisMemo::State::Recognized:
            if (engine.patching_enabled()) {
                try {
                    engine.repatch_offset(ic.memo.plan, *own);
                } catch (const PatchError&) {
                    // Leave the cache pointing at the previous shape so the
                    // patched fast path stays consistent; this shape will take
                    // the slow path on every access.
                    return value;
                }
            }
            update_cache(ic, obj, *own);
            break;
        case AnalysisMemo::State::Failed:
            update_cache(ic, obj, *own);
            break;
    }
    return value;
}

uint64_t ic_read(InlineCache& ic, const Heap& heap, const HeapObject* obj,
                 PropertyName name, DbmEngine& engine) {
    if (ic.cached_class && obj->hclass().id() == *ic.cached_class)
        return obj->slot(ic.cached_offset);
    return cache_miss(ic, heap, obj, name, engine);
}

}  // namespace icdbm
