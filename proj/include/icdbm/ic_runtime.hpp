#pragma once

#include <cstdint>
#include <optional>

#include "icdbm/dbm_engine.hpp"
#include "icdbm/object_model.hpp"

// Per-site inline-cache state machine. A site caches the hidden class and
// slot index of the last own-property hit; the first miss that finds the
// property in the object itself triggers one window analysis, later misses
// reuse the memoized result (fast 4-byte repatch, or nothing for failed
// sites).

namespace icdbm {

/// Memoized analysis outcome. Transitions only Unanalyzed -> Recognized or
/// Unanalyzed -> Failed; Failed is terminal.
struct AnalysisMemo {
    enum class State : uint8_t { Unanalyzed, Recognized, Failed };

    State state = State::Unanalyzed;
    OptLevel level = OptLevel::O0;  // Recognized only
    PatchPlan plan;                 // Recognized only
    FailReason reason{};            // Failed only

    void recognize(OptLevel lv, PatchPlan p);
    void fail(FailReason r);
};

struct InlineCache {
    uint32_t site_id = 0;
    std::optional<uint32_t> cached_class;  // HiddenClass id
    uint32_t cached_offset = 0;            // slot index, meaningful with cached_class
    uint64_t site_addr = 0;                // hit-path label address
    uint64_t ic_offset_cell_addr = 0;      // cell the emitted offset load reads
    AnalysisMemo memo;

    // Backing cells of a live code region; null outside native execution.
    uint64_t* native_class_cell = nullptr;
    uint64_t* native_offset_cell = nullptr;
};

/// Cached fast path: on a class match returns the cached slot directly,
/// otherwise falls into cache_miss. Equivalent to lookup_chain + slot load.
uint64_t ic_read(InlineCache& ic, const Heap& heap, const HeapObject* obj,
                 PropertyName name, DbmEngine& engine);

/// Slow path. Own-property hits update the cache and drive the memo state
/// machine (analyze once, then repatch). Prototype hits and absent properties
/// leave cache and code untouched.
uint64_t cache_miss(InlineCache& ic, const Heap& heap, const HeapObject* obj,
                    PropertyName name, DbmEngine& engine);

}  // namespace icdbm
