#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icdbm/report.hpp"

// Self-contained benchmark scenarios over live emitted code:
//   mono      one shape, one site; a single warmup patch
//   bi        two shapes in long alternating phases (hit-dominated)
//   bi-tight  the two-shape pattern rotated per element (miss-dominated)
//   kshape    eight shapes rotating; repatches continue all run
//   mixedsite one site per emitter variant
//   array     pure array traversal, no property access, no sites
// Checksums (sum of every value read) are level-independent by construction.

namespace icdbm::native {

/// Plain-memory mirror of a heap object for the emitted code: a class-id
/// word and a slot array.
struct NativeObject {
    uint64_t class_id = 0;
    std::vector<uint64_t> slot_values;

    const uint64_t* slots() const { return slot_values.data(); }
    const uint64_t* biased_class_ptr() const;
};

struct BenchOptions {
    OptLevel level = OptLevel::O2;
    uint32_t reps = 50;
    uint64_t iters = 0;       // 0: calibrate from the time target
    bool short_mode = false;  // calibrate to ~50 ms instead of ~2 s
    bool counters = true;
};

struct NativeRunResult {
    RunRecord record;
    size_t unprotect_calls = 0;
    uint64_t modifications = 0;
    uint64_t total_wall_ns = 0;
    bool counters_available = false;
    std::string counters_note;
};

std::vector<std::string> scenario_names();
bool scenario_exists(const std::string& name);

NativeRunResult run_benchmark(const std::string& scenario, const BenchOptions& options);

}  // namespace icdbm::native
