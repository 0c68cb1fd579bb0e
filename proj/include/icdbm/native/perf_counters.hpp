#pragma once

#include <cstdint>
#include <optional>
#include <string>

// Hardware counter bracketing via perf_event_open: instructions, L1
// data-cache loads, L1 data-cache load misses. Each event degrades
// independently to absent when the host does not provide it; wall time is
// always reported.

namespace icdbm::native {

struct PerfCounters {
    std::optional<uint64_t> instructions;
    std::optional<uint64_t> l1d_loads;
    std::optional<uint64_t> l1d_misses;
    uint64_t wall_ns = 0;
};

class PerfGroup {
public:
    PerfGroup();
    ~PerfGroup();
    PerfGroup(const PerfGroup&) = delete;
    PerfGroup& operator=(const PerfGroup&) = delete;

    bool any_available() const {
        return fd_instructions_ >= 0 || fd_l1d_loads_ >= 0 || fd_l1d_misses_ >= 0;
    }
    bool loads_available() const { return fd_l1d_loads_ >= 0; }
    bool instructions_available() const { return fd_instructions_ >= 0; }
    /// Why the probe failed, for skip markers; empty when any_available().
    const std::string& unavailable_reason() const { return unavailable_reason_; }

    void reset_and_start();
    PerfCounters stop(uint64_t wall_ns);

private:
    int fd_instructions_ = -1;
    int fd_l1d_loads_ = -1;
    int fd_l1d_misses_ = -1;
    std::string unavailable_reason_;
};

}  // namespace icdbm::native
