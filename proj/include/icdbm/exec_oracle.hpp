#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "icdbm/x86_codec.hpp"

// Deterministic interpreter over the decoded instruction subset. Used to
// prove that patched and unpatched hit paths compute the same values and to
// count data memory reads exactly, independent of any hardware counter.

namespace icdbm {

struct OracleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Synthetic machine state. Memory is a sparse word map keyed by exact
/// address; reading an address never written is an error, which catches
/// patches that touch the wrong location.
struct MachineState {
    std::array<uint64_t, 16> regs{};
    bool zero_flag = false;
    uint64_t rip = 0;
    std::unordered_map<uint64_t, uint64_t> mem;

    uint64_t reg(x86::Reg r) const { return regs.at(uint8_t(r)); }
    void set_reg(x86::Reg r, uint64_t v) { regs.at(uint8_t(r)) = v; }
    uint64_t load(uint64_t addr) const;
    void store(uint64_t addr, uint64_t v) { mem[addr] = v; }

    bool operator==(const MachineState& o) const {
        return regs == o.regs && zero_flag == o.zero_flag && mem == o.mem;
    }
};

struct ExecTrace {
    uint64_t insns_executed = 0;
    uint64_t data_reads = 0;
    uint64_t data_writes = 0;
    uint64_t nops_executed = 0;
};

/// Runs from start until max_insns instructions executed or control leaves
/// the buffer. Throws OracleError on Unknown instructions, reads of unwritten
/// memory, and kinds outside the hit-path grammar.
ExecTrace run_sequence(const x86::CodeBuffer& buf, uint64_t start, size_t max_insns,
                       MachineState& state);

struct EquivalenceReport {
    bool equivalent = true;
    size_t states_checked = 0;
    /// data_reads(after) - data_reads(before), keyed by delta.
    std::map<int64_t, size_t> read_delta_histogram;
    std::optional<MachineState> witness;
    std::string detail;
};

using StateGenerator = std::function<MachineState(std::mt19937_64&)>;

/// Runs both buffers from start over n_states generated states and compares
/// the complete final state (registers, flag, memory). max_insns bounds each
/// run; span conservation makes the same bound cover both buffers.
EquivalenceReport check_equivalent(const x86::CodeBuffer& before, const x86::CodeBuffer& after,
                                   uint64_t start, size_t max_insns, size_t n_states,
                                   const StateGenerator& gen, uint64_t seed = 0x1cdb);

}  // namespace icdbm
