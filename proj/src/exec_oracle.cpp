#include "icdbm/exec_oracle.hpp"

#include <sstream>

namespace icdbm {

using x86::DecodedInsn;
using x86::InsnKind;

uint64_t MachineState::load(uint64_t addr) const {
    auto it = mem.find(addr);
    if (it == mem.end()) {
        std::ostringstream os;
        os << "read of unwritten memory at 0x" << std::hex << addr;
        throw OracleError(os.str());
    }
    return it->second;
}

namespace {

// base + index*scale + disp; rip-relative operands resolve through
// insn.rip_target at the call sites instead.
uint64_t effective_address(const DecodedInsn& insn, const MachineState& st) {
    uint64_t ea = uint64_t(int64_t(insn.disp));
    if (insn.base_reg != x86::Reg::none) ea += st.reg(insn.base_reg);
    if (insn.index_reg != x86::Reg::none) ea += st.reg(insn.index_reg) * insn.scale;
    return ea;
}

}  // namespace

ExecTrace run_sequence(const x86::CodeBuffer& buf, uint64_t start, size_t max_insns,
                       MachineState& state) {
    ExecTrace trace;
    state.rip = start;
    while (trace.insns_executed < max_insns && buf.contains(state.rip)) {
        DecodedInsn insn = x86::decode_one(buf, state.rip);
        uint64_t next = state.rip + insn.length;
        switch (insn.kind) {
            case InsnKind::MovRegFromRipMem:
                state.set_reg(insn.dest_reg, state.load(insn.rip_target));
                ++trace.data_reads;
                break;
            case InsnKind::MovRegFromBaseIndexScaleDisp:
            case InsnKind::MovRegFromBaseDisp:
                state.set_reg(insn.dest_reg, state.load(effective_address(insn, state)));
                ++trace.data_reads;
                break;
            case InsnKind::MovRegImm32:
                state.set_reg(insn.dest_reg, uint64_t(insn.imm));
                break;
            case InsnKind::MovRegReg:
                state.set_reg(insn.dest_reg, state.reg(insn.base_reg));
                break;
            case InsnKind::MovRegToMem: {
                bool rip_form = insn.base_reg == x86::Reg::none &&
                                insn.index_reg == x86::Reg::none;
                uint64_t ea = rip_form ? insn.rip_target : effective_address(insn, state);
                state.store(ea, state.reg(insn.dest_reg));
                ++trace.data_writes;
                break;
            }
            case InsnKind::CmpRegReg:
                state.zero_flag = state.reg(insn.dest_reg) == state.reg(insn.base_reg);
                break;
            case InsnKind::CmpRegMem: {
                bool rip_form = insn.base_reg == x86::Reg::none &&
                                insn.index_reg == x86::Reg::none;
                uint64_t ea = rip_form ? insn.rip_target : effective_address(insn, state);
                state.zero_flag = state.reg(insn.dest_reg) == state.load(ea);
                ++trace.data_reads;
                break;
            }
            case InsnKind::CondJump: {
                bool taken;
                if (insn.cc == x86::kCondEqual)
                    taken = state.zero_flag;
                else if (insn.cc == x86::kCondNotEqual)
                    taken = !state.zero_flag;
                else
                    throw OracleError("condition code outside the modeled set");
                if (taken) next = insn.rip_target;
                break;
            }
            case InsnKind::Jmp:
                next = insn.rip_target;
                break;
            case InsnKind::Nop:
                ++trace.nops_executed;
                break;
            case InsnKind::Unknown:
                throw OracleError("unknown instruction in oracle run");
            default:
                // Call/Ret/Push/Pop need a stack model the hit path never uses.
                throw OracleError(std::string("unsupported instruction kind: ") +
                                  x86::kind_name(insn.kind));
        }
        ++trace.insns_executed;
        state.rip = next;
    }
    return trace;
}

EquivalenceReport check_equivalent(const x86::CodeBuffer& before, const x86::CodeBuffer& after,
                                   uint64_t start, size_t max_insns, size_t n_states,
                                   const StateGenerator& gen, uint64_t seed) {
    EquivalenceReport report;
    std::mt19937_64 rng(seed);
    for (size_t i = 0; i < n_states; ++i) {
        MachineState base = gen(rng);
        MachineState a = base;
        MachineState b = base;
        ExecTrace ta = run_sequence(before, start, max_insns, a);
        ExecTrace tb = run_sequence(after, start, max_insns, b);
        ++report.states_checked;
        report.read_delta_histogram[int64_t(tb.data_reads) - int64_t(ta.data_reads)]++;
        if (!(a == b)) {
            report.equivalent = false;
            report.witness = base;
            std::ostringstream os;
            os << "state divergence on generated state #" << i;
            report.detail = os.str();
            return report;
        }
    }
    return report;
}

}  // namespace icdbm
