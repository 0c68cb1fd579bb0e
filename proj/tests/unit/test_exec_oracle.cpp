#include <doctest.h>

#include "icdbm/exec_oracle.hpp"
#include "test_helpers.hpp"

using namespace icdbm;
using namespace icdbm::x86;
using icdbm::test::buffer_from_hex;

TEST_CASE("two-load hit path: offset fetch then indexed property fetch") {
    const uint64_t base = 0x400000;
    CodeBuffer buf = buffer_from_hex(base, icdbm::test::kCanonicalPairHex);

    MachineState st;
    st.set_reg(Reg::rdi, 0x9000);
    st.store(base + icdbm::test::kCanonicalIcDelta, 3);  // offset cell holds slot index 3
    st.store(0x9000 + 3 * 8, 0xfeed);

    ExecTrace trace = run_sequence(buf, base, 8, st);
    CHECK(st.reg(Reg::rax) == 0xfeed);
    CHECK(trace.insns_executed == 2);
    CHECK(trace.data_reads == 2);
    CHECK(trace.data_writes == 0);
    CHECK(trace.nops_executed == 0);
}

TEST_CASE("fused form: one load plus a costless nop") {
    const uint64_t base = 0x400000;
    CodeBuffer buf = buffer_from_hex(base, "48 8b 87 18 00 00 00 0f 1f 40 00");

    MachineState st;
    st.set_reg(Reg::rdi, 0x9000);
    st.store(0x9000 + 0x18, 0xfeed);

    ExecTrace trace = run_sequence(buf, base, 8, st);
    CHECK(st.reg(Reg::rax) == 0xfeed);
    CHECK(trace.insns_executed == 2);
    CHECK(trace.data_reads == 1);
    CHECK(trace.nops_executed == 1);
}

TEST_CASE("empty run leaves the state untouched") {
    CodeBuffer buf = buffer_from_hex(0x1000, "90");
    MachineState st;
    st.set_reg(Reg::rbx, 7);
    ExecTrace trace = run_sequence(buf, 0x1000, 0, st);
    CHECK(trace.insns_executed == 0);
    CHECK(trace.data_reads == 0);
    CHECK(st.reg(Reg::rbx) == 7);
}

TEST_CASE("compare and conditional jump steer control flow") {
    // cmp %rbx,%rax ; jne +2 ; mov $1,%rax ; mov $2,%rbx
    const uint64_t base = 0x1000;
    CodeBuffer buf = buffer_from_hex(
        base, "48 39 d8 75 07 48 c7 c0 01 00 00 00 48 c7 c3 02 00 00 00");

    MachineState equal;
    equal.set_reg(Reg::rax, 5);
    equal.set_reg(Reg::rbx, 5);
    run_sequence(buf, base, 8, equal);
    CHECK(equal.reg(Reg::rax) == 1);  // fallthrough
    CHECK(equal.reg(Reg::rbx) == 2);

    MachineState differ;
    differ.set_reg(Reg::rax, 5);
    differ.set_reg(Reg::rbx, 6);
    run_sequence(buf, base, 8, differ);
    CHECK(differ.reg(Reg::rax) == 5);  // jump skipped the first store
    CHECK(differ.reg(Reg::rbx) == 2);
}

TEST_CASE("stores hit memory and are counted") {
    // mov %rax,-0x38(%rbp)
    CodeBuffer buf = buffer_from_hex(0x1000, "48 89 45 c8");
    MachineState st;
    st.set_reg(Reg::rax, 42);
    st.set_reg(Reg::rbp, 0x8000);
    ExecTrace trace = run_sequence(buf, 0x1000, 1, st);
    CHECK(trace.data_writes == 1);
    CHECK(st.load(0x8000 - 0x38) == 42);
}

TEST_CASE("reading unwritten memory is an error") {
    CodeBuffer buf = buffer_from_hex(0x1000, "48 8b 87 18 00 00 00");
    MachineState st;
    st.set_reg(Reg::rdi, 0x9000);
    CHECK_THROWS_AS(run_sequence(buf, 0x1000, 1, st), OracleError);
}

TEST_CASE("unknown instructions are an error, not a skip") {
    CodeBuffer buf = buffer_from_hex(0x1000, "cc");
    MachineState st;
    CHECK_THROWS_AS(run_sequence(buf, 0x1000, 1, st), OracleError);
}

TEST_CASE("identical runs produce identical traces") {
    const uint64_t base = 0x400000;
    CodeBuffer buf = buffer_from_hex(base, icdbm::test::kCanonicalPairHex);
    auto make_state = [&] {
        MachineState st;
        st.set_reg(Reg::rdi, 0x9000);
        st.store(base + icdbm::test::kCanonicalIcDelta, 2);
        st.store(0x9000 + 16, 77);
        return st;
    };
    MachineState a = make_state();
    MachineState b = make_state();
    ExecTrace ta = run_sequence(buf, base, 4, a);
    ExecTrace tb = run_sequence(buf, base, 4, b);
    CHECK(a == b);
    CHECK(ta.data_reads == tb.data_reads);
    CHECK(ta.insns_executed == tb.insns_executed);
}

TEST_CASE("equivalence harness flags genuine divergence") {
    // mov $1,%rax   vs   mov $2,%rax
    CodeBuffer one = buffer_from_hex(0x1000, "48 c7 c0 01 00 00 00");
    CodeBuffer two = buffer_from_hex(0x1000, "48 c7 c0 02 00 00 00");
    auto gen = [](std::mt19937_64&) { return MachineState{}; };
    EquivalenceReport same = check_equivalent(one, one, 0x1000, 4, 10, gen);
    CHECK(same.equivalent);
    CHECK(same.read_delta_histogram.at(0) == 10);

    EquivalenceReport diff = check_equivalent(one, two, 0x1000, 4, 10, gen);
    CHECK(!diff.equivalent);
    CHECK(diff.witness.has_value());
}
