#include <doctest.h>

#include <random>

#include "icdbm/exec_oracle.hpp"
#include "icdbm/ic_runtime.hpp"
#include "test_helpers.hpp"

using namespace icdbm;
using namespace icdbm::x86;
using icdbm::test::buffer_from_hex;
using icdbm::test::to_hex;

namespace {

PropertyName prop(const char* s) { return PropertyName::intern(s); }

// One IC site over the canonical emitted pair, plus the pure-model heap.
struct Fixture {
    Heap heap;
    CodeBuffer buf = buffer_from_hex(0x400000, icdbm::test::kCanonicalPairHex);
    RecordingBackend backend;
    PageGuard guard{4096, backend};
    DbmEngine engine;
    InlineCache ic;

    explicit Fixture(OptLevel level = OptLevel::O2)
        : engine(buf, guard, DbmEngine::Config{.max_level = level}) {
        ic.site_id = 399;
        ic.site_addr = 0x400000;
        ic.ic_offset_cell_addr = 0x400000 + icdbm::test::kCanonicalIcDelta;
    }

    uint64_t read(const HeapObject* obj) { return ic_read(ic, heap, obj, prop("prop"), engine); }
};

}  // namespace

TEST_CASE("hit returns the cached slot without lookup") {
    Fixture fx;
    HeapObject* obj = fx.heap.new_object();
    fx.heap.set_property(obj, prop("a"), 13);
    fx.heap.set_property(obj, prop("prop"), 12);

    fx.ic.cached_class = obj->hclass().id();
    fx.ic.cached_offset = 1;
    CHECK(fx.read(obj) == 12);
    CHECK(fx.engine.analysis_count(fx.ic.site_id) == 0);  // pure hit, no slow path
}

TEST_CASE("three-shape access sequence drives patch then repatches") {
    Fixture fx;
    HeapObject* o1 = fx.heap.new_object();
    HeapObject* o2 = fx.heap.new_object();
    HeapObject* o3 = fx.heap.new_object();
    fx.heap.set_property(o1, prop("a"), 13);
    fx.heap.set_property(o1, prop("prop"), 12);
    fx.heap.set_property(o2, prop("a"), 13);
    fx.heap.set_property(o2, prop("prop"), 37);
    fx.heap.set_property(o3, prop("b"), 101);
    fx.heap.set_property(o3, prop("c"), 42);
    fx.heap.set_property(o3, prop("prop"), 2);

    // First access misses on the empty cache, recognizes the site and fuses.
    CHECK(fx.read(o1) == 12);
    CHECK(fx.ic.memo.state == AnalysisMemo::State::Recognized);
    CHECK(fx.ic.memo.level == OptLevel::O2);
    CHECK(fx.ic.cached_class == o1->hclass().id());
    CHECK(fx.ic.cached_offset == 1);
    // Slot 1 under word size 8: displacement 0x08 in the fused load.
    CHECK(to_hex(fx.buf.copy_bytes()) == "48 8b 87 08 00 00 00 0f 1f 40 00");

    // Same shape: a straight hit, nothing moves.
    auto bytes_before = fx.buf.copy_bytes();
    CHECK(fx.read(o2) == 37);
    CHECK(fx.buf.copy_bytes() == bytes_before);

    // Different shape: the memoized plan rewrites just the displacement
    // field (slot 2 -> 0x10).
    CHECK(fx.read(o3) == 2);
    CHECK(to_hex(fx.buf.copy_bytes()) == "48 8b 87 10 00 00 00 0f 1f 40 00");
    CHECK(fx.engine.analysis_count(fx.ic.site_id) == 1);

    // A shape whose slot sits deeper: index 4 writes 20 00 00 00.
    HeapObject* o5 = fx.heap.new_object();
    for (const char* n : {"p", "q", "r", "s"}) fx.heap.set_property(o5, prop(n), 1);
    fx.heap.set_property(o5, prop("prop"), 9);
    CHECK(fx.read(o5) == 9);
    CHECK(to_hex(fx.buf.copy_bytes()) == "48 8b 87 20 00 00 00 0f 1f 40 00");
}

TEST_CASE("analysis runs exactly once no matter how many misses follow") {
    Fixture fx;
    std::vector<HeapObject*> objs;
    for (int k = 0; k < 6; ++k) {
        HeapObject* o = fx.heap.new_object();
        for (int f = 0; f < k; ++f)
            fx.heap.set_property(o, prop(("f" + std::to_string(f)).c_str()), 0);
        fx.heap.set_property(o, prop("prop"), uint64_t(100 + k));
        objs.push_back(o);
    }
    for (int round = 0; round < 50; ++round)
        for (size_t i = 0; i < objs.size(); ++i)
            CHECK(fx.read(objs[i]) == 100 + i);
    CHECK(fx.engine.analysis_count(fx.ic.site_id) == 1);
    CHECK(fx.ic.memo.state == AnalysisMemo::State::Recognized);
}

TEST_CASE("prototype hits bypass cache and code entirely") {
    Fixture fx;
    HeapObject* proto = fx.heap.new_object();
    fx.heap.set_property(proto, prop("prop"), 777);
    HeapObject* obj = fx.heap.new_object(proto);
    fx.heap.set_property(obj, prop("own"), 1);

    auto bytes_before = fx.buf.copy_bytes();
    CHECK(fx.read(obj) == 777);
    CHECK(fx.ic.memo.state == AnalysisMemo::State::Unanalyzed);
    CHECK(!fx.ic.cached_class.has_value());
    CHECK(fx.buf.copy_bytes() == bytes_before);
    CHECK(fx.engine.analysis_count(fx.ic.site_id) == 0);
}

TEST_CASE("absent property yields the undefined word and leaves the cache") {
    Fixture fx;
    HeapObject* obj = fx.heap.new_object();
    fx.heap.set_property(obj, prop("other"), 5);
    CHECK(fx.read(obj) == kUndefinedWord);
    CHECK(!fx.ic.cached_class.has_value());
    CHECK(fx.ic.memo.state == AnalysisMemo::State::Unanalyzed);
}

TEST_CASE("failed analysis is terminal and never patches") {
    Heap heap;
    // Offset load through rbp: ineligible.
    CodeBuffer buf = buffer_from_hex(0x400000, "48 8b 45 30 48 8b 04 c7");
    RecordingBackend backend;
    PageGuard guard(4096, backend);
    DbmEngine engine(buf, guard);
    InlineCache ic;
    ic.site_id = 7;
    ic.site_addr = 0x400000;
    ic.ic_offset_cell_addr = 0x400000 + 0x1023;

    HeapObject* o1 = heap.new_object();
    heap.set_property(o1, prop("prop"), 1);
    HeapObject* o2 = heap.new_object();
    heap.set_property(o2, prop("x"), 0);
    heap.set_property(o2, prop("prop"), 2);

    auto bytes_before = buf.copy_bytes();
    for (int i = 0; i < 10; ++i) {
        CHECK(ic_read(ic, heap, o1, prop("prop"), engine) == 1);
        CHECK(ic_read(ic, heap, o2, prop("prop"), engine) == 2);
    }
    CHECK(ic.memo.state == AnalysisMemo::State::Failed);
    CHECK(ic.memo.reason == FailReason::NotRipRelative);
    CHECK(engine.analysis_count(ic.site_id) == 1);
    CHECK(buf.copy_bytes() == bytes_before);
    CHECK(backend.calls.empty());  // no page was ever unprotected
}

TEST_CASE("level cap zero analyzes and memoizes but never writes code") {
    Fixture fx(OptLevel::O0);
    HeapObject* obj = fx.heap.new_object();
    fx.heap.set_property(obj, prop("prop"), 4);
    auto bytes_before = fx.buf.copy_bytes();
    CHECK(fx.read(obj) == 4);
    CHECK(fx.ic.memo.state == AnalysisMemo::State::Recognized);
    CHECK(fx.buf.copy_bytes() == bytes_before);
    CHECK(fx.engine.modification_count() == 0);
}

TEST_CASE("level cap one produces the immediate rewrite") {
    Fixture fx(OptLevel::O1);
    HeapObject* obj = fx.heap.new_object();
    fx.heap.set_property(obj, prop("a"), 0);
    fx.heap.set_property(obj, prop("prop"), 4);
    CHECK(fx.read(obj) == 4);
    CHECK(fx.ic.memo.level == OptLevel::O1);
    CHECK(to_hex(fx.buf.copy_bytes()) == "48 c7 c0 01 00 00 00 48 8b 04 c7");
}

TEST_CASE("reads through the cache match the chain lookup over random traffic") {
    std::mt19937_64 rng(404);
    const std::vector<std::string> fillers = {"a", "b", "c", "d", "e"};
    for (int round = 0; round < 20; ++round) {
        Fixture fx;
        HeapObject* proto = fx.heap.new_object();
        if (rng() % 2) fx.heap.set_property(proto, prop("prop"), rng() % 1000);

        std::vector<HeapObject*> objs;
        for (int i = 0; i < 8; ++i) {
            HeapObject* o = fx.heap.new_object(rng() % 2 ? proto : nullptr);
            size_t nf = rng() % fillers.size();
            for (size_t f = 0; f < nf; ++f)
                fx.heap.set_property(o, prop(fillers[f].c_str()), rng());
            if (rng() % 4 != 0) fx.heap.set_property(o, prop("prop"), rng() % 100000);
            objs.push_back(o);
        }
        for (int access = 0; access < 1250; ++access) {
            HeapObject* o = objs[rng() % objs.size()];
            CHECK(fx.read(o) == fx.heap.get(o, prop("prop")));
        }
    }
}

TEST_CASE("patched code agrees with the machine oracle after every repatch") {
    Fixture fx;
    std::mt19937_64 rng(500);
    std::vector<HeapObject*> objs;
    for (int k = 0; k < 5; ++k) {
        HeapObject* o = fx.heap.new_object();
        for (int f = 0; f < k; ++f)
            fx.heap.set_property(o, prop(("g" + std::to_string(f)).c_str()), 0);
        fx.heap.set_property(o, prop("prop"), rng());
        objs.push_back(o);
    }

    for (int access = 0; access < 100; ++access) {
        HeapObject* o = objs[rng() % objs.size()];
        uint64_t want = fx.heap.get(o, prop("prop"));
        CHECK(fx.read(o) == want);
        if (fx.ic.memo.state != AnalysisMemo::State::Recognized) continue;

        // Drive the patched bytes through the interpreter with the state the
        // native code would see.
        MachineState st;
        uint64_t slots_at = 0x20000;
        st.set_reg(Reg::rdi, slots_at);
        st.store(fx.ic.ic_offset_cell_addr, fx.ic.cached_offset);
        for (uint32_t i = 0; i < o->hclass().slot_count(); ++i)
            st.store(slots_at + uint64_t(i) * 8, o->slot(i));
        run_sequence(fx.buf, 0x400000, 2, st);
        CHECK(st.reg(Reg::rax) == want);
    }
}
