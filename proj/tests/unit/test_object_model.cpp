#include <doctest.h>

#include <algorithm>
#include <random>

#include "icdbm/object_model.hpp"

using namespace icdbm;

namespace {

PropertyName prop(const char* s) { return PropertyName::intern(s); }

// Naive reference: property list scanned front to back.
struct ListObject {
    std::vector<std::pair<std::string, uint64_t>> props;
    const ListObject* proto = nullptr;

    std::optional<uint32_t> find_own(const std::string& name) const {
        for (uint32_t i = 0; i < props.size(); ++i)
            if (props[i].first == name) return i;
        return std::nullopt;
    }
    std::optional<std::pair<const ListObject*, uint32_t>> find_chain(
        const std::string& name) const {
        for (const ListObject* o = this; o; o = o->proto)
            if (auto idx = o->find_own(name)) return {{o, *idx}};
        return std::nullopt;
    }
    void set(const std::string& name, uint64_t v) {
        if (auto idx = find_own(name)) {
            props[*idx].second = v;
            return;
        }
        props.emplace_back(name, v);
    }
};

}  // namespace

TEST_CASE("interning gives one identity per text") {
    PropertyName a = prop("prop");
    PropertyName b = PropertyName::intern(std::string("pr") + "op");
    CHECK(a == b);
    CHECK(a.text() == "prop");
    CHECK_THROWS_AS(PropertyName::intern(""), std::invalid_argument);
}

TEST_CASE("a fresh object has the empty root shape") {
    Heap heap;
    HeapObject* obj = heap.new_object();
    CHECK(obj->hclass().slot_count() == 0);
    CHECK(obj->slots().empty());
    CHECK(obj->hclass().prototype() == nullptr);
}

TEST_CASE("property additions build dense slot layouts") {
    Heap heap;
    HeapObject* p = heap.new_object();
    HeapObject* obj = heap.new_object(p);
    heap.set_property(obj, prop("a"), 13);
    heap.set_property(obj, prop("prop"), 12);
    CHECK(obj->hclass().slot_of(prop("a")) == 0);
    CHECK(obj->hclass().slot_of(prop("prop")) == 1);
    CHECK(obj->hclass().prototype() == p);
    CHECK(obj->slot(1) == 12);

    // Third property lands at slot 2: byte offset 2 * word size.
    heap.set_property(obj, prop("z"), 1);
    CHECK(obj->hclass().slot_of(prop("z")) == 2);
    CHECK(*obj->hclass().slot_of(prop("z")) * kWordSize == 0x10);
}

TEST_CASE("identical addition sequences share one hidden class") {
    Heap heap;
    HeapObject* o1 = heap.new_object();
    HeapObject* o2 = heap.new_object();
    HeapObject* o3 = heap.new_object();
    for (HeapObject* o : {o1, o2})
        for (const char* n : {"a", "prop"}) heap.set_property(o, prop(n), 1);
    for (const char* n : {"b", "c", "prop"}) heap.set_property(o3, prop(n), 2);

    CHECK(&o1->hclass() == &o2->hclass());
    CHECK(&o1->hclass() != &o3->hclass());
    CHECK(o1->hclass().id() == o2->hclass().id());
    CHECK(o3->hclass().slot_of(prop("prop")) == 2);
}

TEST_CASE("overwrite stays in place, no new shape") {
    Heap heap;
    HeapObject* obj = heap.new_object();
    heap.set_property(obj, prop("a"), 1);
    const HiddenClass* before = &obj->hclass();
    heap.set_property(obj, prop("a"), 2);
    CHECK(&obj->hclass() == before);
    CHECK(obj->slot(0) == 2);
}

TEST_CASE("prototype chain lookup finds the first holder") {
    Heap heap;
    HeapObject* grandpa = heap.new_object();
    heap.set_property(grandpa, prop("shared"), 100);
    HeapObject* parent = heap.new_object(grandpa);
    heap.set_property(parent, prop("mid"), 50);
    HeapObject* child = heap.new_object(parent);
    heap.set_property(child, prop("own"), 25);

    auto own = heap.lookup_chain(child, prop("own"));
    REQUIRE(own.has_value());
    CHECK(own->holder == child);

    auto mid = heap.lookup_chain(child, prop("mid"));
    REQUIRE(mid.has_value());
    CHECK(mid->holder == parent);

    auto shared = heap.lookup_chain(child, prop("shared"));
    REQUIRE(shared.has_value());
    CHECK(shared->holder == grandpa);
    CHECK(shared->holder->slot(shared->slot) == 100);

    CHECK(!heap.lookup_chain(child, prop("missing")).has_value());
    CHECK(heap.get(child, prop("missing")) == kUndefinedWord);
}

TEST_CASE("property removal is rejected") {
    Heap heap;
    HeapObject* obj = heap.new_object();
    heap.set_property(obj, prop("a"), 1);
    CHECK_THROWS_AS(heap.remove_property(obj, prop("a")), UnsupportedOperation);
}

TEST_CASE("randomized shapes agree with the list-scan reference") {
    std::mt19937_64 rng(101);
    const std::vector<std::string> names = {"a", "b", "c", "d", "e", "f", "g", "h",
                                            "i", "j", "k", "l", "m", "n", "o", "p"};
    for (int round = 0; round < 200; ++round) {
        Heap heap;
        HeapObject* obj = heap.new_object();
        ListObject ref;
        size_t additions = rng() % 16;
        for (size_t i = 0; i < additions; ++i) {
            const std::string& name = names[rng() % names.size()];
            uint64_t value = rng();
            heap.set_property(obj, prop(name.c_str()), value);
            ref.set(name, value);
        }
        for (const auto& name : names) {
            auto got = heap.lookup_own(obj, prop(name.c_str()));
            auto want = ref.find_own(name);
            CHECK(got == want);
            if (got) CHECK(obj->slot(*got) == ref.props[*want].second);
        }
        // Slot density: reachable slots are exactly 0..n-1.
        std::vector<uint32_t> slots;
        for (const auto& name : obj->hclass().properties())
            slots.push_back(*obj->hclass().slot_of(name));
        std::sort(slots.begin(), slots.end());
        for (uint32_t i = 0; i < slots.size(); ++i) CHECK(slots[i] == i);
    }
}

TEST_CASE("random chains agree with the recursive reference") {
    std::mt19937_64 rng(202);
    const std::vector<std::string> names = {"u", "v", "w", "x", "y", "z"};
    for (int round = 0; round < 100; ++round) {
        Heap heap;
        std::vector<HeapObject*> chain;
        std::vector<ListObject> refs(8);
        size_t depth = 1 + rng() % 8;
        for (size_t d = 0; d < depth; ++d) {
            HeapObject* obj = heap.new_object(chain.empty() ? nullptr : chain.back());
            refs[d].proto = d == 0 ? nullptr : &refs[d - 1];
            size_t additions = rng() % 4;
            for (size_t i = 0; i < additions; ++i) {
                const std::string& name = names[rng() % names.size()];
                uint64_t value = rng() % 1000;
                heap.set_property(obj, prop(name.c_str()), value);
                refs[d].set(name, value);
            }
            chain.push_back(obj);
        }
        HeapObject* leaf = chain.back();
        const ListObject& ref_leaf = refs[depth - 1];
        for (const auto& name : names) {
            auto got = heap.lookup_chain(leaf, prop(name.c_str()));
            auto want = ref_leaf.find_chain(name);
            CHECK(got.has_value() == want.has_value());
            if (got && want)
                CHECK(got->holder->slot(got->slot) == want->first->props[want->second].second);
        }
    }
}

TEST_CASE("two heaps do not share shape identity but do share interned names") {
    Heap h1, h2;
    HeapObject* a = h1.new_object();
    HeapObject* b = h2.new_object();
    h1.set_property(a, prop("k"), 1);
    h2.set_property(b, prop("k"), 1);
    CHECK(&a->hclass() != &b->hclass());
    CHECK(a->hclass().properties()[0] == b->hclass().properties()[0]);
}
