#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

// Hidden-class object model. Objects built by the same property-addition
// sequence (against the same prototype) share one HiddenClass; a class maps
// property names to dense slot indices and is immutable once created, except
// for appending transition children.

namespace icdbm {

inline constexpr uint32_t kWordSize = 8;

/// The distinguished word returned when a property is absent everywhere.
inline constexpr uint64_t kUndefinedWord = ~uint64_t{0};

/// Interned property name: equal text implies equal identity.
class PropertyName {
public:
    static PropertyName intern(std::string_view text);

    const std::string& text() const { return *text_; }
    bool operator==(const PropertyName&) const = default;
    bool operator<(const PropertyName& o) const { return text_ < o.text_; }

private:
    explicit PropertyName(const std::string* text) : text_(text) {}
    const std::string* text_;
    friend struct PropertyNameHash;
};

struct PropertyNameHash {
    size_t operator()(const PropertyName& n) const {
        return std::hash<const std::string*>()(n.text_);
    }
};

class HeapObject;

class HiddenClass {
public:
    uint32_t id() const { return id_; }
    size_t slot_count() const { return properties_.size(); }
    std::optional<uint32_t> slot_of(PropertyName name) const;
    HeapObject* prototype() const { return prototype_; }
    /// Property names in slot order (slot i holds properties()[i]).
    const std::vector<PropertyName>& properties() const { return properties_; }
    const HiddenClass* transition(PropertyName name) const;

private:
    friend class Heap;
    HiddenClass(uint32_t id, HeapObject* prototype) : id_(id), prototype_(prototype) {}

    uint32_t id_;
    HeapObject* prototype_;
    std::vector<PropertyName> properties_;
    std::unordered_map<PropertyName, uint32_t, PropertyNameHash> slots_;
    std::unordered_map<PropertyName, HiddenClass*, PropertyNameHash> transitions_;
};

class HeapObject {
public:
    const HiddenClass& hclass() const { return *hclass_; }
    uint64_t slot(uint32_t index) const { return slots_.at(index); }
    const std::vector<uint64_t>& slots() const { return slots_; }

private:
    friend class Heap;
    explicit HeapObject(HiddenClass* hclass) : hclass_(hclass) {}
    HiddenClass* hclass_;
    std::vector<uint64_t> slots_;
};

struct UnsupportedOperation : std::logic_error {
    using std::logic_error::logic_error;
};

/// Owns all objects and hidden classes; pointers it hands out stay valid for
/// the heap's lifetime. Single-mutator: no concurrent writers to an object or
/// to a class's transition table.
class Heap {
public:
    struct ChainHit {
        const HeapObject* holder;
        uint32_t slot;
    };

    HeapObject* new_object(HeapObject* prototype = nullptr);

    /// Overwrites in place if the object already owns name; otherwise migrates
    /// the object to the transition child class and appends one slot.
    void set_property(HeapObject* obj, PropertyName name, uint64_t value);

    /// Shape shrinking is not modeled; always throws.
    void remove_property(HeapObject* obj, PropertyName name);

    std::optional<uint32_t> lookup_own(const HeapObject* obj, PropertyName name) const;
    std::optional<ChainHit> lookup_chain(const HeapObject* obj, PropertyName name) const;

    /// lookup_chain followed by the slot load; kUndefinedWord when absent.
    uint64_t get(const HeapObject* obj, PropertyName name) const;

    size_t class_count() const { return classes_.size(); }
    size_t object_count() const { return objects_.size(); }

private:
    HiddenClass* root_class_for(HeapObject* prototype);
    HiddenClass* transition_child(HiddenClass* parent, PropertyName name);

    std::deque<HiddenClass> classes_;
    std::deque<HeapObject> objects_;
    std::map<HeapObject*, HiddenClass*> roots_;
    uint32_t next_class_id_ = 0;
};

}  // namespace icdbm
