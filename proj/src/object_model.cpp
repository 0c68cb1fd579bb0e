#include "icdbm/object_model.hpp"

#include <mutex>
#include <unordered_set>

namespace icdbm {

namespace {

// Process-wide name interner. Entries are never removed, so the string
// addresses double as identities.
struct Interner {
    std::mutex mu;
    std::unordered_set<std::string> names;
};

Interner& interner() {
    static Interner instance;
    return instance;
}

}  // namespace

PropertyName PropertyName::intern(std::string_view text) {
    if (text.empty())
        throw std::invalid_argument("property names must be non-empty");
    Interner& in = interner();
    std::lock_guard<std::mutex> lock(in.mu);
    auto [it, inserted] = in.names.emplace(text);
    (void)inserted;
    return PropertyName(&*it);
}

std::optional<uint32_t> HiddenClass::slot_of(PropertyName name) const {
    auto it = slots_.find(name);
    if (it == slots_.end()) return std::nullopt;
    return it->second;
}

const HiddenClass* HiddenClass::transition(PropertyName name) const {
    auto it = transitions_.find(name);
    return it == transitions_.end() ? nullptr : it->second;
}

HeapObject* Heap::new_object(HeapObject* prototype) {
    HiddenClass* root = root_class_for(prototype);
    objects_.push_back(HeapObject(root));
    return &objects_.back();
}

HiddenClass* Heap::root_class_for(HeapObject* prototype) {
    auto it = roots_.find(prototype);
    if (it != roots_.end()) return it->second;
    classes_.push_back(HiddenClass(next_class_id_++, prototype));
    HiddenClass* root = &classes_.back();
    roots_.emplace(prototype, root);
    return root;
}

HiddenClass* Heap::transition_child(HiddenClass* parent, PropertyName name) {
    auto it = parent->transitions_.find(name);
    if (it != parent->transitions_.end()) return it->second;

    classes_.push_back(HiddenClass(next_class_id_++, parent->prototype_));
    HiddenClass* child = &classes_.back();
    child->properties_ = parent->properties_;
    child->properties_.push_back(name);
    child->slots_ = parent->slots_;
    child->slots_.emplace(name, uint32_t(parent->properties_.size()));
    parent->transitions_.emplace(name, child);
    return child;
}

void Heap::set_property(HeapObject* obj, PropertyName name, uint64_t value) {
    if (auto idx = obj->hclass_->slot_of(name)) {
        obj->slots_[*idx] = value;
        return;
    }
    obj->hclass_ = transition_child(obj->hclass_, name);
    obj->slots_.push_back(value);
}

void Heap::remove_property(HeapObject*, PropertyName name) {
    throw UnsupportedOperation("property removal is not supported: '" + name.text() + "'");
}

std::optional<uint32_t> Heap::lookup_own(const HeapObject* obj, PropertyName name) const {
    return obj->hclass_->slot_of(name);
}

std::optional<Heap::ChainHit> Heap::lookup_chain(const HeapObject* obj,
                                                 PropertyName name) const {
    // Chains are acyclic by construction (prototypes predate their users);
    // the step bound turns a violation into an error instead of a hang.
    size_t steps = 0;
    for (const HeapObject* o = obj; o != nullptr; o = o->hclass_->prototype()) {
        if (++steps > objects_.size())
            throw std::logic_error("prototype chain cycle");
        if (auto idx = o->hclass_->slot_of(name))
            return ChainHit{o, *idx};
    }
    return std::nullopt;
}

uint64_t Heap::get(const HeapObject* obj, PropertyName name) const {
    auto hit = lookup_chain(obj, name);
    return hit ? hit->holder->slot(hit->slot) : kUndefinedWord;
}

}  // namespace icdbm
