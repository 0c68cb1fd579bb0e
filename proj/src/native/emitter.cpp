#include "icdbm/native/emitter.hpp"

#include <cstring>

#include "icdbm/object_model.hpp"

namespace icdbm::native {

using x86::Reg;

const char* variant_name(SiteVariant v) {
    switch (v) {
        case SiteVariant::Canonical: return "canonical";
        case SiteVariant::SwappedDest: return "swapped-dest";
        case SiteVariant::NonRipRelative: return "non-rip-relative";
        case SiteVariant::ExtraScheduled: return "extra-scheduled";
    }
    return "?";
}

namespace {

class Assembler {
public:
    Assembler(uint8_t* base, size_t pos, size_t limit)
        : base_(base), pos_(pos), limit_(limit) {}

    uint64_t here() const { return uint64_t(uintptr_t(base_ + pos_)); }
    size_t pos() const { return pos_; }

    void put(const std::vector<uint8_t>& bytes) {
        if (pos_ + bytes.size() > limit_)
            throw RegionError("code region exhausted");
        std::memcpy(base_ + pos_, bytes.data(), bytes.size());
        pos_ += bytes.size();
    }

    /// rip-relative form targeting an absolute address; the displacement is
    /// relative to the end of the instruction being emitted.
    void put_rip(std::vector<uint8_t> (*enc)(Reg, int32_t), Reg reg, uint64_t target) {
        // All rip-relative encodings used here are 7 bytes long.
        int64_t disp = int64_t(target) - int64_t(here() + 7);
        put(enc(reg, int32_t(disp)));
    }

    /// Emits jne with a placeholder and returns the fixup position.
    size_t put_jne_placeholder() {
        size_t at = pos_;
        put(x86::encode_jcc_rel32(x86::kCondNotEqual, 0));
        return at;
    }

    void fixup_jcc(size_t at, uint64_t target) {
        int32_t rel = int32_t(int64_t(target) - int64_t(uintptr_t(base_ + at + 6)));
        for (int i = 0; i < 4; ++i) base_[at + 2 + i] = uint8_t(uint32_t(rel) >> (8 * i));
    }

private:
    uint8_t* base_;
    size_t pos_;
    size_t limit_;
};

}  // namespace

EmittedSite SiteEmitter::emit(SiteVariant variant) {
    if (region_.sealed())
        throw RegionError("cannot emit into a sealed region");
    if (data_pos_ + 32 > region_.data_size())
        throw RegionError("data region exhausted");

    EmittedSite site;
    site.site_id = next_site_id_++;
    site.variant = variant;

    uint64_t* cell = reinterpret_cast<uint64_t*>(region_.data_base() + data_pos_);
    data_pos_ += 32;
    site.cell_addr = uint64_t(uintptr_t(cell));
    site.class_cell = cell;
    site.offset_cell = cell + 1;
    site.result_cell = cell + 2;
    cell[0] = kUndefinedWord;  // no class id ever matches the sentinel
    cell[1] = 0;
    cell[2] = 0;
    cell[3] = site.cell_addr;  // self pointer for the register-addressed variant

    Assembler as(region_.code_base(), code_pos_, region_.code_size());
    site.entry_addr = as.here();

    as.put(x86::encode_push(Reg::rbx));
    as.put(x86::encode_push(Reg::rbp));

    if (variant == SiteVariant::NonRipRelative) {
        // rbp addresses the cell record instead of the stack frame; the
        // offset load below is then not rip-relative.
        as.put_rip(x86::encode_mov_reg_rip, Reg::rbp, site.cell_addr + 24);
        as.put(x86::encode_mov_reg_base_disp(Reg::rax, Reg::rsi, kClassLoadBias));
        as.put(x86::encode_mov_reg_base_disp(Reg::rbx, Reg::rbp, 0));
    } else {
        as.put(x86::encode_mov_reg_reg(Reg::rbp, Reg::rsi));
        as.put_rip(x86::encode_mov_reg_rip, Reg::rbx, site.cell_addr);  // cached class
        // mov 0x30(%rbp),%rax: the caller biases the class pointer by -0x30.
        as.put({0x48, 0x8b, 0x45, uint8_t(kClassLoadBias)});
    }

    as.put(x86::encode_cmp_reg_reg(Reg::rax, Reg::rbx));
    size_t jne_at = as.put_jne_placeholder();

    site.label_addr = as.here();

    if (variant == SiteVariant::ExtraScheduled)
        as.put(x86::encode_mov_reg_reg(Reg::rcx, Reg::rbx));

    if (variant == SiteVariant::NonRipRelative)
        as.put(x86::encode_mov_reg_base_disp(Reg::rax, Reg::rbp, 8));  // offset idx
    else
        as.put_rip(x86::encode_mov_reg_rip, Reg::rax, site.offset_cell_addr());

    Reg prop_dest = variant == SiteVariant::SwappedDest ? Reg::rbx : Reg::rax;
    as.put(x86::encode_mov_reg_base_index_scale(prop_dest, Reg::rdi, Reg::rax, kWordSize, 0));
    if (variant == SiteVariant::SwappedDest)
        as.put(x86::encode_mov_reg_reg(Reg::rax, Reg::rbx));

    {  // store the result to the scratch cell, then return it
        int64_t disp = int64_t(site.cell_addr + 16) - int64_t(as.here() + 7);
        as.put(x86::encode_mov_rip_reg(Reg::rax, int32_t(disp)));
    }
    as.put(x86::encode_pop(Reg::rbp));
    as.put(x86::encode_pop(Reg::rbx));
    as.put(x86::encode_ret());

    as.fixup_jcc(jne_at, as.here());  // slow path
    as.put(x86::encode_mov_reg_imm32(Reg::rax, -1));  // kUndefinedWord sentinel
    as.put(x86::encode_pop(Reg::rbp));
    as.put(x86::encode_pop(Reg::rbx));
    as.put(x86::encode_ret());

    code_pos_ = as.pos();
    return site;
}

}  // namespace icdbm::native
