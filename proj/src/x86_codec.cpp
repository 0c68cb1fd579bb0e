#include "icdbm/x86_codec.hpp"

#include <cassert>
#include <cstring>
#include <sstream>

namespace icdbm::x86 {

namespace {

constexpr const char* kRegNames[16] = {
    "rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi",
    "r8",  "r9",  "r10", "r11", "r12", "r13", "r14", "r15",
};

struct Cursor {
    const CodeBuffer& buf;
    uint64_t addr;
    uint64_t pos;  // next unread offset from addr

    bool has(size_t n) const { return buf.contains(addr + pos, n); }
    uint8_t peek() const { return buf.byte_at(addr + pos); }
    uint8_t take() { return buf.byte_at(addr + pos++); }
    bool take32(int32_t& out) {
        if (!has(4)) return false;
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(take()) << (8 * i);
        out = int32_t(v);
        return true;
    }
};

struct Rex {
    bool present = false;
    bool w = false, r = false, x = false, b = false;
};

struct MemOperand {
    bool valid = false;
    bool reg_direct = false;     // mod == 11
    bool rip_relative = false;
    Reg rm_reg = Reg::none;      // reg operand when reg_direct
    Reg base = Reg::none;
    Reg index = Reg::none;
    uint8_t scale = 1;
    int32_t disp = 0;
    uint8_t reg_field = 0;       // extended modrm.reg
};

// Parses ModRM (+ SIB + displacement) for a 64-bit operation. Returns an
// invalid operand on truncation or on the no-base absolute forms, which the
// grammar does not model.
MemOperand parse_modrm(Cursor& cur, const Rex& rex) {
    MemOperand op;
    if (!cur.has(1)) return op;
    uint8_t modrm = cur.take();
    uint8_t mod = modrm >> 6;
    uint8_t reg = (modrm >> 3) & 7;
    uint8_t rm = modrm & 7;
    op.reg_field = reg | (rex.r ? 8 : 0);

    if (mod == 3) {
        op.valid = true;
        op.reg_direct = true;
        op.rm_reg = Reg(rm | (rex.b ? 8 : 0));
        return op;
    }

    if (rm == 4) {  // SIB byte
        if (!cur.has(1)) return op;
        uint8_t sib = cur.take();
        uint8_t ss = sib >> 6;
        uint8_t idx = (sib >> 3) & 7;
        uint8_t base = sib & 7;
        uint8_t xidx = idx | (rex.x ? 8 : 0);
        if (xidx == 4) {
            op.index = Reg::none;  // no index (rsp cannot index)
        } else {
            op.index = Reg(xidx);
            op.scale = uint8_t(1 << ss);
        }
        if (mod == 0 && base == 5) return op;  // absolute disp32 base: unmodeled
        op.base = Reg(base | (rex.b ? 8 : 0));
    } else if (mod == 0 && rm == 5) {
        op.rip_relative = true;
    } else {
        op.base = Reg(rm | (rex.b ? 8 : 0));
    }

    if (mod == 1) {
        if (!cur.has(1)) return op;
        op.disp = int8_t(cur.take());
    } else if (mod == 2 || op.rip_relative) {
        if (!cur.take32(op.disp)) return op;
    }
    op.valid = true;
    return op;
}

DecodedInsn unknown_at(const CodeBuffer& buf, uint64_t addr) {
    DecodedInsn insn;
    insn.kind = InsnKind::Unknown;
    insn.addr = addr;
    insn.length = 1;
    insn.raw[0] = buf.byte_at(addr);
    return insn;
}

void fill_raw(DecodedInsn& insn, const CodeBuffer& buf) {
    for (size_t i = 0; i < insn.length; ++i)
        insn.raw[i] = buf.byte_at(insn.addr + i);
}

void apply_mem(DecodedInsn& insn, const MemOperand& op) {
    insn.base_reg = op.base;
    insn.index_reg = op.index;
    insn.scale = op.scale;
    insn.disp = op.disp;
}

std::vector<uint8_t> with_imm32(std::vector<uint8_t> bytes, int32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(uint8_t(uint32_t(v) >> (8 * i)));
    return bytes;
}

uint8_t rex_for(bool w, bool r, bool x, bool b) {
    return uint8_t(0x40 | (w << 3) | (r << 2) | (x << 1) | int(b));
}

uint8_t low3(Reg r) { return uint8_t(r) & 7; }
bool ext(Reg r) { return uint8_t(r) >= 8 && r != Reg::none; }

}  // namespace

const char* reg_name(Reg r) {
    return r == Reg::none ? "-" : kRegNames[uint8_t(r)];
}

std::optional<Reg> reg_from_name(std::string_view name) {
    for (int i = 0; i < 16; ++i)
        if (name == kRegNames[i]) return Reg(i);
    return std::nullopt;
}

const char* kind_name(InsnKind k) {
    switch (k) {
        case InsnKind::MovRegFromRipMem: return "MovRegFromRipMem";
        case InsnKind::MovRegFromBaseIndexScaleDisp: return "MovRegFromBaseIndexScaleDisp";
        case InsnKind::MovRegFromBaseDisp: return "MovRegFromBaseDisp";
        case InsnKind::MovRegImm32: return "MovRegImm32";
        case InsnKind::MovRegToMem: return "MovRegToMem";
        case InsnKind::MovRegReg: return "MovRegReg";
        case InsnKind::CmpRegReg: return "CmpRegReg";
        case InsnKind::CmpRegMem: return "CmpRegMem";
        case InsnKind::CondJump: return "CondJump";
        case InsnKind::Call: return "Call";
        case InsnKind::Jmp: return "Jmp";
        case InsnKind::Nop: return "Nop";
        case InsnKind::Push: return "Push";
        case InsnKind::Pop: return "Pop";
        case InsnKind::Ret: return "Ret";
        case InsnKind::Unknown: return "Unknown";
    }
    return "?";
}

bool DecodedInsn::reads_memory() const {
    switch (kind) {
        case InsnKind::MovRegFromRipMem:
        case InsnKind::MovRegFromBaseIndexScaleDisp:
        case InsnKind::MovRegFromBaseDisp:
        case InsnKind::CmpRegMem:
            return true;
        default:
            return false;
    }
}

bool DecodedInsn::writes_memory() const { return kind == InsnKind::MovRegToMem; }

bool DecodedInsn::writes_register() const {
    switch (kind) {
        case InsnKind::MovRegFromRipMem:
        case InsnKind::MovRegFromBaseIndexScaleDisp:
        case InsnKind::MovRegFromBaseDisp:
        case InsnKind::MovRegImm32:
        case InsnKind::MovRegReg:
        case InsnKind::Pop:
            return true;
        default:
            return false;
    }
}

bool DecodedInsn::is_mov() const {
    switch (kind) {
        case InsnKind::MovRegFromRipMem:
        case InsnKind::MovRegFromBaseIndexScaleDisp:
        case InsnKind::MovRegFromBaseDisp:
        case InsnKind::MovRegImm32:
        case InsnKind::MovRegToMem:
        case InsnKind::MovRegReg:
            return true;
        default:
            return false;
    }
}

bool DecodedInsn::is_branch() const {
    switch (kind) {
        case InsnKind::CondJump:
        case InsnKind::Call:
        case InsnKind::Jmp:
        case InsnKind::Ret:
            return true;
        default:
            return false;
    }
}

bool DecodedInsn::is_rip_relative_load() const {
    return kind == InsnKind::MovRegFromRipMem;
}

std::string DecodedInsn::to_string() const {
    std::ostringstream os;
    os << kind_name(kind);
    switch (kind) {
        case InsnKind::MovRegFromRipMem:
            os << " " << reg_name(dest_reg) << " <- [rip+0x" << std::hex << disp
               << "] @0x" << rip_target;
            break;
        case InsnKind::MovRegFromBaseIndexScaleDisp:
            os << " " << reg_name(dest_reg) << " <- [" << reg_name(base_reg) << "+"
               << reg_name(index_reg) << "*" << int(scale) << std::hex << "+0x" << disp << "]";
            break;
        case InsnKind::MovRegFromBaseDisp:
            os << " " << reg_name(dest_reg) << " <- [" << reg_name(base_reg) << std::hex
               << "+0x" << disp << "]";
            break;
        case InsnKind::MovRegImm32:
            os << " " << reg_name(dest_reg) << " <- $" << imm;
            break;
        case InsnKind::MovRegReg:
            os << " " << reg_name(dest_reg) << " <- " << reg_name(base_reg);
            break;
        default:
            break;
    }
    return os.str();
}

uint8_t CodeBuffer::byte_at(uint64_t addr) const {
    if (!contains(addr))
        throw BoundsError("address out of buffer range");
    return data_[addr - base_];
}

void CodeBuffer::write_bytes(uint64_t addr, std::span<const uint8_t> bytes) {
    if (!contains(addr, bytes.size()))
        throw BoundsError("write span out of buffer range");
    std::memcpy(data_ + (addr - base_), bytes.data(), bytes.size());
}

DecodedInsn decode_one(const CodeBuffer& buf, uint64_t addr) {
    if (!buf.contains(addr))
        throw BoundsError("decode address out of buffer range");

    DecodedInsn insn;
    insn.addr = addr;
    Cursor cur{buf, addr, 0};

    // 66 operand-size prefixes appear only on long NOP forms.
    size_t prefix66 = 0;
    while (cur.has(1) && cur.peek() == 0x66) {
        ++prefix66;
        cur.take();
        if (prefix66 > 14) return unknown_at(buf, addr);
    }

    Rex rex;
    if (cur.has(1) && (cur.peek() & 0xf0) == 0x40) {
        uint8_t b = cur.take();
        rex.present = true;
        rex.w = b & 8;
        rex.r = b & 4;
        rex.x = b & 2;
        rex.b = b & 1;
    }
    if (!cur.has(1)) return unknown_at(buf, addr);

    auto finish = [&](InsnKind kind) -> DecodedInsn {
        insn.kind = kind;
        insn.length = uint8_t(cur.pos);
        fill_raw(insn, buf);
        return insn;
    };
    auto rel_branch = [&](InsnKind kind, bool rel8) -> DecodedInsn {
        int32_t rel = 0;
        if (rel8) {
            if (!cur.has(1)) return unknown_at(buf, addr);
            rel = int8_t(cur.take());
        } else if (!cur.take32(rel)) {
            return unknown_at(buf, addr);
        }
        insn.rip_target = addr + cur.pos + int64_t(rel);
        insn.disp = rel;
        return finish(kind);
    };

    uint8_t op = cur.take();

    if (op == 0x90 && !rex.present) {
        if (prefix66 > 1) return unknown_at(buf, addr);
        return finish(InsnKind::Nop);  // 90 or 66 90
    }
    if (prefix66 > 0 && op != 0x0f) return unknown_at(buf, addr);

    switch (op) {
        case 0x0f: {
            if (!cur.has(1)) return unknown_at(buf, addr);
            uint8_t op2 = cur.take();
            if (op2 == 0x1f) {  // multi-byte NOP, /0 only
                MemOperand mem = parse_modrm(cur, rex);
                if (!mem.valid || mem.reg_direct || mem.reg_field != 0)
                    return unknown_at(buf, addr);
                return finish(InsnKind::Nop);
            }
            if ((op2 & 0xf0) == 0x80) {  // jcc rel32
                if (prefix66 || rex.present) return unknown_at(buf, addr);
                insn.cc = op2 & 0x0f;
                return rel_branch(InsnKind::CondJump, false);
            }
            return unknown_at(buf, addr);
        }

        case 0x8b: {  // mov r64 <- r/m64
            if (!rex.w) return unknown_at(buf, addr);
            MemOperand mem = parse_modrm(cur, rex);
            if (!mem.valid) return unknown_at(buf, addr);
            insn.dest_reg = Reg(mem.reg_field);
            if (mem.reg_direct) {
                insn.base_reg = mem.rm_reg;
                // 8b mod=11 is mov reg,reg with operands swapped vs 89; the
                // emitter never produces it, keep the canonical form only.
                return unknown_at(buf, addr);
            }
            apply_mem(insn, mem);
            if (mem.rip_relative) {
                insn.rip_target = addr + cur.pos + int64_t(mem.disp);
                return finish(InsnKind::MovRegFromRipMem);
            }
            if (mem.index != Reg::none)
                return finish(InsnKind::MovRegFromBaseIndexScaleDisp);
            return finish(InsnKind::MovRegFromBaseDisp);
        }

        case 0x89: {  // mov r/m64 <- r64
            if (!rex.w) return unknown_at(buf, addr);
            MemOperand mem = parse_modrm(cur, rex);
            if (!mem.valid) return unknown_at(buf, addr);
            if (mem.reg_direct) {
                insn.dest_reg = mem.rm_reg;
                insn.base_reg = Reg(mem.reg_field);
                return finish(InsnKind::MovRegReg);
            }
            insn.dest_reg = Reg(mem.reg_field);  // stored register
            apply_mem(insn, mem);
            if (mem.rip_relative)
                insn.rip_target = addr + cur.pos + int64_t(mem.disp);
            return finish(InsnKind::MovRegToMem);
        }

        case 0x39:    // cmp r/m64, r64
        case 0x3b: {  // cmp r64, r/m64
            if (!rex.w) return unknown_at(buf, addr);
            MemOperand mem = parse_modrm(cur, rex);
            if (!mem.valid) return unknown_at(buf, addr);
            if (mem.reg_direct) {
                insn.dest_reg = op == 0x39 ? mem.rm_reg : Reg(mem.reg_field);
                insn.base_reg = op == 0x39 ? Reg(mem.reg_field) : mem.rm_reg;
                return finish(InsnKind::CmpRegReg);
            }
            insn.dest_reg = Reg(mem.reg_field);
            apply_mem(insn, mem);
            if (mem.rip_relative)
                insn.rip_target = addr + cur.pos + int64_t(mem.disp);
            return finish(InsnKind::CmpRegMem);
        }

        case 0xc7: {  // mov r/m64, imm32 (sign-extended); register-direct /0 only
            if (!rex.w) return unknown_at(buf, addr);
            MemOperand mem = parse_modrm(cur, rex);
            if (!mem.valid || !mem.reg_direct || (mem.reg_field & 7) != 0)
                return unknown_at(buf, addr);
            int32_t v = 0;
            if (!cur.take32(v)) return unknown_at(buf, addr);
            insn.dest_reg = mem.rm_reg;
            insn.imm = int64_t(v);
            insn.disp = v;
            return finish(InsnKind::MovRegImm32);
        }

        case 0xe8:
            if (rex.present) return unknown_at(buf, addr);
            return rel_branch(InsnKind::Call, false);
        case 0xe9:
            if (rex.present) return unknown_at(buf, addr);
            return rel_branch(InsnKind::Jmp, false);
        case 0xeb:
            if (rex.present) return unknown_at(buf, addr);
            return rel_branch(InsnKind::Jmp, true);
        case 0xc3:
            if (rex.present) return unknown_at(buf, addr);
            return finish(InsnKind::Ret);

        default:
            if ((op & 0xf0) == 0x70) {  // jcc rel8
                if (rex.present) return unknown_at(buf, addr);
                insn.cc = op & 0x0f;
                return rel_branch(InsnKind::CondJump, true);
            }
            if ((op & 0xf8) == 0x50) {  // push r64
                insn.dest_reg = Reg((op & 7) | (rex.b ? 8 : 0));
                return finish(InsnKind::Push);
            }
            if ((op & 0xf8) == 0x58) {  // pop r64
                insn.dest_reg = Reg((op & 7) | (rex.b ? 8 : 0));
                return finish(InsnKind::Pop);
            }
            if ((op & 0xf8) == 0xb8) {  // mov r32, imm32 (zero-extends)
                if (rex.w) return unknown_at(buf, addr);  // imm64 form unmodeled
                int32_t v = 0;
                if (!cur.take32(v)) return unknown_at(buf, addr);
                insn.dest_reg = Reg((op & 7) | (rex.b ? 8 : 0));
                insn.imm = int64_t(uint32_t(v));
                insn.disp = v;
                return finish(InsnKind::MovRegImm32);
            }
            return unknown_at(buf, addr);
    }
}

std::vector<DecodedInsn> decode_window(const CodeBuffer& buf, uint64_t addr, size_t max_insns) {
    std::vector<DecodedInsn> out;
    uint64_t p = addr;
    while (out.size() < max_insns && buf.contains(p)) {
        DecodedInsn insn = decode_one(buf, p);
        out.push_back(insn);
        if (insn.kind == InsnKind::Unknown || insn.is_branch())
            break;
        p += insn.length;
    }
    return out;
}

std::vector<uint8_t> encode_mov_reg_imm32(Reg dest, int32_t imm) {
    std::vector<uint8_t> b{rex_for(true, false, false, ext(dest)), 0xc7,
                           uint8_t(0xc0 | low3(dest))};
    return with_imm32(std::move(b), imm);
}

std::vector<uint8_t> encode_mov_reg_base_disp(Reg dest, Reg base, int32_t disp) {
    // disp32 ModRM form regardless of magnitude: the displacement must occupy
    // the trailing four bytes so it can be repatched in place.
    std::vector<uint8_t> b{rex_for(true, ext(dest), false, ext(base)), 0x8b};
    if (low3(base) == 4) {  // rsp/r12 need a SIB byte
        b.push_back(uint8_t(0x80 | (low3(dest) << 3) | 4));
        b.push_back(0x24);
    } else {
        b.push_back(uint8_t(0x80 | (low3(dest) << 3) | low3(base)));
    }
    return with_imm32(std::move(b), disp);
}

std::vector<uint8_t> encode_nop(size_t len) {
    if (len < 1 || len > 15)
        throw std::invalid_argument("nop length must be in 1..15");
    switch (len) {
        case 1: return {0x90};
        case 2: return {0x66, 0x90};
        case 3: return {0x0f, 0x1f, 0x00};
        case 4: return {0x0f, 0x1f, 0x40, 0x00};
        case 5: return {0x0f, 0x1f, 0x44, 0x00, 0x00};
        case 6: return {0x66, 0x0f, 0x1f, 0x44, 0x00, 0x00};
        case 7: return {0x0f, 0x1f, 0x80, 0x00, 0x00, 0x00, 0x00};
        case 8: return {0x0f, 0x1f, 0x84, 0x00, 0x00, 0x00, 0x00, 0x00};
        default: {
            std::vector<uint8_t> b(len - 9, 0x66);
            const uint8_t tail[] = {0x66, 0x0f, 0x1f, 0x84, 0x00, 0x00, 0x00, 0x00, 0x00};
            b.insert(b.end(), std::begin(tail), std::end(tail));
            return b;
        }
    }
}

std::vector<uint8_t> encode_mov_reg_rip(Reg dest, int32_t disp) {
    std::vector<uint8_t> b{rex_for(true, ext(dest), false, false), 0x8b,
                           uint8_t(0x05 | (low3(dest) << 3))};
    return with_imm32(std::move(b), disp);
}

std::vector<uint8_t> encode_mov_rip_reg(Reg src, int32_t disp) {
    std::vector<uint8_t> b{rex_for(true, ext(src), false, false), 0x89,
                           uint8_t(0x05 | (low3(src) << 3))};
    return with_imm32(std::move(b), disp);
}

std::vector<uint8_t> encode_mov_mem_reg(Reg src, Reg base, int32_t disp) {
    std::vector<uint8_t> b{rex_for(true, ext(src), false, ext(base)), 0x89};
    if (low3(base) == 4) {
        b.push_back(uint8_t(0x80 | (low3(src) << 3) | 4));
        b.push_back(0x24);
    } else {
        b.push_back(uint8_t(0x80 | (low3(src) << 3) | low3(base)));
    }
    return with_imm32(std::move(b), disp);
}

std::vector<uint8_t> encode_mov_reg_base_index_scale(Reg dest, Reg base, Reg index,
                                                     uint8_t scale, int32_t disp) {
    if (index == Reg::rsp || index == Reg::none)
        throw std::invalid_argument("index register required");
    uint8_t ss;
    switch (scale) {
        case 1: ss = 0; break;
        case 2: ss = 1; break;
        case 4: ss = 2; break;
        case 8: ss = 3; break;
        default: throw std::invalid_argument("scale must be 1, 2, 4 or 8");
    }
    std::vector<uint8_t> b{rex_for(true, ext(dest), ext(index), ext(base)), 0x8b};
    uint8_t sib = uint8_t((ss << 6) | (low3(index) << 3) | low3(base));
    bool base_is_bp = low3(base) == 5;
    if (disp == 0 && !base_is_bp) {
        b.push_back(uint8_t(0x04 | (low3(dest) << 3)));
        b.push_back(sib);
    } else if (disp >= -128 && disp <= 127) {
        b.push_back(uint8_t(0x44 | (low3(dest) << 3)));
        b.push_back(sib);
        b.push_back(uint8_t(int8_t(disp)));
    } else {
        b.push_back(uint8_t(0x84 | (low3(dest) << 3)));
        b.push_back(sib);
        b = with_imm32(std::move(b), disp);
    }
    return b;
}

std::vector<uint8_t> encode_mov_reg_reg(Reg dest, Reg src) {
    return {rex_for(true, ext(src), false, ext(dest)), 0x89,
            uint8_t(0xc0 | (low3(src) << 3) | low3(dest))};
}

std::vector<uint8_t> encode_cmp_reg_reg(Reg lhs, Reg rhs) {
    return {rex_for(true, ext(rhs), false, ext(lhs)), 0x39,
            uint8_t(0xc0 | (low3(rhs) << 3) | low3(lhs))};
}

std::vector<uint8_t> encode_jcc_rel32(uint8_t cc, int32_t rel) {
    std::vector<uint8_t> b{0x0f, uint8_t(0x80 | (cc & 0x0f))};
    return with_imm32(std::move(b), rel);
}

std::vector<uint8_t> encode_jmp_rel32(int32_t rel) {
    return with_imm32({0xe9}, rel);
}

std::vector<uint8_t> encode_push(Reg r) {
    if (ext(r)) return {0x41, uint8_t(0x50 | low3(r))};
    return {uint8_t(0x50 | low3(r))};
}

std::vector<uint8_t> encode_pop(Reg r) {
    if (ext(r)) return {0x41, uint8_t(0x58 | low3(r))};
    return {uint8_t(0x58 | low3(r))};
}

std::vector<uint8_t> encode_ret() { return {0xc3}; }

}  // namespace icdbm::x86
