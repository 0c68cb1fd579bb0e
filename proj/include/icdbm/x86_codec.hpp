#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Decoder and encoder for the x86_64 instruction subset the patch engine
// works with. The grammar is deliberately small: it covers every encoding the
// site emitter produces plus the shapes the window analyzer must classify.
// Anything else decodes to Unknown and terminates a scan.

namespace icdbm::x86 {

enum class Reg : uint8_t {
    rax = 0, rcx, rdx, rbx, rsp, rbp, rsi, rdi,
    r8, r9, r10, r11, r12, r13, r14, r15,
    none = 0xff,
};

const char* reg_name(Reg r);
std::optional<Reg> reg_from_name(std::string_view name);

enum class InsnKind : uint8_t {
    MovRegFromRipMem,             // mov disp32(%rip), %reg
    MovRegFromBaseIndexScaleDisp, // mov disp(%base,%index,scale), %reg
    MovRegFromBaseDisp,           // mov disp(%base), %reg
    MovRegImm32,                  // mov $imm32, %reg
    MovRegToMem,                  // mov %reg, mem  (base+disp or rip-relative)
    MovRegReg,                    // mov %reg, %reg
    CmpRegReg,                    // cmp %reg, %reg
    CmpRegMem,                    // cmp with a memory operand
    CondJump,                     // jcc rel8/rel32
    Call,                         // call rel32
    Jmp,                          // jmp rel8/rel32
    Nop,                          // 90 / 66 90 / 0f 1f family, any number of 66 prefixes
    Push,                         // push %r64
    Pop,                          // pop %r64
    Ret,                          // ret
    Unknown,
};

const char* kind_name(InsnKind k);

/// One decoded instruction. Field use depends on the kind:
///  - loads/stores: dest_reg is the register operand, base/index/scale/disp
///    describe the memory operand, rip_target is the absolute address for
///    rip-relative forms;
///  - MovRegImm32: imm holds the extended immediate value;
///  - reg-reg forms: dest_reg is the written (or left) register, base_reg the
///    other one;
///  - branches: rip_target is the destination, cc the condition nibble.
struct DecodedInsn {
    InsnKind kind = InsnKind::Unknown;
    Reg dest_reg = Reg::none;
    Reg base_reg = Reg::none;
    Reg index_reg = Reg::none;
    uint8_t scale = 1;
    int32_t disp = 0;
    int64_t imm = 0;
    uint64_t rip_target = 0;
    uint8_t cc = 0;
    uint8_t length = 0;
    uint64_t addr = 0;
    std::array<uint8_t, 15> raw{};

    bool reads_memory() const;
    bool writes_memory() const;
    bool writes_register() const;
    bool is_mov() const;
    bool is_branch() const;
    bool is_rip_relative_load() const;
    std::span<const uint8_t> bytes() const { return {raw.data(), length}; }
    std::string to_string() const;
};

/// A run of code bytes with a fixed base address. All decode and patch
/// addresses are absolute and must fall inside [base, base+size).
/// Owns its storage unless created through view().
class CodeBuffer {
public:
    CodeBuffer(uint64_t base_addr, size_t length)
        : base_(base_addr), storage_(length, 0), data_(storage_.data()), size_(length) {}
    CodeBuffer(uint64_t base_addr, std::vector<uint8_t> bytes)
        : base_(base_addr), storage_(std::move(bytes)), data_(storage_.data()),
          size_(storage_.size()) {}

    static CodeBuffer view(uint64_t base_addr, uint8_t* data, size_t length) {
        return CodeBuffer(base_addr, data, length);
    }

    uint64_t base() const { return base_; }
    size_t size() const { return size_; }
    uint64_t end() const { return base_ + size_; }
    bool contains(uint64_t addr, size_t len = 1) const {
        return addr >= base_ && len <= size_ && addr - base_ <= size_ - len;
    }

    const uint8_t* data() const { return data_; }
    uint8_t* data() { return data_; }

    uint8_t byte_at(uint64_t addr) const;
    void write_bytes(uint64_t addr, std::span<const uint8_t> bytes);
    std::vector<uint8_t> copy_bytes() const { return {data_, data_ + size_}; }

private:
    CodeBuffer(uint64_t base_addr, uint8_t* data, size_t length)
        : base_(base_addr), data_(data), size_(length) {}

    uint64_t base_;
    std::vector<uint8_t> storage_;
    uint8_t* data_;
    size_t size_;
};

struct BoundsError : std::out_of_range {
    explicit BoundsError(const std::string& what) : std::out_of_range(what) {}
};

/// Decodes the instruction at addr. Truncated or unrecognized encodings yield
/// Unknown with length 1; the decoder never reads past the buffer end.
DecodedInsn decode_one(const CodeBuffer& buf, uint64_t addr);

/// Sequential decode from addr. Stops after max_insns, at the buffer end, or
/// right after a control transfer (Call/Jmp/CondJump/Ret) or Unknown, which
/// are included as the final element.
std::vector<DecodedInsn> decode_window(const CodeBuffer& buf, uint64_t addr, size_t max_insns);

// Encoders. Each operation has one canonical encoding so that patchable
// fields always sit in the trailing four bytes.

/// REX.W c7 /0 imm32 (7 bytes, immediate sign-extended to 64 bits).
std::vector<uint8_t> encode_mov_reg_imm32(Reg dest, int32_t imm);
/// REX.W 8b with a disp32 ModRM form (7-8 bytes, disp in the trailing 4).
std::vector<uint8_t> encode_mov_reg_base_disp(Reg dest, Reg base, int32_t disp);
/// Canonical multi-byte NOP of exactly len bytes, 1 <= len <= 15.
std::vector<uint8_t> encode_nop(size_t len);

std::vector<uint8_t> encode_mov_reg_rip(Reg dest, int32_t disp);
std::vector<uint8_t> encode_mov_rip_reg(Reg src, int32_t disp);
std::vector<uint8_t> encode_mov_mem_reg(Reg src, Reg base, int32_t disp);
std::vector<uint8_t> encode_mov_reg_base_index_scale(Reg dest, Reg base, Reg index,
                                                     uint8_t scale, int32_t disp);
std::vector<uint8_t> encode_mov_reg_reg(Reg dest, Reg src);
std::vector<uint8_t> encode_cmp_reg_reg(Reg lhs, Reg rhs);
std::vector<uint8_t> encode_jcc_rel32(uint8_t cc, int32_t rel);
std::vector<uint8_t> encode_jmp_rel32(int32_t rel);
std::vector<uint8_t> encode_push(Reg r);
std::vector<uint8_t> encode_pop(Reg r);
std::vector<uint8_t> encode_ret();

inline constexpr uint8_t kCondEqual = 0x4;
inline constexpr uint8_t kCondNotEqual = 0x5;

}  // namespace icdbm::x86
