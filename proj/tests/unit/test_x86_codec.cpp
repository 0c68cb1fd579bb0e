#include <doctest.h>

#include <fstream>
#include <random>

#include "icdbm/x86_codec.hpp"
#include "test_helpers.hpp"

using namespace icdbm;
using namespace icdbm::x86;
using icdbm::test::buffer_from_hex;
using icdbm::test::hex_bytes;
using icdbm::test::to_hex;

namespace {

DecodedInsn decode_hex(const std::string& hex, uint64_t base = 0x400000) {
    CodeBuffer buf = buffer_from_hex(base, hex);
    return decode_one(buf, base);
}

struct GoldenRow {
    std::vector<uint8_t> bytes;
    std::string kind, dest, base, index;
    int scale = 1;
    int64_t value = 0;  // disp, or imm for MovRegImm32
    int length = 0;
    std::string reference;
};

std::vector<GoldenRow> load_golden() {
    std::ifstream in(icdbm::test::source_path("tests/fixtures/encoder_golden.txt"));
    REQUIRE(in.good());
    std::vector<GoldenRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto bar1 = line.find('|');
        auto bar2 = line.find('|', bar1 + 1);
        REQUIRE(bar2 != std::string::npos);
        GoldenRow row;
        row.bytes = hex_bytes(line.substr(0, bar1));
        std::istringstream fields(line.substr(bar1 + 1, bar2 - bar1 - 1));
        std::string value;
        fields >> row.kind >> row.dest >> row.base >> row.index >> row.scale >> value >>
            row.length;
        bool neg = value.starts_with("-");
        row.value = int64_t(std::stoll(neg ? value.substr(1) : value, nullptr, 16));
        if (neg) row.value = -row.value;
        row.reference = line.substr(bar2 + 1);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

TEST_CASE("decode matches the disassembler-verified golden table") {
    for (const GoldenRow& row : load_golden()) {
        CAPTURE(row.reference);
        CodeBuffer buf(0x400000, row.bytes);
        DecodedInsn insn = decode_one(buf, 0x400000);
        CHECK(kind_name(insn.kind) == row.kind);
        CHECK(int(insn.length) == row.length);
        if (row.dest != "-") CHECK(reg_name(insn.dest_reg) == row.dest);
        if (row.base != "-") CHECK(reg_name(insn.base_reg) == row.base);
        if (row.index != "-") CHECK(reg_name(insn.index_reg) == row.index);
        if (insn.kind != InsnKind::Unknown && insn.kind != InsnKind::Nop) {
            CHECK(int(insn.scale) == row.scale);
            int64_t got = insn.kind == InsnKind::MovRegImm32 ? insn.imm : int64_t(insn.disp);
            CHECK(got == row.value);
        }
    }
}

TEST_CASE("rip-relative targets are absolute") {
    const uint64_t base = 0x400000;
    DecodedInsn insn = decode_hex("48 8b 05 1c 10 00 00", base);
    CHECK(insn.kind == InsnKind::MovRegFromRipMem);
    CHECK(insn.rip_target == base + 7 + 0x101c);

    DecodedInsn jne = decode_hex("0f 85 f6 ff ff ff", base);
    CHECK(jne.kind == InsnKind::CondJump);
    CHECK(jne.cc == kCondNotEqual);
    CHECK(jne.rip_target == base + 6 - 10);
}

TEST_CASE("decode_window walks the canonical hit path and stops at branches") {
    // offset load, property load, result store, then the function epilogue.
    CodeBuffer buf = buffer_from_hex(
        0x1000, "48 8b 05 1c 10 00 00 48 8b 04 c7 48 89 45 c8 5d 5b c3 90");
    auto window = decode_window(buf, 0x1000, 16);
    REQUIRE(window.size() == 6);
    CHECK(window[0].kind == InsnKind::MovRegFromRipMem);
    CHECK(window[1].kind == InsnKind::MovRegFromBaseIndexScaleDisp);
    CHECK(window[2].kind == InsnKind::MovRegToMem);
    CHECK(window[3].kind == InsnKind::Pop);
    CHECK(window[4].kind == InsnKind::Pop);
    CHECK(window[5].kind == InsnKind::Ret);  // scan stops at the control transfer

    auto jmp_first = decode_window(buffer_from_hex(0x1000, "e9 00 00 00 00 90"), 0x1000, 8);
    REQUIRE(jmp_first.size() == 1);
    CHECK(jmp_first[0].kind == InsnKind::Jmp);

    auto at_end = decode_window(buf, 0x1000 + buf.size(), 4);
    CHECK(at_end.empty());
}

TEST_CASE("decode_one is bounds checked") {
    CodeBuffer buf = buffer_from_hex(0x1000, "90 90");
    CHECK_THROWS_AS(decode_one(buf, 0x0fff), BoundsError);
    CHECK_THROWS_AS(decode_one(buf, 0x1002), BoundsError);
}

TEST_CASE("truncated encodings decode as Unknown without overreading") {
    // A rip-relative load cut short of its displacement.
    CodeBuffer buf = buffer_from_hex(0x1000, "48 8b 05 1c");
    DecodedInsn insn = decode_one(buf, 0x1000);
    CHECK(insn.kind == InsnKind::Unknown);
    CHECK(insn.length == 1);
}

TEST_CASE("random byte soup never panics nor overruns") {
    std::mt19937_64 rng(7);
    for (int round = 0; round < 2000; ++round) {
        std::vector<uint8_t> bytes(1 + rng() % 24);
        for (auto& b : bytes) b = uint8_t(rng());
        CodeBuffer buf(0x400000, bytes);
        uint64_t addr = 0x400000 + rng() % bytes.size();
        DecodedInsn insn = decode_one(buf, addr);
        CHECK(insn.length >= 1);
        CHECK(addr + insn.length <= buf.end());
    }
}

TEST_CASE("canonical immediate-load encoding") {
    CHECK(to_hex(encode_mov_reg_imm32(Reg::rax, 3)) == "48 c7 c0 03 00 00 00");
    auto insn = decode_hex(to_hex(encode_mov_reg_imm32(Reg::rax, 0)));
    CHECK(insn.kind == InsnKind::MovRegImm32);
    CHECK(insn.imm == 0);
    // Sign extension through the 64-bit form.
    auto neg = decode_hex(to_hex(encode_mov_reg_imm32(Reg::rbx, -1)));
    CHECK(neg.imm == -1);
}

TEST_CASE("base+disp load pins its displacement in the trailing four bytes") {
    CHECK(to_hex(encode_mov_reg_base_disp(Reg::rax, Reg::rdi, 0x18)) ==
          "48 8b 87 18 00 00 00");
    CHECK(to_hex(encode_mov_reg_base_disp(Reg::rax, Reg::rdi, 0x20)) ==
          "48 8b 87 20 00 00 00");
    // Small displacements keep the disp32 form.
    auto bytes = encode_mov_reg_base_disp(Reg::rbx, Reg::rsi, 1);
    CHECK(bytes.size() == 7);
    CHECK(bytes[3] == 0x01);
}

TEST_CASE("base+disp round trip over random registers and displacements") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 500; ++i) {
        Reg dest = Reg(rng() % 16);
        Reg base = Reg(rng() % 16);
        int32_t disp = int32_t(rng());
        auto bytes = encode_mov_reg_base_disp(dest, base, disp);
        CodeBuffer buf(0x1000, bytes);
        DecodedInsn insn = decode_one(buf, 0x1000);
        CAPTURE(to_hex(bytes));
        CHECK(insn.kind == InsnKind::MovRegFromBaseDisp);
        CHECK(insn.dest_reg == dest);
        CHECK(insn.base_reg == base);
        CHECK(insn.disp == disp);
        CHECK(insn.length == bytes.size());
    }
}

TEST_CASE("every nop length decodes as a single Nop of that length") {
    CHECK(to_hex(encode_nop(1)) == "90");
    CHECK(to_hex(encode_nop(4)) == "0f 1f 40 00");
    for (size_t len = 1; len <= 15; ++len) {
        auto bytes = encode_nop(len);
        REQUIRE(bytes.size() == len);
        CodeBuffer buf(0x1000, bytes);
        DecodedInsn insn = decode_one(buf, 0x1000);
        CHECK(insn.kind == InsnKind::Nop);
        CHECK(insn.length == len);
    }
    CHECK_THROWS_AS(encode_nop(0), std::invalid_argument);
    CHECK_THROWS_AS(encode_nop(16), std::invalid_argument);
}

TEST_CASE("encoder outputs round trip through the decoder") {
    std::mt19937_64 rng(13);
    auto check = [&](const std::vector<uint8_t>& bytes, InsnKind kind) {
        CodeBuffer buf(0x2000, bytes);
        DecodedInsn insn = decode_one(buf, 0x2000);
        CAPTURE(to_hex(bytes));
        CHECK(insn.kind == kind);
        CHECK(insn.length == bytes.size());
    };
    for (int i = 0; i < 200; ++i) {
        Reg a = Reg(rng() % 16);
        Reg b = Reg(rng() % 16);
        Reg idx = Reg(rng() % 16);
        if (idx == Reg::rsp) idx = Reg::rbp;
        int32_t disp = int32_t(rng());
        check(encode_mov_reg_rip(a, disp), InsnKind::MovRegFromRipMem);
        check(encode_mov_rip_reg(a, disp), InsnKind::MovRegToMem);
        check(encode_mov_mem_reg(a, b, disp), InsnKind::MovRegToMem);
        check(encode_mov_reg_reg(a, b), InsnKind::MovRegReg);
        check(encode_cmp_reg_reg(a, b), InsnKind::CmpRegReg);
        check(encode_mov_reg_base_index_scale(a, b, idx, 8, disp),
              InsnKind::MovRegFromBaseIndexScaleDisp);
        check(encode_push(a), InsnKind::Push);
        check(encode_pop(a), InsnKind::Pop);
    }
    check(encode_jcc_rel32(kCondNotEqual, 0x10), InsnKind::CondJump);
    check(encode_jmp_rel32(-5), InsnKind::Jmp);
    check(encode_ret(), InsnKind::Ret);
}

TEST_CASE("indexed-load operand round trip") {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 300; ++i) {
        Reg dest = Reg(rng() % 16);
        Reg base = Reg(rng() % 16);
        Reg idx = Reg(rng() % 16);
        if (idx == Reg::rsp) idx = Reg::r12;  // rsp cannot index; r12 exercises REX.X
        uint8_t scale = uint8_t(1 << (rng() % 4));
        int32_t disp = int32_t(int8_t(rng()));
        auto bytes = encode_mov_reg_base_index_scale(dest, base, idx, scale, disp);
        CodeBuffer buf(0x3000, bytes);
        DecodedInsn insn = decode_one(buf, 0x3000);
        CAPTURE(to_hex(bytes));
        CHECK(insn.dest_reg == dest);
        CHECK(insn.base_reg == base);
        CHECK(insn.index_reg == idx);
        CHECK(insn.scale == scale);
        CHECK(insn.disp == disp);
    }
}

TEST_CASE("code buffer write is bounds checked") {
    CodeBuffer buf(0x1000, size_t(8));
    std::vector<uint8_t> four(4, 0xcc);
    buf.write_bytes(0x1004, four);
    CHECK(buf.byte_at(0x1004) == 0xcc);
    CHECK_THROWS_AS(buf.write_bytes(0x1006, four), BoundsError);
}
