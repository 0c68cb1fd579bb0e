#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "icdbm/dbm_engine.hpp"

// Fixture corpus: text files of hex byte pairs, one instruction sequence per
// block, annotated with the expected classification. Blocks are separated by
// blank lines; '#' starts a comment, and '# key: value' comments before the
// bytes carry the annotations.
//
//   # name: canonical-pair
//   # expect: O2
//   # ic-offset: 0x1023
//   48 8b 05 1c 10 00 00
//   48 8b 04 c7
//
// Annotation keys: name, expect (O1 | O2 | O0 <FailReason>), base (buffer
// base address, default 0x400000), label (offset of the site label from
// base, default 0), ic-offset (offset of the IC offset cell from base),
// slot-index, word-size, obj-reg.

namespace icdbm {

struct CorpusParseError : std::runtime_error {
    CorpusParseError(const std::string& file, int line, const std::string& msg);
    std::string file;
    int line;
};

struct CorpusFixture {
    std::string name;
    std::string source_file;
    int source_line = 0;

    std::vector<uint8_t> bytes;
    uint64_t base = 0x400000;
    uint64_t label_offset = 0;
    std::optional<uint64_t> ic_offset;  // offset cell, relative to base
    int64_t slot_index = 3;
    uint32_t word_size = kWordSize;
    std::optional<x86::Reg> obj_reg_hint;

    enum class Expect : uint8_t { O2, O1, Fail };
    Expect expect = Expect::Fail;
    FailReason expect_reason = FailReason::UnrecognizedSequence;

    uint64_t label_addr() const { return base + label_offset; }
    uint64_t ic_offset_addr() const { return ic_offset ? base + *ic_offset : 0; }
};

std::vector<CorpusFixture> parse_corpus_text(const std::string& text,
                                             const std::string& file_name);
std::vector<CorpusFixture> parse_corpus_file(const std::filesystem::path& path);
/// Loads every regular file in the directory, sorted by name.
std::vector<CorpusFixture> load_corpus_dir(const std::filesystem::path& dir);

struct FixtureOutcome {
    const CorpusFixture* fixture = nullptr;
    Classification classification;
    std::optional<FailReason> build_failure;  // ImmediateTooWide at build time
    OptLevel bucket = OptLevel::O0;
    std::optional<FailReason> bucket_reason;  // set for the O0 bucket
    bool agrees = false;
};

struct CorpusHistogram {
    size_t o0 = 0;
    size_t o1 = 0;
    size_t o2 = 0;
    size_t total() const { return o0 + o1 + o2; }
};

struct CorpusReport {
    CorpusHistogram histogram;
    std::vector<FixtureOutcome> outcomes;
    bool all_agree() const;
};

/// Classifies one fixture: window analysis plus, for eligible windows, a
/// patch build at the annotated slot index (which can itself fail on width).
FixtureOutcome classify_fixture(const CorpusFixture& fixture);
CorpusReport classify_corpus(const std::vector<CorpusFixture>& fixtures);

}  // namespace icdbm
