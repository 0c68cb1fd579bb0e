#include "icdbm/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace icdbm {

namespace {

std::string trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    return std::string(s.substr(b, e - b + 1));
}

uint64_t parse_u64(const std::string& file, int line, const std::string& text) {
    std::string t = trim(text);
    int fbase = 10;
    size_t off = 0;
    if (t.starts_with("0x") || t.starts_with("0X")) {
        fbase = 16;
        off = 2;
    }
    uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(t.data() + off, t.data() + t.size(), value, fbase);
    if (ec != std::errc() || ptr != t.data() + t.size())
        throw CorpusParseError(file, line, "malformed number '" + t + "'");
    return value;
}

struct BlockBuilder {
    CorpusFixture fixture;
    bool has_name = false;
    bool has_expect = false;
    bool has_bytes = false;

    void directive(const std::string& file, int line, const std::string& key,
                   const std::string& value) {
        if (key == "name") {
            fixture.name = value;
            has_name = true;
        } else if (key == "expect") {
            std::istringstream is(value);
            std::string level, reason;
            is >> level >> reason;
            if (level == "O2") {
                fixture.expect = CorpusFixture::Expect::O2;
            } else if (level == "O1") {
                fixture.expect = CorpusFixture::Expect::O1;
            } else if (level == "O0") {
                fixture.expect = CorpusFixture::Expect::Fail;
                auto r = fail_reason_from_name(reason);
                if (!r)
                    throw CorpusParseError(file, line, "unknown fail reason '" + reason + "'");
                fixture.expect_reason = *r;
            } else {
                throw CorpusParseError(file, line, "expect must be O2, O1 or O0 <reason>");
            }
            has_expect = true;
        } else if (key == "base") {
            fixture.base = parse_u64(file, line, value);
        } else if (key == "label") {
            fixture.label_offset = parse_u64(file, line, value);
        } else if (key == "ic-offset") {
            fixture.ic_offset = parse_u64(file, line, value);
        } else if (key == "slot-index") {
            fixture.slot_index = int64_t(parse_u64(file, line, value));
        } else if (key == "word-size") {
            fixture.word_size = uint32_t(parse_u64(file, line, value));
        } else if (key == "obj-reg") {
            auto reg = x86::reg_from_name(value);
            if (!reg)
                throw CorpusParseError(file, line, "unknown register '" + value + "'");
            fixture.obj_reg_hint = *reg;
        } else {
            throw CorpusParseError(file, line, "unknown annotation key '" + key + "'");
        }
    }

    void byte_line(const std::string& file, int line, const std::string& text) {
        std::istringstream is(text);
        std::string tok;
        while (is >> tok) {
            if (tok.size() != 2 || !std::isxdigit((unsigned char)tok[0]) ||
                !std::isxdigit((unsigned char)tok[1]))
                throw CorpusParseError(file, line, "malformed hex byte '" + tok + "'");
            fixture.bytes.push_back(uint8_t(std::stoul(tok, nullptr, 16)));
        }
        has_bytes = true;
    }

    CorpusFixture finish(const std::string& file, int line) {
        if (!has_name) throw CorpusParseError(file, line, "fixture block without a name");
        if (!has_expect)
            throw CorpusParseError(file, line, "fixture '" + fixture.name + "' lacks expect");
        if (fixture.bytes.empty())
            throw CorpusParseError(file, line, "fixture '" + fixture.name + "' has no bytes");
        return std::move(fixture);
    }
};

}  // namespace

CorpusParseError::CorpusParseError(const std::string& file_, int line_, const std::string& msg)
    : std::runtime_error(file_ + ":" + std::to_string(line_) + ": " + msg),
      file(file_),
      line(line_) {}

std::vector<CorpusFixture> parse_corpus_text(const std::string& text,
                                             const std::string& file_name) {
    std::vector<CorpusFixture> fixtures;
    std::istringstream is(text);
    std::string raw;
    int line_no = 0;
    std::optional<BlockBuilder> block;
    int block_start = 0;

    auto flush = [&] {
        if (block) {
            fixtures.push_back(block->finish(file_name, block_start));
            block.reset();
        }
    };

    while (std::getline(is, raw)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty()) {
            flush();
            continue;
        }
        if (!block) {
            block.emplace();
            block->fixture.source_file = file_name;
            block->fixture.source_line = line_no;
            block_start = line_no;
        }
        if (line[0] == '#') {
            std::string body = trim(line.substr(1));
            size_t colon = body.find(':');
            if (colon == std::string::npos) continue;  // plain comment
            std::string key = trim(body.substr(0, colon));
            std::string value = trim(body.substr(colon + 1));
            if (block->has_bytes)
                throw CorpusParseError(file_name, line_no,
                                       "annotations must precede the byte lines");
            block->directive(file_name, line_no, key, value);
        } else {
            size_t hash = line.find('#');
            if (hash != std::string::npos) line = trim(line.substr(0, hash));
            if (!line.empty()) block->byte_line(file_name, line_no, line);
        }
    }
    flush();
    return fixtures;
}

std::vector<CorpusFixture> parse_corpus_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw CorpusParseError(path.string(), 0, "cannot open file");
    std::ostringstream os;
    os << in.rdbuf();
    return parse_corpus_text(os.str(), path.string());
}

std::vector<CorpusFixture> load_corpus_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw CorpusParseError(dir.string(), 0, "not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<CorpusFixture> fixtures;
    for (const auto& f : files) {
        auto part = parse_corpus_file(f);
        fixtures.insert(fixtures.end(), std::make_move_iterator(part.begin()),
                        std::make_move_iterator(part.end()));
    }
    return fixtures;
}

FixtureOutcome classify_fixture(const CorpusFixture& fixture) {
    FixtureOutcome out;
    out.fixture = &fixture;

    x86::CodeBuffer buf(fixture.base, fixture.bytes);
    RecordingBackend backend;
    PageGuard guard(4096, backend);
    DbmEngine engine(buf, guard, {.word_size = fixture.word_size});

    out.classification =
        engine.analyze_site(fixture.label_addr(), fixture.ic_offset_addr(),
                            fixture.obj_reg_hint);

    if (!out.classification.eligible()) {
        out.bucket = OptLevel::O0;
        out.bucket_reason = out.classification.reason;
    } else {
        int32_t base_disp = out.classification.kind == Classification::Kind::EligibleO2
                                ? out.classification.fused_insn.disp
                                : 0;
        try {
            PatchPlan plan = DbmEngine::build_patch(out.classification, fixture.slot_index,
                                                    fixture.word_size, base_disp);
            out.bucket = plan.level;
        } catch (const PatchError& err) {
            out.build_failure = err.reason;
            out.bucket = OptLevel::O0;
            out.bucket_reason = err.reason;
        }
    }

    switch (fixture.expect) {
        case CorpusFixture::Expect::O2:
            out.agrees = out.bucket == OptLevel::O2;
            break;
        case CorpusFixture::Expect::O1:
            out.agrees = out.bucket == OptLevel::O1;
            break;
        case CorpusFixture::Expect::Fail:
            out.agrees = out.bucket == OptLevel::O0 && out.bucket_reason &&
                         *out.bucket_reason == fixture.expect_reason;
            break;
    }
    return out;
}

CorpusReport classify_corpus(const std::vector<CorpusFixture>& fixtures) {
    CorpusReport report;
    for (const auto& f : fixtures) {
        FixtureOutcome out = classify_fixture(f);
        switch (out.bucket) {
            case OptLevel::O0: ++report.histogram.o0; break;
            case OptLevel::O1: ++report.histogram.o1; break;
            case OptLevel::O2: ++report.histogram.o2; break;
        }
        report.outcomes.push_back(std::move(out));
    }
    return report;
}

bool CorpusReport::all_agree() const {
    return std::all_of(outcomes.begin(), outcomes.end(),
                       [](const FixtureOutcome& o) { return o.agrees; });
}

}  // namespace icdbm
