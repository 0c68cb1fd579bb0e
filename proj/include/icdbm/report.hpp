#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "icdbm/dbm_engine.hpp"
#include "icdbm/stats.hpp"

// Benchmark run persistence and report generation. A run is one
// (scenario, level) execution; it serializes to three CSV files in a run
// directory:
//   <scenario>-L<level>.samples.csv    per-rep counters and wall time
//   <scenario>-L<level>.timeline.csv   code-modification events
//   <scenario>-L<level>.sites.csv      per-site classification
// Reports aggregate a run directory into one CSV per research question,
// always relative to each scenario's level-0 baseline.

namespace icdbm {

struct ReportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RepSample {
    uint32_t rep = 0;
    uint64_t iters = 0;
    uint64_t wall_ns = 0;
    std::optional<uint64_t> instructions;
    std::optional<uint64_t> l1d_loads;
    std::optional<uint64_t> l1d_misses;
    uint64_t checksum = 0;
};

struct SiteRow {
    uint32_t site_id = 0;
    std::string variant;
    std::string classification;  // O0 | O1 | O2 | unanalyzed
    std::string fail_reason;     // empty unless classification == O0
    uint64_t patches = 0;        // applies + repatches
};

struct RunRecord {
    std::string scenario;
    int level = 0;
    std::vector<RepSample> samples;
    std::vector<ModificationEvent> timeline;
    std::vector<SiteRow> sites;

    std::string stem() const { return scenario + "-L" + std::to_string(level); }
};

void write_run(const RunRecord& run, const std::filesystem::path& dir);
RunRecord read_run(const std::filesystem::path& samples_file);
std::vector<RunRecord> load_run_dir(const std::filesystem::path& dir);

/// Writes rq1_classification, rq2_instructions, rq3_loads, rq4_time and
/// timeline_events CSVs. Every scenario present must have a level-0 run.
void write_reports(const std::vector<RunRecord>& runs, const std::filesystem::path& out_dir,
                   double alpha = 0.05);

/// %.17g formatting: doubles survive a write/read round trip bit-exactly.
std::string format_double(double v);
double parse_double(const std::string& s);

}  // namespace icdbm
