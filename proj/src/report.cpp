#include "icdbm/report.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace icdbm {

namespace {

constexpr const char* kSamplesHeader = "# icdbm samples v1";
constexpr const char* kTimelineHeader = "# icdbm timeline v1";
constexpr const char* kSitesHeader = "# icdbm sites v1";

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

uint64_t to_u64(const std::string& s, const std::string& ctx) {
    uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ReportError("malformed integer '" + s + "' in " + ctx);
    return v;
}

std::optional<uint64_t> to_opt_u64(const std::string& s, const std::string& ctx) {
    if (s.empty()) return std::nullopt;
    return to_u64(s, ctx);
}

std::string opt_str(const std::optional<uint64_t>& v) {
    return v ? std::to_string(*v) : std::string();
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw ReportError("cannot write " + p.string());
    return out;
}

std::ifstream open_in(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw ReportError("cannot read " + p.string());
    return in;
}

void expect_header(std::ifstream& in, const char* header, const std::filesystem::path& p) {
    std::string line;
    if (!std::getline(in, line) || line != header)
        throw ReportError("missing '" + std::string(header) + "' header in " + p.string());
    std::getline(in, line);  // column names
}

// Extracts per-metric sample sets; empty when the counter was unavailable.
std::optional<SampleSet> metric_samples(const RunRecord& run,
                                        std::optional<uint64_t> RepSample::*field) {
    SampleSet s{run.stem(), {}};
    for (const auto& rep : run.samples) {
        const auto& v = rep.*field;
        if (!v) return std::nullopt;
        s.values.push_back(double(*v));
    }
    if (s.values.empty()) return std::nullopt;
    return s;
}

SampleSet wall_samples(const RunRecord& run) {
    SampleSet s{run.stem(), {}};
    for (const auto& rep : run.samples) s.values.push_back(double(rep.wall_ns));
    return s;
}

void write_metric_report(std::ofstream& out, const std::string& rq,
                         const std::vector<const RunRecord*>& runs,
                         const std::map<std::string, const RunRecord*>& baselines,
                         const std::function<std::optional<SampleSet>(const RunRecord&)>& metric,
                         double alpha) {
    out << "# icdbm report " << rq << " v1\n";
    out << "scenario,level,n,mean,stddev,ratio_vs_l0,welch_t,welch_df,welch_p,significant,note\n";
    for (const RunRecord* run : runs) {
        auto samples = metric(*run);
        const RunRecord* base = baselines.at(run->scenario);
        auto base_samples = metric(*base);
        out << run->scenario << "," << run->level << ",";
        if (!samples || !base_samples) {
            out << "0,,,,,,,,counter-unavailable\n";
            continue;
        }
        out << samples->n() << "," << format_double(samples->mean()) << ","
            << format_double(samples->n() > 1 ? samples->stddev() : 0.0) << ","
            << format_double(samples->mean() / base_samples->mean()) << ",";
        if (samples->n() < 2 || base_samples->n() < 2) {
            out << ",,,,insufficient-n\n";
            continue;
        }
        WelchResult w = welch_t_test(*samples, *base_samples, alpha);
        out << format_double(w.t) << "," << format_double(w.df) << "," << format_double(w.p)
            << "," << (w.significant ? "yes" : "no") << ","
            << (w.degenerate ? "degenerate" : "") << "\n";
    }
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw ReportError("malformed double '" + s + "'");
        return v;
    } catch (const std::exception&) {
        throw ReportError("malformed double '" + s + "'");
    }
}

void write_run(const RunRecord& run, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    {
        auto out = open_out(dir / (run.stem() + ".samples.csv"));
        out << kSamplesHeader << "\n";
        out << "scenario,level,rep,iters,wall_ns,instructions,l1d_loads,l1d_misses,checksum\n";
        for (const auto& s : run.samples)
            out << run.scenario << "," << run.level << "," << s.rep << "," << s.iters << ","
                << s.wall_ns << "," << opt_str(s.instructions) << "," << opt_str(s.l1d_loads)
                << "," << opt_str(s.l1d_misses) << "," << s.checksum << "\n";
    }
    {
        auto out = open_out(dir / (run.stem() + ".timeline.csv"));
        out << kTimelineHeader << "\n";
        out << "scenario,level,event,t_ns,cumulative,kind\n";
        for (size_t i = 0; i < run.timeline.size(); ++i) {
            const auto& e = run.timeline[i];
            out << run.scenario << "," << run.level << "," << i << "," << e.t_ns << ","
                << e.cumulative << "," << (e.repatch ? "repatch" : "apply") << "\n";
        }
    }
    {
        auto out = open_out(dir / (run.stem() + ".sites.csv"));
        out << kSitesHeader << "\n";
        out << "scenario,level,site_id,variant,classification,fail_reason,patches\n";
        for (const auto& s : run.sites)
            out << run.scenario << "," << run.level << "," << s.site_id << "," << s.variant
                << "," << s.classification << "," << s.fail_reason << "," << s.patches << "\n";
    }
}

RunRecord read_run(const std::filesystem::path& samples_file) {
    RunRecord run;
    std::string ctx = samples_file.string();

    {
        auto in = open_in(samples_file);
        expect_header(in, kSamplesHeader, samples_file);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto f = split_csv(line);
            if (f.size() != 9) throw ReportError("bad sample row in " + ctx);
            run.scenario = f[0];
            run.level = int(to_u64(f[1], ctx));
            RepSample s;
            s.rep = uint32_t(to_u64(f[2], ctx));
            s.iters = to_u64(f[3], ctx);
            s.wall_ns = to_u64(f[4], ctx);
            s.instructions = to_opt_u64(f[5], ctx);
            s.l1d_loads = to_opt_u64(f[6], ctx);
            s.l1d_misses = to_opt_u64(f[7], ctx);
            s.checksum = to_u64(f[8], ctx);
            run.samples.push_back(s);
        }
    }

    auto stem = samples_file.string();
    auto base = stem.substr(0, stem.size() - std::string(".samples.csv").size());

    if (std::filesystem::exists(base + ".timeline.csv")) {
        auto in = open_in(base + ".timeline.csv");
        expect_header(in, kTimelineHeader, base + ".timeline.csv");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto f = split_csv(line);
            if (f.size() != 6) throw ReportError("bad timeline row in " + ctx);
            ModificationEvent e;
            e.t_ns = to_u64(f[3], ctx);
            e.cumulative = to_u64(f[4], ctx);
            e.repatch = f[5] == "repatch";
            run.timeline.push_back(e);
        }
    }
    if (std::filesystem::exists(base + ".sites.csv")) {
        auto in = open_in(base + ".sites.csv");
        expect_header(in, kSitesHeader, base + ".sites.csv");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto f = split_csv(line);
            if (f.size() != 7) throw ReportError("bad site row in " + ctx);
            SiteRow s;
            s.site_id = uint32_t(to_u64(f[2], ctx));
            s.variant = f[3];
            s.classification = f[4];
            s.fail_reason = f[5];
            s.patches = to_u64(f[6], ctx);
            run.sites.push_back(s);
        }
    }
    return run;
}

std::vector<RunRecord> load_run_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw ReportError(dir.string() + " is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.ends_with(".samples.csv"))
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<RunRecord> runs;
    for (const auto& f : files) runs.push_back(read_run(f));
    return runs;
}

void write_reports(const std::vector<RunRecord>& runs, const std::filesystem::path& out_dir,
                   double alpha) {
    if (runs.empty()) throw ReportError("no runs to report");
    std::filesystem::create_directories(out_dir);

    std::map<std::string, const RunRecord*> baselines;
    std::vector<const RunRecord*> ordered;
    for (const auto& run : runs) {
        ordered.push_back(&run);
        if (run.level == 0) baselines[run.scenario] = &run;
    }
    std::sort(ordered.begin(), ordered.end(), [](const RunRecord* a, const RunRecord* b) {
        return std::tie(a->scenario, a->level) < std::tie(b->scenario, b->level);
    });
    for (const RunRecord* run : ordered)
        if (!baselines.count(run->scenario))
            throw ReportError("scenario '" + run->scenario + "' has no level-0 baseline run");

    {
        auto out = open_out(out_dir / "rq1_classification.csv");
        out << "# icdbm report rq1 v1\n";
        out << "scenario,level,sites_total,o0,o1,o2,unanalyzed\n";
        for (const RunRecord* run : ordered) {
            size_t o0 = 0, o1 = 0, o2 = 0, un = 0;
            for (const auto& s : run->sites) {
                if (s.classification == "O0") ++o0;
                else if (s.classification == "O1") ++o1;
                else if (s.classification == "O2") ++o2;
                else ++un;
            }
            out << run->scenario << "," << run->level << "," << run->sites.size() << "," << o0
                << "," << o1 << "," << o2 << "," << un << "\n";
        }
    }

    {
        auto out = open_out(out_dir / "rq2_instructions.csv");
        write_metric_report(out, "rq2", ordered, baselines,
                            [](const RunRecord& r) { return metric_samples(r, &RepSample::instructions); },
                            alpha);
    }
    {
        auto out = open_out(out_dir / "rq3_loads.csv");
        write_metric_report(out, "rq3", ordered, baselines,
                            [](const RunRecord& r) { return metric_samples(r, &RepSample::l1d_loads); },
                            alpha);
    }
    {
        auto out = open_out(out_dir / "rq4_time.csv");
        write_metric_report(out, "rq4", ordered, baselines,
                            [](const RunRecord& r) -> std::optional<SampleSet> { return wall_samples(r); },
                            alpha);
    }
    {
        auto out = open_out(out_dir / "timeline_events.csv");
        out << "# icdbm report timeline v1\n";
        out << "scenario,level,event,t_ns,cumulative,kind\n";
        for (const RunRecord* run : ordered)
            for (size_t i = 0; i < run->timeline.size(); ++i) {
                const auto& e = run->timeline[i];
                out << run->scenario << "," << run->level << "," << i << "," << e.t_ns << ","
                    << e.cumulative << "," << (e.repatch ? "repatch" : "apply") << "\n";
            }
    }
}

}  // namespace icdbm
