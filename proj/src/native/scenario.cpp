#include "icdbm/native/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <memory>
#include <stdexcept>

#include "icdbm/ic_runtime.hpp"
#include "icdbm/native/emitter.hpp"
#include "icdbm/native/perf_counters.hpp"

namespace icdbm::native {

const uint64_t* NativeObject::biased_class_ptr() const {
    return reinterpret_cast<const uint64_t*>(uintptr_t(&class_id) - kClassLoadBias);
}

namespace {

using Clock = std::chrono::steady_clock;

uint64_t ns_since(Clock::time_point t0) {
    return uint64_t(
        std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count());
}

struct Access {
    uint32_t site;
    uint32_t object;
};

struct Instance {
    Heap heap;
    PropertyName prop = PropertyName::intern("prop");
    std::vector<HeapObject*> objects;
    std::vector<NativeObject> natives;

    std::unique_ptr<ExecRegion> region;
    std::unique_ptr<x86::CodeBuffer> code;
    std::unique_ptr<DbmEngine> engine;
    std::vector<EmittedSite> sites;
    std::vector<InlineCache> ics;
    std::vector<uint64_t> site_patches;

    std::vector<Access> pattern;
    std::vector<uint64_t> array_values;  // array scenario only
};

void add_object(Instance& in, std::initializer_list<std::pair<const char*, uint64_t>> props) {
    HeapObject* obj = in.heap.new_object();
    for (const auto& [name, value] : props)
        in.heap.set_property(obj, PropertyName::intern(name), value);
    in.objects.push_back(obj);
    NativeObject native;
    native.class_id = obj->hclass().id();
    native.slot_values = obj->slots();
    in.natives.push_back(std::move(native));
}

void emit_sites(Instance& in, const std::vector<SiteVariant>& variants, OptLevel level) {
    in.region = std::make_unique<ExecRegion>(4096, 4096);
    SiteEmitter emitter(*in.region);
    for (SiteVariant v : variants) in.sites.push_back(emitter.emit(v));
    in.region->seal_code();

    in.code = std::make_unique<x86::CodeBuffer>(in.region->code_view());
    in.engine = std::make_unique<DbmEngine>(*in.code, in.region->guard(),
                                            DbmEngine::Config{.max_level = level});
    in.engine->set_post_write_hook([](uint64_t addr, size_t len) {
        flush_icache_barrier(reinterpret_cast<const void*>(uintptr_t(addr)), len);
    });

    for (const EmittedSite& site : in.sites) {
        InlineCache ic;
        ic.site_id = site.site_id;
        ic.site_addr = site.label_addr;
        ic.ic_offset_cell_addr = site.offset_cell_addr();
        ic.native_class_cell = site.class_cell;
        ic.native_offset_cell = site.offset_cell;
        in.ics.push_back(ic);
    }
    in.site_patches.assign(in.sites.size(), 0);
}

void repeat_access(Instance& in, uint32_t site, uint32_t object, size_t count) {
    for (size_t i = 0; i < count; ++i) in.pattern.push_back(Access{site, object});
}

Instance build_scenario(const std::string& name, OptLevel level) {
    Instance in;
    if (name == "mono") {
        add_object(in, {{"p", 7}, {"q", 11}, {"prop", 1234}});
        emit_sites(in, {SiteVariant::Canonical}, level);
        repeat_access(in, 0, 0, 1);
    } else if (name == "bi" || name == "bi-tight") {
        add_object(in, {{"a", 13}, {"prop", 12}});
        add_object(in, {{"a", 13}, {"prop", 37}});
        add_object(in, {{"b", 101}, {"c", 42}, {"prop", 2}});
        emit_sites(in, {SiteVariant::Canonical}, level);
        if (name == "bi") {
            // Long phases keep the site hit-dominated; two repatches per pass.
            repeat_access(in, 0, 0, 2731);
            repeat_access(in, 0, 1, 2731);
            repeat_access(in, 0, 2, 2730);
        } else {
            repeat_access(in, 0, 0, 1);
            repeat_access(in, 0, 1, 1);
            repeat_access(in, 0, 2, 1);
        }
    } else if (name == "kshape") {
        for (int j = 0; j < 8; ++j) {
            HeapObject* obj = in.heap.new_object();
            for (int f = 0; f < j; ++f)
                in.heap.set_property(obj, PropertyName::intern("f" + std::to_string(f)),
                                     uint64_t(f));
            in.heap.set_property(obj, in.prop, uint64_t(1000 * j + 7));
            in.objects.push_back(obj);
            NativeObject native;
            native.class_id = obj->hclass().id();
            native.slot_values = obj->slots();
            in.natives.push_back(std::move(native));
        }
        emit_sites(in, {SiteVariant::Canonical}, level);
        for (uint32_t j = 0; j < 8; ++j) repeat_access(in, 0, j, 32);
    } else if (name == "mixedsite") {
        add_object(in, {{"a", 13}, {"prop", 12}});
        add_object(in, {{"b", 101}, {"c", 42}, {"prop", 2}});
        emit_sites(in,
                   {SiteVariant::Canonical, SiteVariant::SwappedDest,
                    SiteVariant::NonRipRelative, SiteVariant::ExtraScheduled},
                   level);
        for (uint32_t s = 0; s < 4; ++s) {
            repeat_access(in, s, 0, 8);
            repeat_access(in, s, 1, 8);
        }
    } else if (name == "array") {
        in.array_values.resize(1024);
        for (size_t i = 0; i < in.array_values.size(); ++i)
            in.array_values[i] = (i * 2654435761u) & 0xffff;
    } else {
        throw std::invalid_argument("unknown scenario '" + name + "'");
    }
    return in;
}

uint64_t handle_miss(Instance& in, uint32_t site_idx, uint32_t obj_idx) {
    uint64_t before = in.engine->modification_count();
    uint64_t v = cache_miss(in.ics[site_idx], in.heap, in.objects[obj_idx], in.prop,
                            *in.engine);
    in.site_patches[site_idx] += in.engine->modification_count() - before;
    return v;
}

uint64_t run_iterations(Instance& in, uint64_t iters) {
    uint64_t checksum = 0;
    if (!in.array_values.empty()) {
        size_t n = in.array_values.size();
        const uint64_t* values = in.array_values.data();
        for (uint64_t i = 0; i < iters; ++i) checksum += values[i % n];
        return checksum;
    }
    size_t np = in.pattern.size();
    const Access* pattern = in.pattern.data();
    for (uint64_t i = 0; i < iters; ++i) {
        const Access& a = pattern[i % np];
        const NativeObject& obj = in.natives[a.object];
        uint64_t v = in.sites[a.site].fn()(obj.slots(), obj.biased_class_ptr());
        if (v == kUndefinedWord) [[unlikely]]
            v = handle_miss(in, a.site, a.object);
        checksum += v;
    }
    return checksum;
}

uint64_t calibrate(Instance& in, bool short_mode) {
    const uint64_t target_ns = short_mode ? 50ull * 1000 * 1000 : 2ull * 1000 * 1000 * 1000;
    uint64_t probe = std::max<uint64_t>(in.pattern.size(), 4096);
    auto t0 = Clock::now();
    run_iterations(in, probe);
    uint64_t dt = std::max<uint64_t>(ns_since(t0), 1);
    uint64_t iters = probe * target_ns / dt;
    uint64_t unit = in.pattern.empty() ? 1 : in.pattern.size();
    iters = std::max<uint64_t>(iters / unit, 1) * unit;
    return iters;
}

std::vector<ModificationEvent> decimate_timeline(const std::vector<ModificationEvent>& events,
                                                 size_t cap = 4096) {
    if (events.size() <= cap) return events;
    std::vector<ModificationEvent> out;
    out.reserve(cap);
    double stride = double(events.size() - 1) / double(cap - 1);
    for (size_t i = 0; i < cap; ++i)
        out.push_back(events[size_t(double(i) * stride)]);
    out.back() = events.back();
    return out;
}

std::vector<SiteRow> site_rows(const Instance& in) {
    std::vector<SiteRow> rows;
    for (size_t i = 0; i < in.sites.size(); ++i) {
        const InlineCache& ic = in.ics[i];
        SiteRow row;
        row.site_id = in.sites[i].site_id;
        row.variant = variant_name(in.sites[i].variant);
        switch (ic.memo.state) {
            case AnalysisMemo::State::Unanalyzed:
                row.classification = "unanalyzed";
                break;
            case AnalysisMemo::State::Recognized:
                row.classification = opt_level_name(ic.memo.level);
                break;
            case AnalysisMemo::State::Failed:
                row.classification = "O0";
                row.fail_reason = fail_reason_name(ic.memo.reason);
                break;
        }
        row.patches = in.site_patches[i];
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

std::vector<std::string> scenario_names() {
    return {"mono", "bi", "bi-tight", "kshape", "mixedsite", "array"};
}

bool scenario_exists(const std::string& name) {
    auto names = scenario_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

NativeRunResult run_benchmark(const std::string& scenario, const BenchOptions& options) {
    if (!scenario_exists(scenario))
        throw std::invalid_argument("unknown scenario '" + scenario + "'");

    Instance in = build_scenario(scenario, options.level);

    auto run_origin = Clock::now();
    if (in.engine)
        in.engine->set_clock([run_origin] { return ns_since(run_origin); });

    uint64_t iters = options.iters ? options.iters : calibrate(in, options.short_mode);

    std::unique_ptr<PerfGroup> perf;
    if (options.counters) perf = std::make_unique<PerfGroup>();

    NativeRunResult result;
    result.record.scenario = scenario;
    result.record.level = int(options.level);

    for (uint32_t rep = 0; rep < options.reps; ++rep) {
        if (perf) perf->reset_and_start();
        auto t0 = Clock::now();
        uint64_t checksum = run_iterations(in, iters);
        uint64_t wall = ns_since(t0);

        RepSample sample;
        sample.rep = rep;
        sample.iters = iters;
        sample.wall_ns = wall;
        sample.checksum = checksum;
        if (perf) {
            PerfCounters c = perf->stop(wall);
            sample.instructions = c.instructions;
            sample.l1d_loads = c.l1d_loads;
            sample.l1d_misses = c.l1d_misses;
        }
        result.record.samples.push_back(sample);
    }

    result.total_wall_ns = ns_since(run_origin);
    if (in.engine) {
        result.record.timeline = decimate_timeline(in.engine->modification_events());
        result.modifications = in.engine->modification_count();
        result.unprotect_calls = in.region->backend().calls;
    }
    result.record.sites = site_rows(in);
    result.counters_available = perf && perf->any_available();
    if (perf && !perf->any_available()) result.counters_note = perf->unavailable_reason();
    return result;
}

}  // namespace icdbm::native
