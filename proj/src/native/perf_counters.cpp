#include "icdbm/native/perf_counters.hpp"

#include <cerrno>
#include <cstring>

#include <linux/perf_event.h>
#include <sys/ioctl.h>
#include <sys/syscall.h>
#include <unistd.h>

namespace icdbm::native {

namespace {

int open_event(uint32_t type, uint64_t config) {
    perf_event_attr attr{};
    attr.type = type;
    attr.size = sizeof(attr);
    attr.config = config;
    attr.disabled = 1;
    attr.exclude_kernel = 1;
    attr.exclude_hv = 1;
    return int(::syscall(__NR_perf_event_open, &attr, 0, -1, -1, 0));
}

void ioc(int fd, unsigned long req) {
    if (fd >= 0) ::ioctl(fd, req, 0);
}

std::optional<uint64_t> read_counter(int fd) {
    if (fd < 0) return std::nullopt;
    uint64_t value = 0;
    if (::read(fd, &value, sizeof value) != ssize_t(sizeof value)) return std::nullopt;
    return value;
}

constexpr uint64_t l1d_config(uint64_t result) {
    return PERF_COUNT_HW_CACHE_L1D | (PERF_COUNT_HW_CACHE_OP_READ << 8) | (result << 16);
}

}  // namespace

PerfGroup::PerfGroup() {
    fd_instructions_ = open_event(PERF_TYPE_HARDWARE, PERF_COUNT_HW_INSTRUCTIONS);
    int instr_errno = errno;
    fd_l1d_loads_ = open_event(PERF_TYPE_HW_CACHE, l1d_config(PERF_COUNT_HW_CACHE_RESULT_ACCESS));
    fd_l1d_misses_ = open_event(PERF_TYPE_HW_CACHE, l1d_config(PERF_COUNT_HW_CACHE_RESULT_MISS));
    if (!any_available())
        unavailable_reason_ = std::string("perf_event_open: ") + std::strerror(instr_errno);
}

PerfGroup::~PerfGroup() {
    if (fd_instructions_ >= 0) ::close(fd_instructions_);
    if (fd_l1d_loads_ >= 0) ::close(fd_l1d_loads_);
    if (fd_l1d_misses_ >= 0) ::close(fd_l1d_misses_);
}

void PerfGroup::reset_and_start() {
    ioc(fd_instructions_, PERF_EVENT_IOC_RESET);
    ioc(fd_l1d_loads_, PERF_EVENT_IOC_RESET);
    ioc(fd_l1d_misses_, PERF_EVENT_IOC_RESET);
    ioc(fd_instructions_, PERF_EVENT_IOC_ENABLE);
    ioc(fd_l1d_loads_, PERF_EVENT_IOC_ENABLE);
    ioc(fd_l1d_misses_, PERF_EVENT_IOC_ENABLE);
}

PerfCounters PerfGroup::stop(uint64_t wall_ns) {
    ioc(fd_instructions_, PERF_EVENT_IOC_DISABLE);
    ioc(fd_l1d_loads_, PERF_EVENT_IOC_DISABLE);
    ioc(fd_l1d_misses_, PERF_EVENT_IOC_DISABLE);
    PerfCounters c;
    c.instructions = read_counter(fd_instructions_);
    c.l1d_loads = read_counter(fd_l1d_loads_);
    c.l1d_misses = read_counter(fd_l1d_misses_);
    c.wall_ns = wall_ns;
    return c;
}

}  // namespace icdbm::native
