#pragma once

#include <atomic>
#include <bit>
#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts are unsupported");

namespace vt {

// Shape/size mismatches between tensors or arrays.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Bad argument values: out-of-range labels, forces, volumes, configs.
struct ValueError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Lifecycle/contract violations: step on closed scene, lift without grasp,
// missing gradients, fold leakage.
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

// Numeric failures during runs: NaN losses, estimator blowups, timeouts.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Missing/corrupt files, manifest mismatches.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += " x ";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

// Shortest round-trip decimal form; stable across runs, used for all CSV output.
inline std::string fmt_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Runs fn(0..n-1) on up to `threads` workers. Each index is claimed once;
// callers collect results into index-addressed slots so output order never
// depends on scheduling.
template <class Fn>
void parallel_for_indexed(int n, int threads, Fn&& fn) {
    if (n <= 0) return;
    int workers = std::min(threads, n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    std::atomic<int> error_guard{0};
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                int i = next.fetch_add(1, std::memory_order_relaxed);
                if (i >= n || failed.load(std::memory_order_relaxed)) break;
                try {
                    fn(i);
                } catch (...) {
                    if (error_guard.fetch_add(1) == 0) first_error = std::current_exception();
                    failed.store(true, std::memory_order_relaxed);
                    break;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

inline int default_threads() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace vt
