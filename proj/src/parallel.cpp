#include "sfp/parallel.hpp"

#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace sfp {

namespace {
int g_default_threads = 1;
}

int default_threads() { return g_default_threads; }

void set_default_threads(int n) { g_default_threads = n < 1 ? 1 : n; }

void parallel_for(int n, const std::function<void(int)>& fn, int threads) {
    if (threads <= 0) threads = g_default_threads;
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    if (threads > n) threads = n;
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                if (!failed.exchange(true)) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failed.load() && error) std::rethrow_exception(error);
}

} // namespace sfp
