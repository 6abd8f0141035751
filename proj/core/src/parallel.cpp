#include "heatrace/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace heatrace {

namespace {
std::atomic<int> g_default{0};
}

int resolve_threads(int requested)
{
    if (requested > 0) return requested;
    if (const char* env = std::getenv("HEATRACE_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

void set_default_threads(int n) { g_default = std::max(0, n); }

int default_threads() { return resolve_threads(g_default.load()); }

void parallel_for(int n, const std::function<void(int)>& body, int threads)
{
    int nt = threads > 0 ? threads : default_threads();
    nt = std::min(nt, n);
    if (nt <= 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto worker = [&] {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
                next = n;
            }
        }
    };
    std::vector<std::jthread> pool;
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    pool.clear();
    if (err) std::rethrow_exception(err);
}

} // namespace heatrace
