#pragma once
#include <functional>

namespace heatrace {

// Thread count from explicit request, else HEATRACE_THREADS, else 1.
int resolve_threads(int requested);
void set_default_threads(int n);
int default_threads();

// Runs body(i) for i in [0, n). Each index writes only its own slot, so the
// result does not depend on the thread count.
void parallel_for(int n, const std::function<void(int)>& body, int threads = 0);

} // namespace heatrace
