#pragma once

#include <functional>

namespace sfp {

int default_threads();
void set_default_threads(int n);

// Runs fn(i) for i in [0, n). Tasks must be independent; callers that reduce
// over task outputs must do so in index order after the loop so results do
// not depend on the schedule. threads == 0 uses the process default.
void parallel_for(int n, const std::function<void(int)>& fn, int threads = 0);

} // namespace sfp
