#pragma once

namespace simxfer {

// Caps OpenMP parallelism for every kernel in the library.
// All parallel loops write disjoint output slots, so results are
// identical for any thread count.
void set_threads(int n);
int max_threads();

} // namespace simxfer
