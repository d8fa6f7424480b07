#include "ftk/common.hpp"

#include <cstdlib>
#include <thread>
#include <vector>

namespace ftk {

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("FTK_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

void parallel_for(size64 n, int workers,
                  const std::function<void(int, size64)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (size64 i = 0; i < n; ++i) fn(0, i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (size64 i = w; i < n; i += workers) fn(w, i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ftk
