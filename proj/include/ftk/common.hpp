#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

namespace ftk {

// Working precision for all training state.  Test oracles use double.
using real = float;

// Per-mode index (0-based in memory, 1-based in files).
using index_t = std::int32_t;

// Entry positions, nnz counts, counter tallies.
using size64 = std::int64_t;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

// splitmix64 step; used to derive independent seed streams from one base seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic sub-seed for (epoch, phase, mode, ...) streams.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(base);
  for (std::uint64_t p : path) s = mix64(s ^ p);
  return s;
}

using Rng = std::mt19937_64;

// Worker count: explicit request wins, then FTK_THREADS, then 1.
int resolve_workers(int requested);

// Runs fn(worker_id, i) for i in [0, n).  Item i is always handled by worker
// i % workers, so the batch-to-worker assignment is independent of timing.
// workers <= 1 degenerates to a plain loop on the calling thread.
void parallel_for(size64 n, int workers,
                  const std::function<void(int, size64)>& fn);

class Stopwatch {
 public:
  Stopwatch() : start_(clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(clock::now() - start_).count();
  }

 private:
  using clock = std::chrono::steady_clock;
  clock::time_point start_;
};

}  // namespace ftk
