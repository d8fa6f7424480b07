#pragma once

#include "ftk/model.hpp"
#include "ftk/sparse_tensor.hpp"

namespace ftk {

struct SynthSpec {
  int order = 3;          // N >= 3
  index_t dim = 10'000;   // uniform per mode
  size64 nnz = 1'000'000; // desk-scale default; the reference suite uses 1e8
  enum class Mode { kUniform, kPlanted } mode = Mode::kUniform;

  // uniform mode
  double min_value = 1.0;
  double max_value = 5.0;

  // planted mode
  index_t rank_j = 16;
  index_t rank_r = 16;
  double noise_std = 0.01;

  std::uint64_t seed = 0;

  void validate() const;
};

// nnz distinct uniformly random index tuples with values uniform on
// [min, max]; deterministic under seed.
SparseTensor generate_uniform(const SynthSpec& spec);

// Draws a ground-truth model scaled so predictions land near magnitude one,
// samples distinct tuples, and sets value = prediction + N(0, noise_std).
std::pair<SparseTensor, Model> generate_planted(const SynthSpec& spec);

}  // namespace ftk
