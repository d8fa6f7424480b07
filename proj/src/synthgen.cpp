#include "ftk/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ftk {

namespace {

double cell_count(int order, index_t dim) {
  return std::pow(static_cast<double>(dim), order);
}

// Distinct uniformly random tuples.  Dense requests enumerate and shuffle;
// sparse requests draw with rejection via sort-and-unique rounds, which is
// deterministic under the seed and needs no tuple hashing.
std::vector<index_t> draw_distinct_tuples(int order, index_t dim, size64 nnz,
                                          Rng& rng) {
  double cells = cell_count(order, dim);
  require(static_cast<double>(nnz) <= cells, "nnz exceeds cell count");

  std::vector<index_t> out;
  if (static_cast<double>(nnz) > 0.5 * cells) {
    // Dense regime: enumerate every cell, shuffle cell ids, take a prefix.
    size64 total = 1;
    for (int n = 0; n < order; ++n) total *= dim;
    std::vector<size64> ids(static_cast<std::size_t>(total));
    std::iota(ids.begin(), ids.end(), size64{0});
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(static_cast<std::size_t>(nnz));
    out.resize(static_cast<std::size_t>(nnz) * order);
    for (size64 i = 0; i < nnz; ++i) {
      size64 id = ids[static_cast<std::size_t>(i)];
      for (int n = order - 1; n >= 0; --n) {
        out[i * order + n] = static_cast<index_t>(id % dim);
        id /= dim;
      }
    }
    return out;
  }

  std::uniform_int_distribution<index_t> uni(0, dim - 1);
  std::vector<std::vector<index_t>> tuples;
  tuples.reserve(static_cast<std::size_t>(nnz) + 16);
  while (static_cast<size64>(tuples.size()) < nnz) {
    size64 need = nnz - static_cast<size64>(tuples.size());
    // Slack covers the rare collision; one extra round fixes the rest.
    size64 batch = need + need / 64 + 16;
    for (size64 i = 0; i < batch; ++i) {
      std::vector<index_t> tup(order);
      for (int n = 0; n < order; ++n) tup[n] = uni(rng);
      tuples.push_back(std::move(tup));
    }
    std::sort(tuples.begin(), tuples.end());
    tuples.erase(std::unique(tuples.begin(), tuples.end()), tuples.end());
  }
  // Drop the surplus deterministically, then shuffle so entry order is not
  // sorted (samplers expect no structure in storage order).
  tuples.resize(static_cast<std::size_t>(nnz));
  std::shuffle(tuples.begin(), tuples.end(), rng);
  out.resize(static_cast<std::size_t>(nnz) * order);
  for (size64 i = 0; i < nnz; ++i) {
    for (int n = 0; n < order; ++n) out[i * order + n] = tuples[i][n];
  }
  return out;
}

}  // namespace

void SynthSpec::validate() const {
  require(order >= 3, "synthetic tensors need order >= 3");
  require(dim >= 1, "dim must be positive");
  require(nnz >= 1, "nnz must be positive");
  require(static_cast<double>(nnz) <= cell_count(order, dim),
          "nnz exceeds cell count");
  if (mode == Mode::kUniform) {
    require(min_value <= max_value, "empty value range");
  } else {
    require(rank_j >= 1 && rank_r >= 1, "planted ranks must be positive");
    require(noise_std >= 0.0, "noise std must be non-negative");
  }
}

SparseTensor generate_uniform(const SynthSpec& spec) {
  spec.validate();
  require(spec.mode == SynthSpec::Mode::kUniform, "spec is not uniform");
  Rng rng(derive_seed(spec.seed, {0}));
  SparseTensor t;
  t.order = spec.order;
  t.dims.assign(spec.order, spec.dim);
  t.indices = draw_distinct_tuples(spec.order, spec.dim, spec.nnz, rng);
  t.values.resize(static_cast<std::size_t>(spec.nnz));
  std::uniform_real_distribution<double> val(spec.min_value, spec.max_value);
  for (real& v : t.values) v = static_cast<real>(val(rng));
  return t;
}

std::pair<SparseTensor, Model> generate_planted(const SynthSpec& spec) {
  spec.validate();
  require(spec.mode == SynthSpec::Mode::kPlanted, "spec is not planted");
  std::vector<index_t> dims(spec.order, spec.dim);
  std::vector<index_t> ranks(spec.order, spec.rank_j);

  // Ground truth at unit prediction magnitude.
  real scale = default_init_scale(1.0, spec.order, spec.rank_r, ranks);
  Model truth = init_model(dims, ranks, spec.rank_r,
                           derive_seed(spec.seed, {1}), scale);

  Rng rng(derive_seed(spec.seed, {2}));
  SparseTensor t;
  t.order = spec.order;
  t.dims = dims;
  t.indices = draw_distinct_tuples(spec.order, spec.dim, spec.nnz, rng);
  t.values.resize(static_cast<std::size_t>(spec.nnz));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (size64 i = 0; i < spec.nnz; ++i) {
    double x = predict_element(truth, t.entry(i));
    if (spec.noise_std > 0.0) x += spec.noise_std * noise(rng);
    t.values[static_cast<std::size_t>(i)] = static_cast<real>(x);
  }
  return {std::move(t), std::move(truth)};
}

}  // namespace ftk
