#include <doctest.h>

#include <set>

#include "ftk/evaluation.hpp"
#include "ftk/synthgen.hpp"

using namespace ftk;

TEST_CASE("uniform generation: distinct tuples, range, determinism") {
  SynthSpec spec;
  spec.order = 3;
  spec.dim = 30;
  spec.nnz = 5000;
  spec.mode = SynthSpec::Mode::kUniform;
  spec.min_value = 1.0;
  spec.max_value = 5.0;
  spec.seed = 4;

  SparseTensor t = generate_uniform(spec);
  CHECK(t.nnz() == 5000);
  std::set<std::vector<index_t>> seen;
  for (size64 p = 0; p < t.nnz(); ++p) {
    auto e = t.entry(p);
    CHECK(seen.insert({e.begin(), e.end()}).second);
    CHECK(t.values[p] >= 1.0f);
    CHECK(t.values[p] <= 5.0f);
  }
  SparseTensor again = generate_uniform(spec);
  CHECK(again.indices == t.indices);
  CHECK(again.values == t.values);
}

TEST_CASE("uniform generation: dense enumeration") {
  SynthSpec spec;
  spec.order = 3;
  spec.dim = 4;
  spec.nnz = 64;  // every cell
  spec.mode = SynthSpec::Mode::kUniform;
  spec.seed = 8;
  SparseTensor t = generate_uniform(spec);
  CHECK(t.nnz() == 64);
  std::set<std::vector<index_t>> seen;
  for (size64 p = 0; p < t.nnz(); ++p) {
    auto e = t.entry(p);
    seen.insert({e.begin(), e.end()});
  }
  CHECK(seen.size() == 64);

  spec.nnz = 65;
  CHECK_THROWS_AS(generate_uniform(spec), Error);
}

TEST_CASE("planted generation: noise-free truth has zero loss") {
  SynthSpec spec;
  spec.order = 3;
  spec.dim = 20;
  spec.nnz = 1000;
  spec.mode = SynthSpec::Mode::kPlanted;
  spec.rank_j = 3;
  spec.rank_r = 3;
  spec.noise_std = 0.0;
  spec.seed = 10;
  auto [tensor, truth] = generate_planted(spec);
  CHECK(loss(truth, tensor, 0.0, 0.0) < 1e-9);
}

TEST_CASE("planted generation: truth rmse approximates the noise level") {
  SynthSpec spec;
  spec.order = 3;
  spec.dim = 80;
  spec.nnz = 100000;
  spec.mode = SynthSpec::Mode::kPlanted;
  spec.rank_j = 4;
  spec.rank_r = 4;
  spec.noise_std = 0.05;
  spec.seed = 11;
  auto [tensor, truth] = generate_planted(spec);
  double r = rmse(truth, tensor, 4);
  CHECK(r == doctest::Approx(spec.noise_std).epsilon(0.05));
}

TEST_CASE("spec validation") {
  SynthSpec spec;
  spec.order = 2;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.order = 3;
  spec.dim = 2;
  spec.nnz = 9;  // > 8 cells
  CHECK_THROWS_AS(spec.validate(), Error);
}
