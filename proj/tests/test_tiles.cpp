#include <doctest.h>

#include <random>

#include "ftk/tiles.hpp"

using namespace ftk;

namespace {

TiledMatrix random_tm(index_t rows, index_t cols, std::uint64_t seed) {
  TiledMatrix m(rows, cols);
  Rng rng(seed);
  std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
  for (index_t r = 0; r < rows; ++r) {
    for (index_t c = 0; c < cols; ++c) m.set(r, c, uni(rng));
  }
  return m;
}

// Scalar triple-loop reference in double.
std::vector<double> matmul_ref(const TiledMatrix& x, const TiledMatrix& y) {
  std::vector<double> out(static_cast<std::size_t>(x.rows()) * y.cols(), 0.0);
  for (index_t i = 0; i < x.rows(); ++i) {
    for (index_t k = 0; k < x.cols(); ++k) {
      double xv = x.at(i, k);
      for (index_t j = 0; j < y.cols(); ++j) {
        out[static_cast<std::size_t>(i) * y.cols() + j] += xv * y.at(k, j);
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("tile_mma identity passes through") {
  Tile a, b, c;
  for (index_t i = 0; i < kTile; ++i) a.set(i, i, 1.0f);
  Rng rng(3);
  std::uniform_real_distribution<float> uni(-2.0f, 2.0f);
  for (auto& v : b.a) v = uni(rng);
  Tile d = tile_mma(a, b, c);
  for (index_t i = 0; i < kTile * kTile; ++i) CHECK(d.a[i] == b.a[i]);
}

TEST_CASE("tile_mma all-ones inner dim") {
  Tile a, b, c;
  a.a.fill(1.0f);
  b.a.fill(1.0f);
  Tile d = tile_mma(a, b, c);
  for (float v : d.a) CHECK(v == doctest::Approx(16.0f));
}

TEST_CASE("tile_mma adds the c operand") {
  Tile a, b, c;
  a.a.fill(1.0f);
  b.a.fill(2.0f);
  c.a.fill(0.5f);
  Tile d = tile_mma(a, b, c);
  for (float v : d.a) CHECK(v == doctest::Approx(32.5f));
}

TEST_CASE("matmul_tiled identity and ones") {
  TiledMatrix eye(16, 16);
  for (index_t i = 0; i < 16; ++i) eye.set(i, i, 1.0f);
  TiledMatrix b = random_tm(16, 16, 11);
  TiledMatrix out = matmul_tiled(eye, b);
  for (index_t i = 0; i < 16; ++i) {
    for (index_t j = 0; j < 16; ++j) CHECK(out.at(i, j) == b.at(i, j));
  }

  TiledMatrix x(16, 32), y(32, 16);
  for (index_t i = 0; i < 16; ++i) {
    for (index_t k = 0; k < 32; ++k) x.set(i, k, 1.0f);
  }
  for (index_t k = 0; k < 32; ++k) {
    for (index_t j = 0; j < 16; ++j) y.set(k, j, 1.0f);
  }
  TiledMatrix o2 = matmul_tiled(x, y);
  for (index_t i = 0; i < 16; ++i) {
    for (index_t j = 0; j < 16; ++j) CHECK(o2.at(i, j) == doctest::Approx(32.0f));
  }
}

TEST_CASE("matmul_tiled shape mismatch throws") {
  TiledMatrix x(4, 5), y(6, 3);
  CHECK_THROWS_AS(matmul_tiled(x, y), Error);
}

TEST_CASE("tiled-flat equivalence over random logical shapes <= 64") {
  Rng rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    index_t m = 1 + static_cast<index_t>(rng() % 64);
    index_t k = 1 + static_cast<index_t>(rng() % 64);
    index_t n = 1 + static_cast<index_t>(rng() % 64);
    TiledMatrix x = random_tm(m, k, rng());
    TiledMatrix y = random_tm(k, n, rng());
    TiledMatrix out = matmul_tiled(x, y);
    auto ref = matmul_ref(x, y);
    for (index_t i = 0; i < m; ++i) {
      for (index_t j = 0; j < n; ++j) {
        double want = ref[static_cast<std::size_t>(i) * n + j];
        CHECK(out.at(i, j) ==
              doctest::Approx(want).epsilon(1e-5).scale(std::abs(want) + 1.0));
      }
    }
    CHECK(out.padding_is_zero());
  }
}

TEST_CASE("hadamard identity, zeros, and exactness") {
  TiledMatrix a = random_tm(20, 18, 5);
  TiledMatrix ones(20, 18), zeros(20, 18), out;
  for (index_t i = 0; i < 20; ++i) {
    for (index_t j = 0; j < 18; ++j) ones.set(i, j, 1.0f);
  }
  hadamard(a, ones, out);
  for (index_t i = 0; i < 20; ++i) {
    for (index_t j = 0; j < 18; ++j) CHECK(out.at(i, j) == a.at(i, j));
  }
  hadamard(a, zeros, out);
  CHECK(out.padding_is_zero());
  for (index_t i = 0; i < 20; ++i) {
    for (index_t j = 0; j < 18; ++j) CHECK(out.at(i, j) == 0.0f);
  }
  TiledMatrix b = random_tm(20, 18, 6);
  hadamard(a, b, out);
  for (index_t i = 0; i < 20; ++i) {
    for (index_t j = 0; j < 18; ++j) {
      CHECK(out.at(i, j) == a.at(i, j) * b.at(i, j));
    }
  }
  TiledMatrix bad(19, 18);
  CHECK_THROWS_AS(hadamard(a, bad, out), Error);
}

TEST_CASE("r_dot matches the per-row definition") {
  const index_t m = 16, r = 16;
  TiledMatrix a(m, r), b(r, m);
  for (index_t i = 0; i < m; ++i) {
    for (index_t j = 0; j < r; ++j) {
      a.set(i, j, 1.0f);
      b.set(j, i, 1.0f);
    }
  }
  std::vector<real> out(m, 0.0f);
  r_dot(a, b, out);
  for (real v : out) CHECK(v == doctest::Approx(16.0f));

  // b = a^T gives squared row norms.
  a = random_tm(m, r, 9);
  b = transposed(a);
  r_dot(a, b, out);
  for (index_t i = 0; i < m; ++i) {
    double want = 0.0;
    for (index_t j = 0; j < r; ++j) {
      want += static_cast<double>(a.at(i, j)) * a.at(i, j);
    }
    CHECK(out[i] == doctest::Approx(want).epsilon(1e-6));
  }

  // random vs the definition
  b = random_tm(r, m, 10);
  r_dot(a, b, out);
  for (index_t i = 0; i < m; ++i) {
    double want = 0.0;
    for (index_t j = 0; j < r; ++j) {
      want += static_cast<double>(a.at(i, j)) * b.at(j, i);
    }
    CHECK(out[i] == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("row_dot equals r_dot against the transpose") {
  TiledMatrix a = random_tm(16, 48, 21);
  TiledMatrix bt = random_tm(16, 48, 22);
  std::vector<real> via_row(16), via_rdot(16);
  row_dot(a, bt, via_row);
  TiledMatrix b = transposed(bt);
  r_dot(a, b, via_rdot);
  for (int i = 0; i < 16; ++i) CHECK(via_row[i] == via_rdot[i]);
}

TEST_CASE("r_hadamard scales rows") {
  TiledMatrix b = random_tm(16, 20, 31);
  std::vector<real> v(16);
  for (int i = 0; i < 16; ++i) v[i] = static_cast<real>(i) / 7.0f;
  TiledMatrix out;
  r_hadamard(v, b, out);
  for (index_t i = 0; i < 16; ++i) {
    for (index_t j = 0; j < 20; ++j) {
      CHECK(out.at(i, j) == v[i] * b.at(i, j));
    }
  }
  CHECK(out.padding_is_zero());

  std::vector<real> ones(16, 1.0f), zeros(16, 0.0f);
  r_hadamard(ones, b, out);
  for (index_t i = 0; i < 16; ++i) {
    for (index_t j = 0; j < 20; ++j) CHECK(out.at(i, j) == b.at(i, j));
  }
  r_hadamard(zeros, b, out);
  for (index_t i = 0; i < 16; ++i) {
    for (index_t j = 0; j < 20; ++j) CHECK(out.at(i, j) == 0.0f);
  }
}

TEST_CASE("padding stays zero through kernel chains") {
  TiledMatrix x = random_tm(17, 33, 77);
  TiledMatrix y = random_tm(33, 18, 78);
  TiledMatrix prod = matmul_tiled(x, y);
  CHECK(prod.padding_is_zero());
  TiledMatrix h;
  hadamard(prod, prod, h);
  CHECK(h.padding_is_zero());
  TiledMatrix tr = transposed(h);
  CHECK(tr.padding_is_zero());
}
