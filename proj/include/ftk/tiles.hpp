#pragma once

#include <array>
#include <cassert>
#include <span>
#include <vector>

#include "ftk/common.hpp"

namespace ftk {

// Fixed tile edge, mirroring the 16x16 fragments of warp-level MMA hardware.
// Not configurable: the padding and mask logic below assumes it.
inline constexpr index_t kTile = 16;

// One 16x16 block, row-major.
struct alignas(64) Tile {
  std::array<real, kTile * kTile> a{};

  real at(index_t r, index_t c) const { return a[r * kTile + c]; }
  void set(index_t r, index_t c, real v) { a[r * kTile + c] = v; }
  void zero() { a.fill(0.0f); }
};

// Matrix stored as a grid of 16x16 tiles with zero padding beyond the logical
// extent.  Invariant: padded cells are exactly zero before any kernel call;
// every kernel below preserves that.
class TiledMatrix {
 public:
  TiledMatrix() = default;
  TiledMatrix(index_t rows, index_t cols) { resize(rows, cols); }

  void resize(index_t rows, index_t cols) {
    assert(rows >= 0 && cols >= 0);
    rows_ = rows;
    cols_ = cols;
    trows_ = (rows + kTile - 1) / kTile;
    tcols_ = (cols + kTile - 1) / kTile;
    tiles_.assign(static_cast<std::size_t>(trows_) * tcols_, Tile{});
  }

  void zero() {
    for (auto& t : tiles_) t.zero();
  }

  index_t rows() const { return rows_; }
  index_t cols() const { return cols_; }
  index_t tile_rows() const { return trows_; }
  index_t tile_cols() const { return tcols_; }

  Tile& tile(index_t tr, index_t tc) { return tiles_[tr * tcols_ + tc]; }
  const Tile& tile(index_t tr, index_t tc) const {
    return tiles_[tr * tcols_ + tc];
  }

  real at(index_t r, index_t c) const {
    return tile(r / kTile, c / kTile).at(r % kTile, c % kTile);
  }
  void set(index_t r, index_t c, real v) {
    assert(r < rows_ && c < cols_);
    tile(r / kTile, c / kTile).set(r % kTile, c % kTile, v);
  }

  // Contiguous row segment inside one tile: row r, columns [tc*16, tc*16+16).
  std::span<real> row_in_tile(index_t r, index_t tc) {
    Tile& t = tile(r / kTile, tc);
    return {t.a.data() + (r % kTile) * kTile, static_cast<std::size_t>(kTile)};
  }
  std::span<const real> row_in_tile(index_t r, index_t tc) const {
    const Tile& t = tile(r / kTile, tc);
    return {t.a.data() + (r % kTile) * kTile, static_cast<std::size_t>(kTile)};
  }

  bool padding_is_zero() const;

 private:
  index_t rows_ = 0, cols_ = 0;
  index_t trows_ = 0, tcols_ = 0;
  std::vector<Tile> tiles_;
};

// d = a * b + c over full 16x16 tiles, scalar multiply-add per cell.
void tile_mma(const Tile& a, const Tile& b, const Tile& c, Tile& d);

inline Tile tile_mma(const Tile& a, const Tile& b, const Tile& c) {
  Tile d;
  tile_mma(a, b, c, d);
  return d;
}

// out = x * y, accumulating tile products in ascending inner-tile order so
// single-threaded runs are bit-reproducible.  Logical inner dims must match.
void matmul_tiled(const TiledMatrix& x, const TiledMatrix& y, TiledMatrix& out);

inline TiledMatrix matmul_tiled(const TiledMatrix& x, const TiledMatrix& y) {
  TiledMatrix out;
  matmul_tiled(x, y, out);
  return out;
}

// Elementwise product, equal shapes.
void hadamard(const TiledMatrix& a, const TiledMatrix& b, TiledMatrix& out);

// acc = acc * b elementwise (same shape).
void hadamard_into(TiledMatrix& acc, const TiledMatrix& b);

// R Dot product: a is MxR, b is RxM, out[m] = dot(a row m, b column m).
void r_dot(const TiledMatrix& a, const TiledMatrix& b, std::span<real> out);

// Row-aligned variant of the R Dot product with the right operand already
// transposed: out[m] = sum_k a[m,k] * b[m,k].  Accumulation order over k is
// identical to r_dot.
void row_dot(const TiledMatrix& a, const TiledMatrix& b, std::span<real> out);

// R Hadamard product: column r of out = v (Mx1) elementwise-times column r
// of b (MxR).
void r_hadamard(std::span<const real> v, const TiledMatrix& b,
                TiledMatrix& out);

TiledMatrix transposed(const TiledMatrix& a);

}  // namespace ftk
