#include "ftk/tiles.hpp"

#include <utility>

namespace ftk {

bool TiledMatrix::padding_is_zero() const {
  index_t prows = trows_ * kTile;
  index_t pcols = tcols_ * kTile;
  for (index_t r = 0; r < prows; ++r) {
    for (index_t c = 0; c < pcols; ++c) {
      if ((r >= rows_ || c >= cols_) &&
          tile(r / kTile, c / kTile).at(r % kTile, c % kTile) != 0.0f) {
        return false;
      }
    }
  }
  return true;
}

void tile_mma(const Tile& a, const Tile& b, const Tile& c, Tile& d) {
  for (index_t i = 0; i < kTile; ++i) {
    real row[kTile];
    for (index_t j = 0; j < kTile; ++j) row[j] = c.at(i, j);
    for (index_t k = 0; k < kTile; ++k) {
      const real aik = a.at(i, k);
      const real* brow = b.a.data() + k * kTile;
      for (index_t j = 0; j < kTile; ++j) row[j] += aik * brow[j];
    }
    for (index_t j = 0; j < kTile; ++j) d.set(i, j, row[j]);
  }
}

void matmul_tiled(const TiledMatrix& x, const TiledMatrix& y,
                  TiledMatrix& out) {
  require(x.cols() == y.rows(), "matmul_tiled: inner dimensions differ");
  out.resize(x.rows(), y.cols());
  for (index_t ti = 0; ti < x.tile_rows(); ++ti) {
    for (index_t tq = 0; tq < y.tile_cols(); ++tq) {
      Tile acc;
      for (index_t tp = 0; tp < x.tile_cols(); ++tp) {
        tile_mma(x.tile(ti, tp), y.tile(tp, tq), acc, acc);
      }
      out.tile(ti, tq) = acc;
    }
  }
}

void hadamard(const TiledMatrix& a, const TiledMatrix& b, TiledMatrix& out) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "hadamard: shape mismatch");
  out.resize(a.rows(), a.cols());
  for (index_t tr = 0; tr < a.tile_rows(); ++tr) {
    for (index_t tc = 0; tc < a.tile_cols(); ++tc) {
      const Tile& ta = a.tile(tr, tc);
      const Tile& tb = b.tile(tr, tc);
      Tile& to = out.tile(tr, tc);
      for (index_t i = 0; i < kTile * kTile; ++i) to.a[i] = ta.a[i] * tb.a[i];
    }
  }
}

void hadamard_into(TiledMatrix& acc, const TiledMatrix& b) {
  require(acc.rows() == b.rows() && acc.cols() == b.cols(),
          "hadamard: shape mismatch");
  for (index_t tr = 0; tr < acc.tile_rows(); ++tr) {
    for (index_t tc = 0; tc < acc.tile_cols(); ++tc) {
      Tile& ta = acc.tile(tr, tc);
      const Tile& tb = b.tile(tr, tc);
      for (index_t i = 0; i < kTile * kTile; ++i) ta.a[i] *= tb.a[i];
    }
  }
}

void r_dot(const TiledMatrix& a, const TiledMatrix& b, std::span<real> out) {
  require(a.cols() == b.rows() && a.rows() == b.cols(),
          "r_dot: expected MxR and RxM");
  require(std::cmp_equal(out.size(), a.rows()), "r_dot: output length");
  for (index_t m = 0; m < a.rows(); ++m) {
    real acc = 0.0f;
    for (index_t k = 0; k < a.cols(); ++k) acc += a.at(m, k) * b.at(k, m);
    out[m] = acc;
  }
}

void row_dot(const TiledMatrix& a, const TiledMatrix& b, std::span<real> out) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "row_dot: shape mismatch");
  require(std::cmp_equal(out.size(), a.rows()), "row_dot: output length");
  for (index_t m = 0; m < a.rows(); ++m) {
    real acc = 0.0f;
    for (index_t tc = 0; tc < a.tile_cols(); ++tc) {
      auto ra = a.row_in_tile(m, tc);
      auto rb = b.row_in_tile(m, tc);
      for (index_t j = 0; j < kTile; ++j) acc += ra[j] * rb[j];
    }
    out[m] = acc;
  }
}

void r_hadamard(std::span<const real> v, const TiledMatrix& b,
                TiledMatrix& out) {
  require(std::cmp_equal(v.size(), b.rows()), "r_hadamard: row counts differ");
  out.resize(b.rows(), b.cols());
  for (index_t m = 0; m < b.rows(); ++m) {
    const real vm = v[m];
    for (index_t tc = 0; tc < b.tile_cols(); ++tc) {
      auto rb = b.row_in_tile(m, tc);
      auto ro = out.row_in_tile(m, tc);
      for (index_t j = 0; j < kTile; ++j) ro[j] = vm * rb[j];
    }
  }
}

TiledMatrix transposed(const TiledMatrix& a) {
  TiledMatrix out(a.cols(), a.rows());
  for (index_t r = 0; r < a.rows(); ++r) {
    for (index_t c = 0; c < a.cols(); ++c) out.set(c, r, a.at(r, c));
  }
  return out;
}

}  // namespace ftk
