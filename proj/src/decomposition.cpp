#include "ftk/decomposition.hpp"

#include <cassert>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

namespace ftk {

namespace {

// Billing context for one batch: which counters, which mode the tallies are
// attributed to (-1 = the operand's own mode, the global-batch convention),
// and whether the batch is full.
struct Bill {
  CostCounters* cc = nullptr;
  int mode = -1;
  bool full = false;

  void add(int operand_mode, Stage s, size64 amount) const {
    if (cc) cc->add(mode >= 0 ? mode : operand_mode, s, amount, full);
  }
};

Bill make_bill(CostCounters* cc, const Batch& b, int mode = -1) {
  return Bill{cc, mode, b.full()};
}

void copy_row_into_tiles(TiledMatrix& out, index_t row, const real* src,
                         index_t ncols) {
  for (index_t tc = 0; tc < out.tile_cols(); ++tc) {
    auto dst = out.row_in_tile(row, tc);
    index_t base = tc * kTile;
    index_t hi = std::min(ncols - base, kTile);
    for (index_t j = 0; j < hi; ++j) dst[j] = src[base + j];
  }
}

void zero_row_in_tiles(TiledMatrix& out, index_t row) {
  for (index_t tc = 0; tc < out.tile_cols(); ++tc) {
    auto dst = out.row_in_tile(row, tc);
    for (index_t j = 0; j < kTile; ++j) dst[j] = 0.0f;
  }
}

void transpose_into(const TiledMatrix& a, TiledMatrix& out) {
  out.resize(a.cols(), a.rows());
  for (index_t r = 0; r < a.rows(); ++r) {
    for (index_t c = 0; c < a.cols(); ++c) out.set(c, r, a.at(r, c));
  }
}

}  // namespace

CoreTiles snapshot_core_tiles(const Model& m) {
  CoreTiles out;
  int n = m.order();
  out.b.resize(n);
  out.b_t.resize(n);
  for (int k = 0; k < n; ++k) {
    out.b[k].resize(m.ranks[k], m.r);
    for (index_t j = 0; j < m.ranks[k]; ++j) {
      copy_row_into_tiles(out.b[k], j,
                          m.b[k].data() + static_cast<std::size_t>(j) * m.r,
                          m.r);
    }
    out.b_t[k] = transposed(out.b[k]);
  }
  return out;
}

void CCache::init(const Model& m) {
  int n = m.order();
  r_ = m.r;
  c_.resize(n);
  for (int k = 0; k < n; ++k) {
    c_[k].assign(static_cast<std::size_t>(m.dims[k]) * m.r, 0.0f);
  }
  fresh_.assign(n, 0);
}

void CCache::build(const Model& m, CostCounters* cc) {
  if (c_.empty()) init(m);
  for (int k = 0; k < m.order(); ++k) refresh(m, k, cc);
}

void CCache::refresh(const Model& m, int mode, CostCounters* cc) {
  require(!c_.empty(), "cache not initialized");
  const index_t jn = m.ranks[mode];
  const index_t r = m.r;
  const real* b = m.b[mode].data();
  for (index_t i = 0; i < m.dims[mode]; ++i) {
    const real* arow = m.a_row(mode, i);
    real* crow = c_[mode].data() + static_cast<std::size_t>(i) * r;
    for (index_t col = 0; col < r; ++col) {
      real acc = 0.0f;
      for (index_t j = 0; j < jn; ++j) {
        acc += arow[j] * b[static_cast<std::size_t>(j) * r + col];
      }
      crow[col] = acc;
    }
  }
  fresh_[mode] = 1;
  if (cc) cc->add_overhead(kOther, static_cast<size64>(m.dims[mode]) * jn * r);
}

void Workspace::prepare(const Model& m, index_t batch_cap) {
  int n = m.order();
  cap_ = batch_cap;
  a_rows.resize(n);
  c.resize(n);
  d.resize(n);
  u.resize(n);
  e.resize(n);
  e_t.resize(n);
  g.resize(n);
  index_t scratch = m.r;
  for (int k = 0; k < n; ++k) {
    a_rows[k].resize(batch_cap, m.ranks[k]);
    c[k].resize(batch_cap, m.r);
    d[k].resize(batch_cap, m.r);
    u[k].resize(batch_cap, m.ranks[k]);
    e[k].resize(batch_cap, m.ranks[k]);
    e_t[k].resize(m.ranks[k], batch_cap);
    g[k].resize(m.ranks[k], m.r);
    scratch = std::max(scratch, m.ranks[k]);
  }
  xhat.assign(static_cast<std::size_t>(batch_cap), 0.0f);
  resid.assign(static_cast<std::size_t>(batch_cap), 0.0f);
  row_scratch.assign(static_cast<std::size_t>(scratch) * 2, 0.0f);
}

void FlatWorkspace::prepare(const Model& m, index_t batch_cap) {
  index_t max_j = m.r;
  for (index_t j : m.ranks) max_j = std::max(max_j, j);
  d_row.assign(static_cast<std::size_t>(m.r), 0.0f);
  t_vec.assign(static_cast<std::size_t>(max_j), 0.0f);
  g_vec.assign(static_cast<std::size_t>(max_j), 0.0f);
  a_snap.assign(static_cast<std::size_t>(batch_cap) * max_j, 0.0f);
  xhat.assign(static_cast<std::size_t>(batch_cap), 0.0f);
  resid.assign(static_cast<std::size_t>(batch_cap), 0.0f);
}

void CoreGradAccumulator::reset(const Model& m) {
  grad.resize(m.order());
  for (int k = 0; k < m.order(); ++k) {
    grad[k].assign(static_cast<std::size_t>(m.ranks[k]) * m.r, 0.0f);
  }
  contributions = 0;
}

void CoreGradAccumulator::merge(const CoreGradAccumulator& other) {
  require(grad.size() == other.grad.size(), "accumulator shape mismatch");
  for (std::size_t k = 0; k < grad.size(); ++k) {
    for (std::size_t i = 0; i < grad[k].size(); ++i) {
      grad[k][i] += other.grad[k][i];
    }
  }
  contributions += other.contributions;
}

// ---------------------------------------------------------------------------
// Batch pipeline
// ---------------------------------------------------------------------------

namespace {

void stage_factor_rows_impl(const Model& m, Workspace& ws, int skip_mode,
                            const Bill& bill) {
  const Batch& b = ws.batch;
  for (int n = 0; n < m.order(); ++n) {
    if (n == skip_mode) continue;
    TiledMatrix& out = ws.a_rows[n];
    for (index_t r = 0; r < b.m_eff; ++r) {
      copy_row_into_tiles(out, r, m.a_row(n, b.idx[n][r]), m.ranks[n]);
    }
    for (index_t r = b.m_eff; r < ws.capacity(); ++r) {
      zero_row_in_tiles(out, r);
    }
    bill.add(n, kRead, static_cast<size64>(b.m_eff) * m.ranks[n]);
  }
}

void compute_c_batch_impl(const CoreTiles& bt, Workspace& ws, int skip_mode,
                          const Bill& bill) {
  int n_modes = static_cast<int>(ws.c.size());
  for (int n = 0; n < n_modes; ++n) {
    if (n == skip_mode) continue;
    matmul_tiled(ws.a_rows[n], bt.b[n], ws.c[n]);
    bill.add(n, kDStage,
             static_cast<size64>(ws.batch.m_eff) * bt.b[n].rows() *
                 bt.b[n].cols());
  }
}

// D^(k) = product over n != k of C^(n); the first contribution is a copy, so
// a mode costs m_eff * R * (N-2) multiplies.
void compute_d_batch_impl(Workspace& ws, const Bill& bill) {
  int n_modes = static_cast<int>(ws.c.size());
  const size64 r = ws.c.empty() ? 0 : ws.c[0].cols();
  for (int k = 0; k < n_modes; ++k) {
    int first = (k == 0) ? 1 : 0;
    ws.d[k] = ws.c[first];
    for (int n = first + 1; n < n_modes; ++n) {
      if (n == k) continue;
      hadamard_into(ws.d[k], ws.c[n]);
      bill.add(k, kDStage, static_cast<size64>(ws.batch.m_eff) * r);
    }
  }
}

void compute_d_single_impl(Workspace& ws, int mode, const Bill& bill) {
  int n_modes = static_cast<int>(ws.c.size());
  const size64 r = ws.c[mode].cols();
  int first = (mode == 0) ? 1 : 0;
  ws.d[mode] = ws.c[first];
  for (int n = first + 1; n < n_modes; ++n) {
    if (n == mode) continue;
    hadamard_into(ws.d[mode], ws.c[n]);
    bill.add(mode, kDStage, static_cast<size64>(ws.batch.m_eff) * r);
  }
}

void compute_u_single_impl(const CoreTiles& bt, Workspace& ws, int mode,
                           const Bill& bill) {
  matmul_tiled(ws.d[mode], bt.b_t[mode], ws.u[mode]);
  bill.add(mode, kBdtStage,
           static_cast<size64>(ws.batch.m_eff) * bt.b[mode].cols() *
               bt.b[mode].rows());
}

void residual_from_xhat(Workspace& ws) {
  for (index_t m = 0; m < ws.capacity(); ++m) {
    ws.resid[m] = (m < ws.batch.m_eff) ? ws.batch.values[m] - ws.xhat[m] : 0.0f;
  }
}

void predict_factor_side_impl(Workspace& ws, const Bill& bill) {
  row_dot(ws.a_rows[0], ws.u[0], ws.xhat);
  residual_from_xhat(ws);
  bill.add(0, kOther,
           static_cast<size64>(ws.batch.m_eff) * ws.a_rows[0].cols());
}

void predict_c_side_impl(Workspace& ws, int mode, const Bill& bill) {
  row_dot(ws.c[mode], ws.d[mode], ws.xhat);
  residual_from_xhat(ws);
  bill.add(mode, kOther,
           static_cast<size64>(ws.batch.m_eff) * ws.c[mode].cols());
}

void update_factors_plus_impl(Model& m, const Hyperparams& h, Workspace& ws,
                              const Bill& bill) {
  const Batch& b = ws.batch;
  for (int n = 0; n < m.order(); ++n) {
    const index_t jn = m.ranks[n];
    for (index_t row = 0; row < b.m_eff; ++row) {
      const real rm = ws.resid[row];
      real* dst = m.a_row(n, b.idx[n][row]);
      for (index_t tc = 0; tc < ws.u[n].tile_cols(); ++tc) {
        auto snap = ws.a_rows[n].row_in_tile(row, tc);
        auto urow = ws.u[n].row_in_tile(row, tc);
        index_t base = tc * kTile;
        index_t hi = std::min(jn - base, kTile);
        for (index_t j = 0; j < hi; ++j) {
          dst[base + j] =
              snap[j] + h.lr_a * (rm * urow[j] - h.reg_a * snap[j]);
        }
      }
    }
    bill.add(n, kUpdate, static_cast<size64>(b.m_eff) * jn);
  }
}

void accumulate_core_grads_plus_impl(Workspace& ws, CoreGradAccumulator& acc,
                                     const Bill& bill) {
  int n_modes = static_cast<int>(ws.c.size());
  for (int n = 0; n < n_modes; ++n) {
    r_hadamard(ws.resid, ws.a_rows[n], ws.e[n]);
    transpose_into(ws.e[n], ws.e_t[n]);
    matmul_tiled(ws.e_t[n], ws.d[n], ws.g[n]);
    const index_t jn = ws.g[n].rows();
    const index_t r = ws.g[n].cols();
    real* dst = acc.grad[n].data();
    for (index_t j = 0; j < jn; ++j) {
      for (index_t col = 0; col < r; ++col) {
        dst[static_cast<std::size_t>(j) * r + col] += ws.g[n].at(j, col);
      }
    }
    bill.add(n, kOther, static_cast<size64>(ws.batch.m_eff) * jn);
    bill.add(n, kBdtStage, static_cast<size64>(ws.batch.m_eff) * jn * r);
  }
  acc.contributions += ws.batch.m_eff;
}

// C^(n)_Psi gathered from the cache instead of computed (storage scheme).
void stage_c_rows_from_cache(const CCache& cache, Workspace& ws,
                             const Bill& bill) {
  const Batch& b = ws.batch;
  int n_modes = static_cast<int>(ws.c.size());
  for (int n = 0; n < n_modes; ++n) {
    TiledMatrix& out = ws.c[n];
    const index_t r = out.cols();
    for (index_t row = 0; row < b.m_eff; ++row) {
      copy_row_into_tiles(out, row, cache.row(n, b.idx[n][row]).data(), r);
    }
    for (index_t row = b.m_eff; row < ws.capacity(); ++row) {
      zero_row_in_tiles(out, row);
    }
    bill.add(n, kRead, static_cast<size64>(b.m_eff) * r);
  }
}

void update_factor_fasttucker_impl(Model& m, const Hyperparams& h,
                                   const CoreTiles& bt, Workspace& ws,
                                   int mode, const Bill& bill) {
  const Batch& b = ws.batch;
  const index_t jn = m.ranks[mode];
  const index_t shared_row = b.idx[mode][0];
#ifndef NDEBUG
  for (index_t r = 1; r < b.m_eff; ++r) {
    assert(b.idx[mode][r] == shared_row && "bucket rows must share i_n");
  }
#endif
  bill.add(mode, kRead, jn);                             // a_{i_n,:}
  bill.add(mode, kRead, static_cast<size64>(jn) * m.r);  // B^(n)
  stage_factor_rows_impl(m, ws, mode, bill);
  compute_c_batch_impl(bt, ws, mode, bill);
  compute_d_single_impl(ws, mode, bill);
  compute_u_single_impl(bt, ws, mode, bill);

  // Snapshot of the shared row, then c_n = a B^(n) as one R-vector.
  real* snap = ws.row_scratch.data();
  real* c_shared = snap + jn;
  const real* arow = m.a_row(mode, shared_row);
  for (index_t j = 0; j < jn; ++j) snap[j] = arow[j];
  const real* bmat = m.b[mode].data();
  for (index_t col = 0; col < m.r; ++col) {
    real acc = 0.0f;
    for (index_t j = 0; j < jn; ++j) {
      acc += snap[j] * bmat[static_cast<std::size_t>(j) * m.r + col];
    }
    c_shared[col] = acc;
  }
  bill.add(mode, kOther, static_cast<size64>(jn) * m.r);

  for (index_t row = 0; row < b.m_eff; ++row) {
    real acc = 0.0f;
    for (index_t col = 0; col < m.r; ++col) {
      acc += c_shared[col] * ws.d[mode].at(row, col);
    }
    ws.xhat[row] = acc;
  }
  bill.add(mode, kOther, static_cast<size64>(b.m_eff) * m.r);
  residual_from_xhat(ws);

  // The whole batch moves one row by the 1/M-mean gradient (Eq. (5)).
  real* dst = m.a_row(mode, shared_row);
  const real inv = 1.0f / static_cast<real>(b.m_eff);
  for (index_t j = 0; j < jn; ++j) {
    real gsum = 0.0f;
    for (index_t row = 0; row < b.m_eff; ++row) {
      gsum += ws.resid[row] * ws.u[mode].at(row, j);
    }
    dst[j] = snap[j] + h.lr_a * (gsum * inv - h.reg_a * snap[j]);
  }
  bill.add(mode, kOther, static_cast<size64>(b.m_eff) * jn);
  bill.add(mode, kUpdate, jn);
}

void update_core_fasttucker_impl(Model& m, const Hyperparams& h,
                                 const CoreTiles& bt, Workspace& ws, int mode,
                                 const Bill& bill) {
  const Batch& b = ws.batch;
  const index_t jn = m.ranks[mode];
  stage_factor_rows_impl(m, ws, -1, bill);
  bill.add(mode, kRead, static_cast<size64>(jn) * m.r);  // B^(n)
  compute_c_batch_impl(bt, ws, mode, bill);
  compute_d_single_impl(ws, mode, bill);

  // C^(n)_Psi from the *current* core matrix; it changes batch to batch.
  ws.b_current.resize(jn, m.r);
  for (index_t j = 0; j < jn; ++j) {
    copy_row_into_tiles(ws.b_current, j,
                        m.b[mode].data() + static_cast<std::size_t>(j) * m.r,
                        m.r);
  }
  matmul_tiled(ws.a_rows[mode], ws.b_current, ws.c[mode]);
  bill.add(mode, kOther, static_cast<size64>(b.m_eff) * jn * m.r);

  predict_c_side_impl(ws, mode, bill);

  r_hadamard(ws.resid, ws.a_rows[mode], ws.e[mode]);
  transpose_into(ws.e[mode], ws.e_t[mode]);
  matmul_tiled(ws.e_t[mode], ws.d[mode], ws.g[mode]);
  bill.add(mode, kOther, static_cast<size64>(b.m_eff) * jn);
  bill.add(mode, kBdtStage, static_cast<size64>(b.m_eff) * jn * m.r);

  real* bdst = m.b[mode].data();
  const real inv = 1.0f / static_cast<real>(b.m_eff);
  for (index_t j = 0; j < jn; ++j) {
    for (index_t col = 0; col < m.r; ++col) {
      const std::size_t at = static_cast<std::size_t>(j) * m.r + col;
      bdst[at] += h.lr_b * (ws.g[mode].at(j, col) * inv - h.reg_b * bdst[at]);
    }
  }
  bill.add(mode, kUpdate, static_cast<size64>(jn) * m.r);
}

// Shared d row for a complement-bucket batch: product of cached C rows of
// the other modes, which must be fresh.
void compute_d_row_impl(const Model& m, const CCache& cache, FlatWorkspace& ws,
                        int mode, const Bill& bill) {
  const Batch& b = ws.batch;
  const int n_modes = m.order();
  bool first = true;
  for (int k = 0; k < n_modes; ++k) {
    if (k == mode) continue;
    assert(cache.fresh(k) && "stale cache rows feeding a d row");
#ifndef NDEBUG
    for (index_t r = 1; r < b.m_eff; ++r) {
      assert(b.idx[k][r] == b.idx[k][0] && "batch must share complement");
    }
#endif
    auto crow = cache.row(k, b.idx[k][0]);
    if (first) {
      for (index_t col = 0; col < m.r; ++col) ws.d_row[col] = crow[col];
      first = false;
    } else {
      for (index_t col = 0; col < m.r; ++col) ws.d_row[col] *= crow[col];
      bill.add(mode, kDStage, m.r);
    }
  }
  bill.add(mode, kRead, static_cast<size64>(n_modes - 1) * m.r);
}

void stage_flat_impl(const Model& m, FlatWorkspace& ws, int mode,
                     const Bill& bill) {
  const Batch& b = ws.batch;
  const index_t jn = m.ranks[mode];
  for (index_t row = 0; row < b.m_eff; ++row) {
    const real* src = m.a_row(mode, b.idx[mode][row]);
    real* dst = ws.a_snap.data() + static_cast<std::size_t>(row) * jn;
    for (index_t j = 0; j < jn; ++j) dst[j] = src[j];
  }
  bill.add(mode, kRead, static_cast<size64>(b.m_eff) * jn);
}

void update_factor_fastertucker_impl(Model& m, const Hyperparams& h,
                                     const CCache& cache, FlatWorkspace& ws,
                                     int mode, const Bill& bill) {
  const Batch& b = ws.batch;
  const index_t jn = m.ranks[mode];
  compute_d_row_impl(m, cache, ws, mode, bill);
  stage_flat_impl(m, ws, mode, bill);

  // t = B^(n) d^T, shared by every row of the batch.
  const real* bmat = m.b[mode].data();
  for (index_t j = 0; j < jn; ++j) {
    real acc = 0.0f;
    for (index_t col = 0; col < m.r; ++col) {
      acc += bmat[static_cast<std::size_t>(j) * m.r + col] * ws.d_row[col];
    }
    ws.t_vec[j] = acc;
  }
  bill.add(mode, kRead, static_cast<size64>(jn) * m.r);
  bill.add(mode, kBdtStage, static_cast<size64>(jn) * m.r);

  for (index_t row = 0; row < b.m_eff; ++row) {
    const real* arow = ws.a_snap.data() + static_cast<std::size_t>(row) * jn;
    real acc = 0.0f;
    for (index_t j = 0; j < jn; ++j) acc += arow[j] * ws.t_vec[j];
    ws.resid[row] = b.values[row] - acc;
  }
  bill.add(mode, kOther, static_cast<size64>(b.m_eff) * jn);

  // Distinct rows within the bucket: per-row single-sample updates.
  for (index_t row = 0; row < b.m_eff; ++row) {
    const real* snap = ws.a_snap.data() + static_cast<std::size_t>(row) * jn;
    real* dst = m.a_row(mode, b.idx[mode][row]);
    const real rm = ws.resid[row];
    for (index_t j = 0; j < jn; ++j) {
      dst[j] = snap[j] + h.lr_a * (rm * ws.t_vec[j] - h.reg_a * snap[j]);
    }
  }
  bill.add(mode, kUpdate, static_cast<size64>(b.m_eff) * jn);
}

void update_core_fastertucker_impl(Model& m, const Hyperparams& h,
                                   const CCache& cache, FlatWorkspace& ws,
                                   int mode, const Bill& bill) {
  const Batch& b = ws.batch;
  const index_t jn = m.ranks[mode];
  compute_d_row_impl(m, cache, ws, mode, bill);
  stage_flat_impl(m, ws, mode, bill);

  for (index_t row = 0; row < b.m_eff; ++row) {
    auto crow = cache.row(mode, b.idx[mode][row]);
    real acc = 0.0f;
    for (index_t col = 0; col < m.r; ++col) acc += crow[col] * ws.d_row[col];
    ws.resid[row] = b.values[row] - acc;
  }
  bill.add(mode, kRead, static_cast<size64>(b.m_eff) * m.r);
  bill.add(mode, kOther, static_cast<size64>(b.m_eff) * m.r);

  // g = A^T resid, then B += lr_b * (outer(g, d)/M - reg_b * B).
  for (index_t j = 0; j < jn; ++j) ws.g_vec[j] = 0.0f;
  for (index_t row = 0; row < b.m_eff; ++row) {
    const real* arow = ws.a_snap.data() + static_cast<std::size_t>(row) * jn;
    const real rm = ws.resid[row];
    for (index_t j = 0; j < jn; ++j) ws.g_vec[j] += rm * arow[j];
  }
  bill.add(mode, kOther, static_cast<size64>(b.m_eff) * jn);

  real* bdst = m.b[mode].data();
  const real inv = 1.0f / static_cast<real>(b.m_eff);
  for (index_t j = 0; j < jn; ++j) {
    for (index_t col = 0; col < m.r; ++col) {
      const std::size_t at = static_cast<std::size_t>(j) * m.r + col;
      bdst[at] +=
          h.lr_b * (ws.g_vec[j] * ws.d_row[col] * inv - h.reg_b * bdst[at]);
    }
  }
  bill.add(mode, kRead, static_cast<size64>(jn) * m.r);
  bill.add(mode, kBdtStage, static_cast<size64>(jn) * m.r);
  bill.add(mode, kUpdate, static_cast<size64>(jn) * m.r);
}

}  // namespace

void stage_factor_rows(const Model& m, Workspace& ws, int skip_mode,
                       CostCounters* cc) {
  stage_factor_rows_impl(m, ws, skip_mode, make_bill(cc, ws.batch));
}

void compute_c_batch(const CoreTiles& bt, Workspace& ws, int skip_mode,
                     CostCounters* cc) {
  compute_c_batch_impl(bt, ws, skip_mode, make_bill(cc, ws.batch));
}

void compute_d_batch(Workspace& ws, CostCounters* cc) {
  compute_d_batch_impl(ws, make_bill(cc, ws.batch));
}

void compute_d_single(Workspace& ws, int mode, CostCounters* cc) {
  compute_d_single_impl(ws, mode, make_bill(cc, ws.batch, mode));
}

void compute_u_batch(const CoreTiles& bt, Workspace& ws, CostCounters* cc) {
  Bill bill = make_bill(cc, ws.batch);
  for (int n = 0; n < static_cast<int>(ws.u.size()); ++n) {
    compute_u_single_impl(bt, ws, n, bill);
  }
}

void predict_batch_factor_side(Workspace& ws, CostCounters* cc) {
  predict_factor_side_impl(ws, make_bill(cc, ws.batch));
}

void predict_batch_c_side(Workspace& ws, CostCounters* cc) {
  predict_c_side_impl(ws, 0, make_bill(cc, ws.batch));
}

void update_factors_plus(Model& m, const Hyperparams& h, Workspace& ws,
                         CostCounters* cc) {
  update_factors_plus_impl(m, h, ws, make_bill(cc, ws.batch));
}

void accumulate_core_grads_plus(Workspace& ws, CoreGradAccumulator& acc,
                                CostCounters* cc) {
  accumulate_core_grads_plus_impl(ws, acc, make_bill(cc, ws.batch));
}

void apply_core_update(Model& m, const CoreGradAccumulator& acc, size64 omega,
                       const Hyperparams& h, CostCounters* cc) {
  require(omega > 0, "apply_core_update: empty tensor");
  const real inv = 1.0f / static_cast<real>(omega);
  for (int n = 0; n < m.order(); ++n) {
    real* b = m.b[n].data();
    const real* g = acc.grad[n].data();
    const std::size_t len = m.b[n].size();
    for (std::size_t i = 0; i < len; ++i) {
      b[i] += h.lr_b * (g[i] * inv - h.reg_b * b[i]);
    }
    if (cc) cc->add_overhead(kUpdate, static_cast<size64>(len));
  }
}

void update_factor_fasttucker(Model& m, const Hyperparams& h,
                              const CoreTiles& bt, Workspace& ws, int mode,
                              CostCounters* cc) {
  update_factor_fasttucker_impl(m, h, bt, ws, mode,
                                make_bill(cc, ws.batch, mode));
}

void update_core_fasttucker(Model& m, const Hyperparams& h,
                            const CoreTiles& bt, Workspace& ws, int mode,
                            CostCounters* cc) {
  update_core_fasttucker_impl(m, h, bt, ws, mode,
                              make_bill(cc, ws.batch, mode));
}

void update_factor_fastertucker(Model& m, const Hyperparams& h,
                                const CCache& cache, FlatWorkspace& ws,
                                int mode, CostCounters* cc) {
  update_factor_fastertucker_impl(m, h, cache, ws, mode,
                                  make_bill(cc, ws.batch, mode));
}

void update_core_fastertucker(Model& m, const Hyperparams& h,
                              const CCache& cache, FlatWorkspace& ws, int mode,
                              CostCounters* cc) {
  update_core_fastertucker_impl(m, h, cache, ws, mode,
                                make_bill(cc, ws.batch, mode));
}

// ---------------------------------------------------------------------------
// Epoch drivers
// ---------------------------------------------------------------------------

EpochStats epoch_plus(const SparseTensor& t, Model& m, const Hyperparams& h,
                      const EpochOptions& opts, std::uint64_t seed) {
  const int n_modes = m.order();
  const int workers = resolve_workers(opts.workers);
  const index_t cap = opts.canonical_order ? 1 : h.batch_size;

  EpochStats st;
  st.factor.reset(n_modes);
  st.core.reset(n_modes);

  std::vector<Workspace> ws(workers);
  std::vector<CostCounters> cc(workers, CostCounters(n_modes));
  for (auto& w : ws) w.prepare(m, cap);

  // Phase 1: factor updates (Hogwild over factor rows).
  {
    CoreTiles bt = snapshot_core_tiles(m);
    Rng rng(derive_seed(seed, {1}));
    EpochPlan plan = opts.canonical_order ? EpochPlan::canonical(t)
                                          : EpochPlan::global(t, cap, rng);
    Stopwatch sw;
    parallel_for(plan.batches(), workers, [&](int w, size64 bi) {
      Workspace& lws = ws[w];
      plan.gather(t, bi, lws.batch);
      Bill bill = make_bill(&cc[w], lws.batch);
      for (int n = 0; n < n_modes; ++n) {
        cc[w].count_batch(n, bill.full);
        bill.add(n, kRead, static_cast<size64>(m.ranks[n]) * m.r);  // B^(n)
      }
      stage_factor_rows_impl(m, lws, -1, bill);
      compute_c_batch_impl(bt, lws, -1, bill);
      compute_d_batch_impl(lws, bill);
      for (int n = 0; n < n_modes; ++n) compute_u_single_impl(bt, lws, n, bill);
      predict_factor_side_impl(lws, bill);
      update_factors_plus_impl(m, h, lws, bill);
    });
    st.seconds_factor = sw.seconds();
    for (int w = 0; w < workers; ++w) st.factor.merge(cc[w]);
  }

  // Phase 2: core gradients into per-worker accumulators, reduced in worker
  // order, applied once at the barrier.
  {
    for (auto& c : cc) c.reset(n_modes);
    CoreTiles bt = snapshot_core_tiles(m);
    CCache cache;
    if (opts.store_c) cache.build(m, &st.core);

    std::vector<CoreGradAccumulator> acc(workers);
    for (auto& a : acc) a.reset(m);

    Rng rng(derive_seed(seed, {2}));
    EpochPlan plan = opts.canonical_order ? EpochPlan::canonical(t)
                                          : EpochPlan::global(t, cap, rng);
    Stopwatch sw;
    parallel_for(plan.batches(), workers, [&](int w, size64 bi) {
      Workspace& lws = ws[w];
      plan.gather(t, bi, lws.batch);
      Bill bill = make_bill(&cc[w], lws.batch);
      for (int n = 0; n < n_modes; ++n) cc[w].count_batch(n, bill.full);
      stage_factor_rows_impl(m, lws, -1, bill);
      if (opts.store_c) {
        stage_c_rows_from_cache(cache, lws, bill);
      } else {
        for (int n = 0; n < n_modes; ++n) {
          bill.add(n, kRead, static_cast<size64>(m.ranks[n]) * m.r);
        }
        compute_c_batch_impl(bt, lws, -1, bill);
      }
      compute_d_batch_impl(lws, bill);
      predict_c_side_impl(lws, 0, bill);
      accumulate_core_grads_plus_impl(lws, acc[w], bill);
    });
    CoreGradAccumulator total;
    total.reset(m);
    for (int w = 0; w < workers; ++w) total.merge(acc[w]);
    assert(total.contributions == t.nnz());
    apply_core_update(m, total, t.nnz(), h, &st.core);
    st.seconds_core = sw.seconds();
    for (int w = 0; w < workers; ++w) st.core.merge(cc[w]);
  }
  return st;
}

EpochStats epoch_fasttucker(const SparseTensor& t,
                            const std::vector<ModeIndex>& fixed_mode,
                            Model& m, const Hyperparams& h,
                            const EpochOptions& opts, std::uint64_t seed) {
  const int n_modes = m.order();
  require(static_cast<int>(fixed_mode.size()) == n_modes,
          "need one fixed-mode index per mode");
  const int workers = resolve_workers(opts.workers);
  const index_t cap = opts.canonical_order ? 1 : h.batch_size;

  EpochStats st;
  st.factor.reset(n_modes);
  st.core.reset(n_modes);

  std::vector<Workspace> ws(workers);
  std::vector<CostCounters> cc(workers, CostCounters(n_modes));
  for (auto& w : ws) w.prepare(m, cap);

  const CoreTiles bt = snapshot_core_tiles(m);

  // Factor blocks: per-bucket batches share one factor row.
  {
    Stopwatch sw;
    for (int mode = 0; mode < n_modes; ++mode) {
      Rng rng(derive_seed(seed, {1, static_cast<std::uint64_t>(mode)}));
      EpochPlan plan =
          opts.canonical_order
              ? EpochPlan::canonical(t)
              : EpochPlan::per_bucket(t, fixed_mode[mode], cap, rng);
      parallel_for(plan.batches(), workers, [&, mode](int w, size64 bi) {
        plan.gather(t, bi, ws[w].batch);
        cc[w].count_batch(mode, ws[w].batch.full());
        update_factor_fasttucker_impl(m, h, bt, ws[w], mode,
                                      make_bill(&cc[w], ws[w].batch, mode));
      });
    }
    st.seconds_factor = sw.seconds();
    for (int w = 0; w < workers; ++w) {
      st.factor.merge(cc[w]);
      cc[w].reset(n_modes);
    }
  }

  // Core blocks: global batches, B^(n) updated immediately per batch.  The
  // other cores changed in earlier blocks, so the tile snapshot is retaken
  // at each block boundary.
  {
    Stopwatch sw;
    for (int mode = 0; mode < n_modes; ++mode) {
      const CoreTiles block_bt = snapshot_core_tiles(m);
      Rng rng(derive_seed(seed, {2, static_cast<std::uint64_t>(mode)}));
      EpochPlan plan = opts.canonical_order ? EpochPlan::canonical(t)
                                            : EpochPlan::global(t, cap, rng);
      parallel_for(plan.batches(), workers, [&, mode](int w, size64 bi) {
        plan.gather(t, bi, ws[w].batch);
        cc[w].count_batch(mode, ws[w].batch.full());
        update_core_fasttucker_impl(m, h, block_bt, ws[w], mode,
                                    make_bill(&cc[w], ws[w].batch, mode));
      });
    }
    st.seconds_core = sw.seconds();
    for (int w = 0; w < workers; ++w) st.core.merge(cc[w]);
  }
  return st;
}

EpochStats epoch_fastertucker(const SparseTensor& t,
                              const std::vector<ModeIndex>& complement,
                              Model& m, CCache& cache, const Hyperparams& h,
                              const EpochOptions& opts, std::uint64_t seed) {
  const int n_modes = m.order();
  require(static_cast<int>(complement.size()) == n_modes,
          "need one complement index per mode");
  require(cache.ready(), "C cache must be built before the first epoch");
  const int workers = resolve_workers(opts.workers);
  const index_t cap = opts.canonical_order ? 1 : h.batch_size;

  EpochStats st;
  st.factor.reset(n_modes);
  st.core.reset(n_modes);

  std::vector<FlatWorkspace> ws(workers);
  std::vector<CostCounters> cc(workers, CostCounters(n_modes));
  for (auto& w : ws) w.prepare(m, cap);

  // Factor blocks; the mode's own cache rows go stale while its factor rows
  // move, and are refreshed at the block barrier (Alg. cadence).
  {
    Stopwatch sw;
    for (int mode = 0; mode < n_modes; ++mode) {
      cache.mark_stale(mode);
      Rng rng(derive_seed(seed, {1, static_cast<std::uint64_t>(mode)}));
      EpochPlan plan =
          opts.canonical_order
              ? EpochPlan::canonical(t)
              : EpochPlan::per_bucket(t, complement[mode], cap, rng);
      parallel_for(plan.batches(), workers, [&, mode](int w, size64 bi) {
        plan.gather(t, bi, ws[w].batch);
        cc[w].count_batch(mode, ws[w].batch.full());
        update_factor_fastertucker_impl(m, h, cache, ws[w], mode,
                                        make_bill(&cc[w], ws[w].batch, mode));
        if (opts.eager_refresh) cache.refresh(m, mode, nullptr);
      });
      cache.refresh(m, mode, &cc[0]);
    }
    st.seconds_factor = sw.seconds();
    for (int w = 0; w < workers; ++w) {
      st.factor.merge(cc[w]);
      cc[w].reset(n_modes);
    }
  }

  // Core blocks: mode-n C rows are read at block-entry freshness while B^(n)
  // moves per batch; refresh happens at the block barrier.
  {
    Stopwatch sw;
    for (int mode = 0; mode < n_modes; ++mode) {
      cache.mark_stale(mode);
      Rng rng(derive_seed(seed, {2, static_cast<std::uint64_t>(mode)}));
      EpochPlan plan =
          opts.canonical_order
              ? EpochPlan::canonical(t)
              : EpochPlan::per_bucket(t, complement[mode], cap, rng);
      parallel_for(plan.batches(), workers, [&, mode](int w, size64 bi) {
        plan.gather(t, bi, ws[w].batch);
        cc[w].count_batch(mode, ws[w].batch.full());
        update_core_fastertucker_impl(m, h, cache, ws[w], mode,
                                      make_bill(&cc[w], ws[w].batch, mode));
        if (opts.eager_refresh) cache.refresh(m, mode, nullptr);
      });
      cache.refresh(m, mode, &cc[0]);
    }
    st.seconds_core = sw.seconds();
    for (int w = 0; w < workers; ++w) st.core.merge(cc[w]);
  }
  return st;
}

// ---------------------------------------------------------------------------
// Training driver
// ---------------------------------------------------------------------------

History train(const SparseTensor& train_set, const SparseTensor* test_set,
              Model& m, const Hyperparams& h, const TrainOptions& opts) {
  h.validate();
  m.validate();
  require(m.order() == train_set.order, "model/tensor order mismatch");
  for (int n = 0; n < m.order(); ++n) {
    require(m.dims[n] >= train_set.dims[n], "model dims too small for tensor");
  }
  const int workers = resolve_workers(opts.workers);

  EpochOptions eo;
  eo.workers = workers;
  eo.store_c = opts.store_c;

  std::vector<ModeIndex> idx;
  CCache cache;
  if (opts.variant == Variant::kFastTucker) {
    for (int n = 0; n < m.order(); ++n) {
      idx.push_back(build_mode_index(train_set, n, Keying::kFixedMode));
    }
  } else if (opts.variant == Variant::kFasterTucker) {
    for (int n = 0; n < m.order(); ++n) {
      idx.push_back(build_mode_index(train_set, n, Keying::kFixedComplement));
    }
    cache.build(m, nullptr);
  }

  History hist;
  for (int epoch = 1; epoch <= h.epochs; ++epoch) {
    std::uint64_t es =
        derive_seed(opts.seed, {static_cast<std::uint64_t>(epoch)});
    EpochStats stats;
    switch (opts.variant) {
      case Variant::kPlus:
        stats = epoch_plus(train_set, m, h, eo, es);
        break;
      case Variant::kFastTucker:
        stats = epoch_fasttucker(train_set, idx, m, h, eo, es);
        break;
      case Variant::kFasterTucker:
        stats = epoch_fastertucker(train_set, idx, m, cache, h, eo, es);
        break;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.stats = stats;
    rec.seconds = stats.seconds_factor + stats.seconds_core;
    rec.train_loss = loss(m, train_set, h.reg_a, h.reg_b, workers);
    if (test_set != nullptr && test_set->nnz() > 0) {
      Metrics mt = evaluate(m, *test_set, workers);
      rec.test_rmse = mt.rmse;
      rec.test_mae = mt.mae;
    } else {
      rec.test_rmse = std::numeric_limits<double>::quiet_NaN();
      rec.test_mae = std::numeric_limits<double>::quiet_NaN();
    }
    rec.reads = stats.factor.total(kRead) + stats.core.total(kRead);
    rec.mults = stats.factor.total(kDStage) + stats.factor.total(kBdtStage) +
                stats.factor.total(kOther) + stats.core.total(kDStage) +
                stats.core.total(kBdtStage) + stats.core.total(kOther);
    if (!std::isfinite(rec.train_loss)) {
      fail("training diverged: non-finite loss at epoch " +
           std::to_string(epoch));
    }
    hist.push_back(std::move(rec));
  }
  return hist;
}

std::string history_line_json(const EpochRecord& r) {
  nlohmann::json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["test_rmse"] = r.test_rmse;
  j["test_mae"] = r.test_mae;
  j["seconds"] = r.seconds;
  j["reads"] = r.reads;
  j["mults"] = r.mults;
  return j.dump();
}

void write_history_jsonl(const History& h, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write " + path);
  for (const auto& r : h) out << history_line_json(r) << '\n';
  require(out.good(), "write failed: " + path);
}

void write_history_csv(const History& h, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write " + path);
  out << "epoch,train_loss,test_rmse,test_mae,seconds,reads,mults\n";
  for (const auto& r : h) {
    out << r.epoch << ',' << r.train_loss << ',' << r.test_rmse << ','
        << r.test_mae << ',' << r.seconds << ',' << r.reads << ',' << r.mults
        << '\n';
  }
  require(out.good(), "write failed: " + path);
}

}  // namespace ftk
