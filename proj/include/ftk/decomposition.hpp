#pragma once

#include <string>
#include <vector>

#include "ftk/counters.hpp"
#include "ftk/evaluation.hpp"
#include "ftk/model.hpp"
#include "ftk/sparse_tensor.hpp"
#include "ftk/tiles.hpp"

namespace ftk {

// Tiled snapshots of the core matrices, taken once per phase (the cores are
// read-only between barriers except where a variant updates them per batch).
struct CoreTiles {
  std::vector<TiledMatrix> b;    // J_n x R
  std::vector<TiledMatrix> b_t;  // R x J_n
};

CoreTiles snapshot_core_tiles(const Model& m);

// Full C^(n) = A^(n) B^(n) (I_n x R per mode) kept in memory, with staleness
// flags.  FasterTucker refreshes one mode after each mode block; the plus
// core phase rebuilds everything when running in storage mode.
class CCache {
 public:
  void init(const Model& m);
  void build(const Model& m, CostCounters* cc);
  void refresh(const Model& m, int mode, CostCounters* cc);
  void mark_stale(int mode) { fresh_[mode] = 0; }
  bool fresh(int mode) const { return fresh_[mode] != 0; }
  bool ready() const { return !c_.empty(); }

  std::span<const real> row(int mode, index_t i) const {
    return {c_[mode].data() + static_cast<std::size_t>(i) * r_,
            static_cast<std::size_t>(r_)};
  }

 private:
  std::vector<std::vector<real>> c_;
  std::vector<char> fresh_;
  index_t r_ = 0;
};

// Per-worker batch scratch.  Rows at and beyond batch.m_eff are padding and
// stay zero in every buffer.
struct Workspace {
  Batch batch;
  std::vector<TiledMatrix> a_rows;  // staged A^(n)_Psi, M x J_n
  std::vector<TiledMatrix> c;       // C^(n)_Psi, M x R
  std::vector<TiledMatrix> d;       // D^(n)_Psi, M x R
  std::vector<TiledMatrix> u;       // D^(n) B^(n)T, M x J_n
  std::vector<TiledMatrix> e;       // (X - Xhat) rhad A^(n)_Psi, M x J_n
  std::vector<TiledMatrix> e_t;     // E^(n)T, J_n x M
  std::vector<TiledMatrix> g;       // E^(n)T D^(n), J_n x R
  std::vector<real> xhat, resid;    // M
  std::vector<real> row_scratch;    // flat J / R sized scratch
  TiledMatrix b_current;            // per-batch core retile (FastTucker core)

  void prepare(const Model& m, index_t batch_cap);
  index_t capacity() const { return cap_; }

 private:
  index_t cap_ = 0;
};

// Epoch-accumulated core gradients (residual-positive convention: the apply
// step adds lr_b * grad / |Omega|).
struct CoreGradAccumulator {
  std::vector<std::vector<real>> grad;  // per mode, J_n x R
  size64 contributions = 0;

  void reset(const Model& m);
  void merge(const CoreGradAccumulator& other);
};

// ---------------------------------------------------------------------------
// Per-batch pipeline.  Drivers call these in order; each documents what it
// expects to be fresh.  All counter billing is per batch with `full`
// distinguishing full batches; pass nullptr to skip instrumentation.
// ---------------------------------------------------------------------------

// Gathers factor rows of every mode (skip_mode < 0) or all but one mode into
// ws.a_rows; padding rows zeroed.  Bills reads of m_eff * J_n per mode.
void stage_factor_rows(const Model& m, Workspace& ws, int skip_mode,
                       CostCounters* cc);

// C^(n) = A_rows^(n) * B^(n) for every staged mode; bills the multiplies to
// the D stage and the core-matrix loads to reads.
void compute_c_batch(const CoreTiles& bt, Workspace& ws, int skip_mode,
                     CostCounters* cc);

// All D^(n) at once with the shared-product schedule: each C enters every
// other mode's product exactly once, first contribution by copy, so a batch
// costs m_eff * R * (N-2) multiplies per mode.
void compute_d_batch(Workspace& ws, CostCounters* cc);

// Single D^(n) for the per-mode variants: product over k != mode of C^(k).
void compute_d_single(Workspace& ws, int mode, CostCounters* cc);

// U^(n) = D^(n) * B^(n)T for all modes (the factor-phase tile products).
void compute_u_batch(const CoreTiles& bt, Workspace& ws, CostCounters* cc);

// Xhat and residual via the factor-side identity (A^(1) against U^(1));
// requires compute_u_batch.
void predict_batch_factor_side(Workspace& ws, CostCounters* cc);

// Xhat and residual via the C-side identity (row dot of C^(1) and D^(1)).
void predict_batch_c_side(Workspace& ws, CostCounters* cc);

// Simultaneous factor update, Eq.-(14) form: per mode, rows become
// A + lr_a * (resid rhad U - reg_a * A), evaluated from the staged snapshot
// and scattered back in row order.  Masked rows untouched.
void update_factors_plus(Model& m, const Hyperparams& h, Workspace& ws,
                         CostCounters* cc);

// Core-gradient contributions E^(n)T * D^(n) added into acc; model unchanged.
void accumulate_core_grads_plus(Workspace& ws, CoreGradAccumulator& acc,
                                CostCounters* cc);

// B^(n) += lr_b * (grad^(n) / omega - reg_b * B^(n)) for all modes.
void apply_core_update(Model& m, const CoreGradAccumulator& acc, size64 omega,
                       const Hyperparams& h, CostCounters* cc);

// ---------------------------------------------------------------------------
// Single-batch steps of the convex block variants
// ---------------------------------------------------------------------------

// FastTucker factor step: the batch is a fixed-mode bucket slice (all rows
// share i_n); the shared row moves by the 1/M batch-mean gradient.
void update_factor_fasttucker(Model& m, const Hyperparams& h,
                              const CoreTiles& bt, Workspace& ws, int mode,
                              CostCounters* cc);

// FastTucker core step: a global batch updates B^(n) immediately with the
// 1/M batch mean; C^(n) is recomputed from the current core matrix.
void update_core_fasttucker(Model& m, const Hyperparams& h,
                            const CoreTiles& bt, Workspace& ws, int mode,
                            CostCounters* cc);

// Flat row-vector scratch for the cached-C variant.
struct FlatWorkspace {
  Batch batch;
  std::vector<real> d_row, t_vec, g_vec, a_snap, xhat, resid;
  void prepare(const Model& m, index_t batch_cap);
};

// FasterTucker factor step over a fixed-complement bucket slice: one shared
// d row from cached C rows (k != mode must be fresh), per-row single-sample
// updates of distinct factor rows.
void update_factor_fastertucker(Model& m, const Hyperparams& h,
                                const CCache& cache, FlatWorkspace& ws,
                                int mode, CostCounters* cc);

// FasterTucker core step: same shared d row, predictions from cached mode-n
// C rows, B^(n) moves by the 1/M batch mean.
void update_core_fastertucker(Model& m, const Hyperparams& h,
                              const CCache& cache, FlatWorkspace& ws, int mode,
                              CostCounters* cc);

// ---------------------------------------------------------------------------
// Epoch drivers
// ---------------------------------------------------------------------------

struct EpochOptions {
  int workers = 1;
  // Test hook: iterate entries in storage order as single-sample batches so
  // different variants see the identical update sequence.
  bool canonical_order = false;
  // Test hook: FasterTucker refreshes the cache after every batch instead of
  // after every mode block.
  bool eager_refresh = false;
  // Plus core phase reads C rows from a prebuilt cache instead of computing
  // them (the calculate-vs-store trade-off).
  bool store_c = false;
};

struct EpochStats {
  double seconds_factor = 0.0;
  double seconds_core = 0.0;
  CostCounters factor;
  CostCounters core;
};

// Non-convex variant: one Hogwild pass updating all factor rows per batch,
// then one pass accumulating core gradients, reduced deterministically in
// worker order and applied once.
EpochStats epoch_plus(const SparseTensor& t, Model& m, const Hyperparams& h,
                      const EpochOptions& opts, std::uint64_t seed);

// Convex block scheme over fixed-mode buckets (factor rows) and global
// batches (cores, updated immediately with the 1/M batch mean).
EpochStats epoch_fasttucker(const SparseTensor& t,
                            const std::vector<ModeIndex>& fixed_mode,
                            Model& m, const Hyperparams& h,
                            const EpochOptions& opts, std::uint64_t seed);

// Convex block scheme over fixed-complement buckets with cached C rows; the
// cache must be ready and fresh on entry and is refreshed per mode block.
EpochStats epoch_fastertucker(const SparseTensor& t,
                              const std::vector<ModeIndex>& complement,
                              Model& m, CCache& cache, const Hyperparams& h,
                              const EpochOptions& opts, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training driver
// ---------------------------------------------------------------------------

struct TrainOptions {
  Variant variant = Variant::kPlus;
  bool store_c = false;
  int workers = 1;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double test_rmse = 0.0;  // NaN when no test set
  double test_mae = 0.0;
  double seconds = 0.0;
  size64 reads = 0;
  size64 mults = 0;
  EpochStats stats;
};

using History = std::vector<EpochRecord>;

// Runs hyper.epochs epochs of the chosen variant, recording loss, metrics,
// timing and counters per epoch.  Aborts with a diagnostic if the loss goes
// non-finite.  store_c only affects the plus core phase; the factor phase
// always computes C live.
History train(const SparseTensor& train_set, const SparseTensor* test_set,
              Model& m, const Hyperparams& h, const TrainOptions& opts);

// History rows as JSON lines / flat CSV.
void write_history_jsonl(const History& h, const std::string& path);
void write_history_csv(const History& h, const std::string& path);
std::string history_line_json(const EpochRecord& r);

}  // namespace ftk
