#pragma once

#include <array>
#include <string>
#include <vector>

#include "ftk/common.hpp"

namespace ftk {

enum class Variant { kFastTucker, kFasterTucker, kPlus };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

// Instrumentation stages, matching the complexity accounting: parameter
// loads, the D-stage multiplies (computing C slices and combining them), the
// B.D^T-style tile products, and parameter writes.  Work outside those
// categories (predictions, AXPYs, cache refreshes) lands in kOther and is
// reported but never checked against the closed forms.
enum Stage : int { kRead = 0, kDStage, kBdtStage, kUpdate, kOther, kStages };

// Per-epoch tallies of logical parameter reads and multiplications, kept per
// mode so short and full batches can be told apart.  A "batch unit" is one
// batch for the global sampler and one (mode, batch) pair for the per-mode
// samplers; the global sampler bills every mode from the same batch.
class CostCounters {
 public:
  CostCounters() = default;
  explicit CostCounters(int modes) { reset(modes); }

  void reset(int modes);
  int modes() const { return static_cast<int>(totals_.size()); }

  // Adds `amount` to (mode, stage); `full` marks amounts from full batches.
  void add(int mode, Stage s, size64 amount, bool full) {
    totals_[mode][s] += amount;
    if (full) full_totals_[mode][s] += amount;
  }
  void count_batch(int mode, bool full) {
    ++batch_units_[mode];
    if (full) ++full_batch_units_[mode];
  }
  // Phase-level work not attributable to any batch (e.g. cache refresh).
  void add_overhead(Stage s, size64 amount) { overhead_[s] += amount; }

  void merge(const CostCounters& other);

  size64 total(Stage s) const;
  size64 overhead(Stage s) const { return overhead_[s]; }
  size64 batch_units(int mode) const { return batch_units_[mode]; }
  size64 full_batch_units(int mode) const { return full_batch_units_[mode]; }

  // Per-full-batch cost summed over modes ("total for all n").  Requires at
  // least one full batch unit in every mode; full-batch tallies of one mode
  // must divide evenly (they do by construction: all full batches of a mode
  // perform identical work).
  size64 per_full_batch(Stage s) const;
  bool has_full_batches() const;

 private:
  std::vector<std::array<size64, kStages>> totals_;
  std::vector<std::array<size64, kStages>> full_totals_;
  std::vector<size64> batch_units_, full_batch_units_;
  std::array<size64, kStages> overhead_{};
};

// Closed-form per-full-batch costs from the complexity analysis, summed over
// all modes.  reads: FastTucker (MN-M+R+1)*sum J; FasterTucker
// (M+R)*sum J + N(N-1)R; Plus (M+R)*sum J.  d_stage, bdt_stage and update
// follow the same table.
struct PredictedCosts {
  size64 reads = 0;
  size64 d_stage = 0;
  size64 bdt_stage = 0;
  size64 update = 0;
};

PredictedCosts predicted_costs(int order, index_t m, index_t r,
                               std::span<const index_t> ranks, Variant v);

// Per-full-batch measurements extracted from an instrumented epoch.
PredictedCosts measured_costs(const CostCounters& c);

}  // namespace ftk
