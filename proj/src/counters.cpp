#include "ftk/counters.hpp"

#include <numeric>

namespace ftk {

Variant parse_variant(const std::string& name) {
  if (name == "fasttucker") return Variant::kFastTucker;
  if (name == "fastertucker") return Variant::kFasterTucker;
  if (name == "plus") return Variant::kPlus;
  fail("unknown variant '" + name + "' (fasttucker|fastertucker|plus)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFastTucker: return "fasttucker";
    case Variant::kFasterTucker: return "fastertucker";
    case Variant::kPlus: return "plus";
  }
  return "?";
}

void CostCounters::reset(int modes) {
  totals_.assign(modes, {});
  full_totals_.assign(modes, {});
  batch_units_.assign(modes, 0);
  full_batch_units_.assign(modes, 0);
  overhead_.fill(0);
}

void CostCounters::merge(const CostCounters& other) {
  require(modes() == other.modes(), "counter mode mismatch");
  for (int n = 0; n < modes(); ++n) {
    for (int s = 0; s < kStages; ++s) {
      totals_[n][s] += other.totals_[n][s];
      full_totals_[n][s] += other.full_totals_[n][s];
    }
    batch_units_[n] += other.batch_units_[n];
    full_batch_units_[n] += other.full_batch_units_[n];
  }
  for (int s = 0; s < kStages; ++s) overhead_[s] += other.overhead_[s];
}

size64 CostCounters::total(Stage s) const {
  size64 acc = overhead_[s];
  for (const auto& t : totals_) acc += t[s];
  return acc;
}

bool CostCounters::has_full_batches() const {
  for (size64 f : full_batch_units_) {
    if (f == 0) return false;
  }
  return !full_batch_units_.empty();
}

size64 CostCounters::per_full_batch(Stage s) const {
  require(has_full_batches(), "no full batches recorded in some mode");
  size64 acc = 0;
  for (int n = 0; n < modes(); ++n) {
    size64 amount = full_totals_[n][s];
    size64 units = full_batch_units_[n];
    require(amount % units == 0, "uneven full-batch tallies");
    acc += amount / units;
  }
  return acc;
}

PredictedCosts predicted_costs(int order, index_t m, index_t r,
                               std::span<const index_t> ranks, Variant v) {
  require(order >= 1 && m >= 1 && r >= 1, "positive arguments required");
  require(static_cast<int>(ranks.size()) == order, "ranks arity mismatch");
  const size64 n = order;
  const size64 mm = m;
  const size64 rr = r;
  size64 sum_j = 0;
  for (index_t j : ranks) {
    require(j >= 1, "positive ranks required");
    sum_j += j;
  }
  PredictedCosts p;
  switch (v) {
    case Variant::kFastTucker:
      p.reads = (mm * n - mm + rr + 1) * sum_j;
      p.d_stage = mm * rr * ((n - 1) * sum_j + n * (n - 2));
      p.bdt_stage = mm * rr * sum_j;
      p.update = sum_j;
      break;
    case Variant::kFasterTucker:
      p.reads = (mm + rr) * sum_j + n * (n - 1) * rr;
      p.d_stage = n * (n - 2) * rr;
      p.bdt_stage = rr * sum_j;
      p.update = mm * sum_j;
      break;
    case Variant::kPlus:
      p.reads = (mm + rr) * sum_j;
      p.d_stage = mm * rr * (sum_j + n * (n - 2));
      p.bdt_stage = mm * rr * sum_j;
      p.update = mm * sum_j;
      break;
  }
  return p;
}

PredictedCosts measured_costs(const CostCounters& c) {
  PredictedCosts p;
  p.reads = c.per_full_batch(kRead);
  p.d_stage = c.per_full_batch(kDStage);
  p.bdt_stage = c.per_full_batch(kBdtStage);
  p.update = c.per_full_batch(kUpdate);
  return p;
}

}  // namespace ftk
