#pragma once

#include <span>
#include <string>
#include <vector>

#include "ftk/common.hpp"

namespace ftk {

// Order-N COO store.  Indices are 0-based in memory; the text format is
// 1-based (FROSTT convention).  Read-only after construction; safe to share
// across workers.
struct SparseTensor {
  int order = 0;
  std::vector<index_t> dims;     // I_n
  std::vector<index_t> indices;  // nnz x order, row-major
  std::vector<real> values;      // nnz

  size64 nnz() const { return static_cast<size64>(values.size()); }

  std::span<const index_t> entry(size64 pos) const {
    return {indices.data() + pos * order, static_cast<std::size_t>(order)};
  }

  void push(std::span<const index_t> idx, real value) {
    indices.insert(indices.end(), idx.begin(), idx.end());
    values.push_back(value);
  }

  // Checks index ranges, finiteness and tuple uniqueness.
  void validate() const;
};

// Text COO format: `i_1 ... i_N value` per line, 1-based indices, `#` comment
// lines ignored.  An optional leading `# dims: I_1 ... I_N` comment overrides
// inferred dims.  Duplicate tuples and out-of-range indices are errors.
SparseTensor load_coo(const std::string& path, int order);
void save_coo(const SparseTensor& t, const std::string& path);

// Order of the tensor in a COO file: token count of the first data line
// minus one (the value).
int infer_coo_order(const std::string& path);

// Disjoint seeded split; |test| = round(fraction * nnz).
std::pair<SparseTensor, SparseTensor> split_train_test(const SparseTensor& t,
                                                       double test_fraction,
                                                       std::uint64_t seed);

enum class Keying {
  kFixedMode,        // bucket = entries whose mode-n index equals i_n
  kFixedComplement,  // bucket = entries sharing all indices except mode n
};

// Entry positions grouped into buckets for one mode and keying.  Buckets are
// disjoint and jointly cover the tensor.
struct ModeIndex {
  int mode = 0;
  Keying keying = Keying::kFixedMode;
  std::vector<size64> positions;  // grouped entry positions
  std::vector<size64> offsets;    // bucket b spans [offsets[b], offsets[b+1])

  size64 buckets() const { return static_cast<size64>(offsets.size()) - 1; }
  std::span<const size64> bucket(size64 b) const {
    return {positions.data() + offsets[b],
            static_cast<std::size_t>(offsets[b + 1] - offsets[b])};
  }
  // Any member entry carries the bucket key; this returns the first.
  size64 representative(size64 b) const { return positions[offsets[b]]; }
};

ModeIndex build_mode_index(const SparseTensor& t, int mode, Keying keying);

// One batch of sampled nonzeros, staged as columns.  Rows beyond m_eff are
// padding: value 0, index 0, excluded from all updates.
struct Batch {
  index_t m = 0;      // configured batch size (row capacity)
  index_t m_eff = 0;  // live rows
  size64 bucket = -1; // source bucket, -1 for the global sampler
  std::vector<real> values;             // m entries
  std::vector<std::vector<index_t>> idx;  // per mode, m entries

  bool full() const { return m_eff == m; }
  void stage(const SparseTensor& t, std::span<const size64> rows, index_t m_cap,
             size64 bucket_id);
};

// Descriptor of one batch inside an epoch plan.
struct BatchDesc {
  size64 offset = 0;
  size64 len = 0;
  size64 bucket = -1;
};

// One epoch of batches over a permutation of entry positions.  For the
// global regime (the whole tensor, FastTuckerPlus row of the sampling table)
// the permutation covers the tensor; for the per-mode regimes each bucket is
// permuted and cut separately, so every batch stays inside one bucket.
class EpochPlan {
 public:
  static EpochPlan global(const SparseTensor& t, index_t m, Rng& rng);
  // Bucket iteration order is shuffled per epoch (the pseudocode loops keys
  // in order; see README notes).  Short buckets yield short batches.
  static EpochPlan per_bucket(const SparseTensor& t, const ModeIndex& idx,
                              index_t m, Rng& rng);
  // Test hook: entries in storage order, one per batch.  A singleton batch
  // is a valid batch of every sampling regime, so different variants can be
  // driven through the identical update sequence.
  static EpochPlan canonical(const SparseTensor& t);

  size64 batches() const { return static_cast<size64>(descs_.size()); }
  const BatchDesc& desc(size64 b) const { return descs_[b]; }
  void gather(const SparseTensor& t, size64 b, Batch& out) const;

 private:
  index_t m_ = 0;
  std::vector<size64> perm_;
  std::vector<BatchDesc> descs_;
};

}  // namespace ftk
