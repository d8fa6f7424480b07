#include "ftk/evaluation.hpp"

#include <cmath>
#include <vector>

namespace ftk {

namespace {

// Splits [0, n) into contiguous slabs, one per worker, and sums f over each
// slab in entry order.  Slab sums are combined in worker order, so results
// do not depend on scheduling.
template <typename F>
std::vector<double> slab_sums(size64 n, int workers, F&& f) {
  workers = std::max(1, workers);
  std::vector<double> sums(workers, 0.0);
  size64 chunk = (n + workers - 1) / std::max<size64>(1, workers);
  parallel_for(workers, workers, [&](int, size64 w) {
    size64 lo = w * chunk;
    size64 hi = std::min(n, lo + chunk);
    double acc = 0.0;
    for (size64 i = lo; i < hi; ++i) acc += f(i);
    sums[static_cast<std::size_t>(w)] = acc;
  });
  return sums;
}

double combine(const std::vector<double>& sums) {
  double acc = 0.0;
  for (double s : sums) acc += s;
  return acc;
}

}  // namespace

double loss(const Model& m, const SparseTensor& t, double reg_a, double reg_b,
            int workers) {
  double data = combine(slab_sums(t.nnz(), workers, [&](size64 i) {
    double r = static_cast<double>(t.values[i]) - predict_element(m, t.entry(i));
    return r * r;
  }));
  double reg = 0.0;
  for (const auto& mat : m.a) {
    double sq = 0.0;
    for (real v : mat) sq += static_cast<double>(v) * v;
    reg += reg_a * sq;
  }
  for (const auto& mat : m.b) {
    double sq = 0.0;
    for (real v : mat) sq += static_cast<double>(v) * v;
    reg += reg_b * sq;
  }
  return data + reg;
}

Metrics evaluate(const Model& m, const SparseTensor& testset, int workers) {
  require(testset.nnz() > 0, "empty evaluation set");
  double sq = combine(slab_sums(testset.nnz(), workers, [&](size64 i) {
    double r = static_cast<double>(testset.values[i]) -
               predict_element(m, testset.entry(i));
    return r * r;
  }));
  double ab = combine(slab_sums(testset.nnz(), workers, [&](size64 i) {
    return std::abs(static_cast<double>(testset.values[i]) -
                    predict_element(m, testset.entry(i)));
  }));
  Metrics out;
  out.samples = testset.nnz();
  out.rmse = std::sqrt(sq / static_cast<double>(out.samples));
  out.mae = ab / static_cast<double>(out.samples);
  return out;
}

double rmse(const Model& m, const SparseTensor& testset, int workers) {
  return evaluate(m, testset, workers).rmse;
}

double mae(const Model& m, const SparseTensor& testset, int workers) {
  return evaluate(m, testset, workers).mae;
}

}  // namespace ftk
