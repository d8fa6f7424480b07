#pragma once

#include "ftk/model.hpp"
#include "ftk/sparse_tensor.hpp"

namespace ftk {

struct Metrics {
  double rmse = 0.0;
  double mae = 0.0;
  size64 samples = 0;
};

// Regularized squared loss: sum over entries of (x - x_hat)^2 plus
// reg_a * sum_n |A^(n)|_F^2 + reg_b * sum_n |B^(n)|_F^2 (the mode sums are
// applied once, not per entry).  Evaluated in double.
double loss(const Model& m, const SparseTensor& t, double reg_a, double reg_b,
            int workers = 1);

// RMSE / MAE over a nonempty evaluation set, deterministic tree-free
// reduction in entry order per worker slab, merged in worker order.
Metrics evaluate(const Model& m, const SparseTensor& testset, int workers = 1);

double rmse(const Model& m, const SparseTensor& testset, int workers = 1);
double mae(const Model& m, const SparseTensor& testset, int workers = 1);

}  // namespace ftk
