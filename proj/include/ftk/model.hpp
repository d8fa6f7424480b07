#pragma once

#include <span>
#include <string>
#include <vector>

#include "ftk/common.hpp"

namespace ftk {

struct Hyperparams {
  real lr_a = 1e-3f;   // factor learning rate
  real lr_b = 1e-3f;   // core learning rate
  real reg_a = 1e-4f;  // factor regularization
  real reg_b = 1e-4f;  // core regularization
  int epochs = 50;
  index_t batch_size = 16;

  void validate() const {
    require(lr_a > 0 && lr_b > 0, "learning rates must be positive");
    require(reg_a >= 0 && reg_b >= 0, "regularization must be non-negative");
    require(epochs >= 0, "epoch count must be non-negative");
    require(batch_size >= 1, "batch size must be positive");
  }
};

// Factor matrices A^(n) (I_n x J_n) and core matrices B^(n) (J_n x R),
// row-major.  Factor rows may be written concurrently by workers during
// training (Hogwild contract: torn row updates are tolerated, convergence is
// the correctness criterion).  Core matrices change only at phase barriers.
struct Model {
  std::vector<index_t> dims;   // I_n
  std::vector<index_t> ranks;  // J_n
  index_t r = 0;               // shared low rank R
  std::vector<std::vector<real>> a;  // per mode, I_n x J_n
  std::vector<std::vector<real>> b;  // per mode, J_n x R

  int order() const { return static_cast<int>(dims.size()); }

  real* a_row(int mode, index_t i) {
    return a[mode].data() + static_cast<std::size_t>(i) * ranks[mode];
  }
  const real* a_row(int mode, index_t i) const {
    return a[mode].data() + static_cast<std::size_t>(i) * ranks[mode];
  }

  void validate() const;
};

// Entries i.i.d. uniform on [0, scale); deterministic under seed.
Model init_model(std::span<const index_t> dims, std::span<const index_t> ranks,
                 index_t r, std::uint64_t seed, real scale);

// Initialization scale that puts initial predictions at the magnitude of the
// data: solves R * (J * s^2 / 4)^N = mean|x| for s, with J the geometric mean
// of the ranks.
real default_init_scale(double mean_abs_value, int order, index_t r,
                        std::span<const index_t> ranks);

// x_hat = sum_r prod_n (a^(n) row i_n . b^(n) column r), accumulated in
// double.  This is the element form of the factored Tucker model.
double predict_element(const Model& m, std::span<const index_t> idx);

// Dense core tensor: G[j_1..j_N] = sum_r prod_n b^(n)[j_n, r].  Guarded to
// test scale (at most 1e6 cells); cells are laid out row-major over j.
std::vector<double> materialize_core(const Model& m);

// Self-describing binary, little-endian float32 payload.
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

}  // namespace ftk
