#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "ftk/evaluation.hpp"
#include "ftk/model.hpp"
#include "ftk/synthgen.hpp"
#include "oracles.hpp"

using namespace ftk;

TEST_CASE("init_model shapes and determinism") {
  std::vector<index_t> dims{4, 4, 4}, ranks{2, 2, 2};
  Model m = init_model(dims, ranks, 3, 1, 0.5f);
  REQUIRE(m.order() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(m.a[k].size() == 8);
    CHECK(m.b[k].size() == 6);
    for (real v : m.a[k]) {
      CHECK(v >= 0.0f);
      CHECK(v < 0.5f);
    }
  }
  Model m2 = init_model(dims, ranks, 3, 1, 0.5f);
  CHECK(m2.a == m.a);
  CHECK(m2.b == m.b);
  Model m3 = init_model(dims, ranks, 3, 2, 0.5f);
  CHECK(m3.a != m.a);

  CHECK_THROWS_AS(init_model(dims, ranks, 3, 1, 0.0f), Error);
  std::vector<index_t> zero_rank{2, 0, 2};
  CHECK_THROWS_AS(init_model(dims, zero_rank, 3, 1, 0.5f), Error);
}

TEST_CASE("predict_element closed forms") {
  std::vector<index_t> dims{4, 4, 4}, ranks{2, 2, 2};
  Model m = init_model(dims, ranks, 3, 1, 0.5f);
  for (auto& mat : m.a) std::fill(mat.begin(), mat.end(), 1.0f);
  for (auto& mat : m.b) std::fill(mat.begin(), mat.end(), 1.0f);
  std::vector<index_t> idx{0, 1, 2};
  // every c = J = 2, product 8, times R = 3
  CHECK(predict_element(m, idx) == doctest::Approx(24.0));

  std::fill(m.b[1].begin(), m.b[1].end(), 0.0f);
  CHECK(predict_element(m, idx) == doctest::Approx(0.0));

  std::vector<index_t> bad{0, 1, 9};
  CHECK_THROWS_AS(predict_element(m, bad), Error);
}

TEST_CASE("predict_element matches the dense reconstruction chain") {
  std::vector<index_t> dims{4, 4, 4}, ranks{2, 2, 2};
  Model m = init_model(dims, ranks, 3, 77, 0.9f);
  auto core = materialize_core(m);
  std::vector<index_t> idx(3);
  for (index_t i = 0; i < 4; ++i) {
    for (index_t j = 0; j < 4; ++j) {
      for (index_t k = 0; k < 4; ++k) {
        idx = {i, j, k};
        double via_chain = oracle::contract_core_chain(m, core, idx);
        CHECK(predict_element(m, idx) ==
              doctest::Approx(via_chain).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("materialize_core closed forms") {
  std::vector<index_t> dims{3, 3}, ranks{2, 2};
  Model m = init_model(dims, ranks, 3, 5, 1.0f);
  for (auto& mat : m.b) std::fill(mat.begin(), mat.end(), 1.0f);
  auto g = materialize_core(m);
  REQUIRE(g.size() == 4);
  for (double v : g) CHECK(v == doctest::Approx(3.0));

  // R = 1 is the rank-1 outer product of the single columns.
  Model m1 = init_model(dims, ranks, 1, 6, 1.0f);
  auto g1 = materialize_core(m1);
  for (index_t j0 = 0; j0 < 2; ++j0) {
    for (index_t j1 = 0; j1 < 2; ++j1) {
      double want = static_cast<double>(m1.b[0][j0]) * m1.b[1][j1];
      CHECK(g1[static_cast<std::size_t>(j0) * 2 + j1] ==
            doctest::Approx(want).epsilon(1e-12));
    }
  }

  std::vector<index_t> big_dims{200, 200, 200}, big_ranks{200, 200, 200};
  Model big = init_model(big_dims, big_ranks, 1, 7, 1.0f);
  CHECK_THROWS_AS(materialize_core(big), Error);
}

TEST_CASE("prediction homogeneity in one core matrix") {
  std::vector<index_t> dims{5, 6, 7}, ranks{3, 2, 4};
  Model m = init_model(dims, ranks, 3, 13, 0.8f);
  std::vector<index_t> idx{4, 2, 6};
  double base = predict_element(m, idx);
  const double alpha = 1.7;
  Model scaled = m;
  for (real& v : scaled.b[1]) v = static_cast<real>(v * alpha);
  // Scaling happens in float; compare against the float-scaled params.
  DOCTEST_INFO("alpha-scaled core");
  double got = predict_element(scaled, idx);
  CHECK(got == doctest::Approx(base * alpha).epsilon(1e-6));
}

TEST_CASE("model save/load round trip") {
  std::vector<index_t> dims{6, 3, 5}, ranks{4, 2, 3};
  Model m = init_model(dims, ranks, 2, 21, 0.7f);
  std::string path = "ftk_model_test.ftkp";
  save_model(m, path);
  Model back = load_model(path);
  CHECK(back.dims == m.dims);
  CHECK(back.ranks == m.ranks);
  CHECK(back.r == m.r);
  CHECK(back.a == m.a);  // bit-identical
  CHECK(back.b == m.b);

  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    std::vector<index_t> idx{static_cast<index_t>(rng() % 6),
                             static_cast<index_t>(rng() % 3),
                             static_cast<index_t>(rng() % 5)};
    CHECK(predict_element(m, idx) == predict_element(back, idx));
  }
  std::remove(path.c_str());
}

TEST_CASE("model load rejects corrupt files") {
  std::vector<index_t> dims{3, 3, 3}, ranks{2, 2, 2};
  Model m = init_model(dims, ranks, 2, 1, 0.5f);
  std::string path = "ftk_model_corrupt.ftkp";
  save_model(m, path);

  // Truncate the payload.
  {
    std::ifstream in(path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
    std::ofstream out(path, std::ios::binary);
    out.write(all.data(), static_cast<std::streamsize>(all.size() / 2));
  }
  CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("truncated"),
                       Error);

  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTFTK\n1 1 1 1\n";
  }
  CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("magic"), Error);
  std::remove(path.c_str());
}

TEST_CASE("default init scale puts early predictions at data magnitude") {
  SynthSpec spec;
  spec.order = 3;
  spec.dim = 60;
  spec.nnz = 20000;
  spec.mode = SynthSpec::Mode::kPlanted;
  spec.rank_j = 4;
  spec.rank_r = 4;
  spec.noise_std = 0.05;
  spec.seed = 9;
  auto [tensor, truth] = generate_planted(spec);

  double mean_abs = 0.0, mean = 0.0, sq = 0.0;
  for (real v : tensor.values) {
    mean_abs += std::abs(static_cast<double>(v));
    mean += v;
    sq += static_cast<double>(v) * v;
  }
  mean_abs /= static_cast<double>(tensor.nnz());
  mean /= static_cast<double>(tensor.nnz());
  double data_std =
      std::sqrt(std::max(0.0, sq / static_cast<double>(tensor.nnz()) -
                                  mean * mean));

  std::vector<index_t> ranks(3, spec.rank_j);
  real scale = default_init_scale(mean_abs, 3, spec.rank_r, ranks);
  Model m = init_model(tensor.dims, ranks, spec.rank_r, 123, scale);
  double initial_rmse = rmse(m, tensor);
  CHECK(initial_rmse <= 10.0 * std::max(data_std, 1e-3));
}
