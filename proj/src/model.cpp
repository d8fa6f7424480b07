#include "ftk/model.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; big-endian hosts unsupported");

namespace ftk {

void Model::validate() const {
  int n = order();
  require(n >= 1, "model needs at least one mode");
  require(static_cast<int>(ranks.size()) == n, "ranks/dims mismatch");
  require(r >= 1, "low rank must be positive");
  require(static_cast<int>(a.size()) == n && static_cast<int>(b.size()) == n,
          "matrix count mismatch");
  for (int k = 0; k < n; ++k) {
    require(dims[k] >= 1 && ranks[k] >= 1, "zero dim or rank");
    require(a[k].size() ==
                static_cast<std::size_t>(dims[k]) * static_cast<std::size_t>(ranks[k]),
            "factor matrix shape mismatch");
    require(b[k].size() ==
                static_cast<std::size_t>(ranks[k]) * static_cast<std::size_t>(r),
            "core matrix shape mismatch");
    for (real v : a[k]) require(std::isfinite(v), "non-finite factor entry");
    for (real v : b[k]) require(std::isfinite(v), "non-finite core entry");
  }
}

Model init_model(std::span<const index_t> dims, std::span<const index_t> ranks,
                 index_t r, std::uint64_t seed, real scale) {
  require(scale > 0, "init scale must be positive");
  require(dims.size() == ranks.size(), "dims/ranks length mismatch");
  Model m;
  m.dims.assign(dims.begin(), dims.end());
  m.ranks.assign(ranks.begin(), ranks.end());
  m.r = r;
  Rng rng(seed);
  std::uniform_real_distribution<double> uni(0.0, static_cast<double>(scale));
  int n = m.order();
  m.a.resize(n);
  m.b.resize(n);
  for (int k = 0; k < n; ++k) {
    require(dims[k] >= 1 && ranks[k] >= 1 && r >= 1, "zero dim or rank");
    m.a[k].resize(static_cast<std::size_t>(dims[k]) * ranks[k]);
    m.b[k].resize(static_cast<std::size_t>(ranks[k]) * r);
    for (real& v : m.a[k]) v = static_cast<real>(uni(rng));
    for (real& v : m.b[k]) v = static_cast<real>(uni(rng));
  }
  return m;
}

real default_init_scale(double mean_abs_value, int order, index_t r,
                        std::span<const index_t> ranks) {
  require(order >= 1 && r >= 1 && !ranks.empty(), "bad scale arguments");
  double log_j = 0.0;
  for (index_t j : ranks) log_j += std::log(static_cast<double>(j));
  double j_geo = std::exp(log_j / static_cast<double>(ranks.size()));
  double mean = std::max(mean_abs_value, 1e-12);
  double s = 2.0 / std::sqrt(j_geo) *
             std::pow(mean / static_cast<double>(r),
                      1.0 / (2.0 * static_cast<double>(order)));
  return static_cast<real>(s);
}

double predict_element(const Model& m, std::span<const index_t> idx) {
  int n = m.order();
  require(static_cast<int>(idx.size()) == n, "index arity mismatch");
  for (int k = 0; k < n; ++k) {
    require(idx[k] >= 0 && idx[k] < m.dims[k], "index out of range");
  }
  double acc = 0.0;
  for (index_t col = 0; col < m.r; ++col) {
    double prod = 1.0;
    for (int k = 0; k < n; ++k) {
      const real* row = m.a_row(k, idx[k]);
      const real* bk = m.b[k].data();
      double c = 0.0;
      for (index_t j = 0; j < m.ranks[k]; ++j) {
        c += static_cast<double>(row[j]) *
             static_cast<double>(bk[static_cast<std::size_t>(j) * m.r + col]);
      }
      prod *= c;
    }
    acc += prod;
  }
  return acc;
}

std::vector<double> materialize_core(const Model& m) {
  int n = m.order();
  size64 cells = 1;
  for (index_t j : m.ranks) {
    cells *= j;
    require(cells <= 1'000'000, "core too large to materialize");
  }
  std::vector<double> g(static_cast<std::size_t>(cells), 0.0);
  std::vector<index_t> j(n, 0);
  for (size64 cell = 0; cell < cells; ++cell) {
    double acc = 0.0;
    for (index_t col = 0; col < m.r; ++col) {
      double prod = 1.0;
      for (int k = 0; k < n; ++k) {
        prod *= static_cast<double>(
            m.b[k][static_cast<std::size_t>(j[k]) * m.r + col]);
      }
      acc += prod;
    }
    g[static_cast<std::size_t>(cell)] = acc;
    for (int k = n - 1; k >= 0; --k) {
      if (++j[k] < m.ranks[k]) break;
      j[k] = 0;
    }
  }
  return g;
}

namespace {
constexpr char kMagic[] = "FTKP1\n";
}

void save_model(const Model& m, const std::string& path) {
  m.validate();
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write " + path);
  out.write(kMagic, 6);
  std::ostringstream header;
  header << m.order() << ' ' << m.r;
  for (index_t j : m.ranks) header << ' ' << j;
  for (index_t d : m.dims) header << ' ' << d;
  header << '\n';
  out << header.str();
  for (const auto& mat : m.a) {
    out.write(reinterpret_cast<const char*>(mat.data()),
              static_cast<std::streamsize>(mat.size() * sizeof(real)));
  }
  for (const auto& mat : m.b) {
    out.write(reinterpret_cast<const char*>(mat.data()),
              static_cast<std::streamsize>(mat.size() * sizeof(real)));
  }
  require(out.good(), "write failed: " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open " + path);
  char magic[6];
  in.read(magic, 6);
  require(in.gcount() == 6 && std::equal(magic, magic + 6, kMagic),
          "corrupt model header (bad magic): " + path);
  std::string header;
  require(static_cast<bool>(std::getline(in, header)),
          "corrupt model header: " + path);
  std::istringstream hs(header);
  int n = 0;
  long long r = 0;
  require(static_cast<bool>(hs >> n >> r) && n >= 1 && r >= 1,
          "corrupt model header: " + path);
  Model m;
  m.r = static_cast<index_t>(r);
  m.ranks.resize(n);
  m.dims.resize(n);
  for (int k = 0; k < n; ++k) {
    require(static_cast<bool>(hs >> m.ranks[k]) && m.ranks[k] >= 1,
            "corrupt model header: " + path);
  }
  for (int k = 0; k < n; ++k) {
    require(static_cast<bool>(hs >> m.dims[k]) && m.dims[k] >= 1,
            "corrupt model header: " + path);
  }
  m.a.resize(n);
  m.b.resize(n);
  for (int k = 0; k < n; ++k) {
    m.a[k].resize(static_cast<std::size_t>(m.dims[k]) * m.ranks[k]);
    in.read(reinterpret_cast<char*>(m.a[k].data()),
            static_cast<std::streamsize>(m.a[k].size() * sizeof(real)));
    require(in.gcount() ==
                static_cast<std::streamsize>(m.a[k].size() * sizeof(real)),
            "truncated model file: " + path);
  }
  for (int k = 0; k < n; ++k) {
    m.b[k].resize(static_cast<std::size_t>(m.ranks[k]) * m.r);
    in.read(reinterpret_cast<char*>(m.b[k].data()),
            static_cast<std::streamsize>(m.b[k].size() * sizeof(real)));
    require(in.gcount() ==
                static_cast<std::streamsize>(m.b[k].size() * sizeof(real)),
            "truncated model file: " + path);
  }
  m.validate();
  return m;
}

}  // namespace ftk
