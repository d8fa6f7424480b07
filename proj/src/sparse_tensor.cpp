#include "ftk/sparse_tensor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ftk {

namespace {

// Lexicographic compare of two entry tuples.
bool tuple_less(const SparseTensor& t, size64 lhs, size64 rhs) {
  auto a = t.entry(lhs);
  auto b = t.entry(rhs);
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

bool tuple_equal(const SparseTensor& t, size64 lhs, size64 rhs) {
  auto a = t.entry(lhs);
  auto b = t.entry(rhs);
  return std::equal(a.begin(), a.end(), b.begin());
}

std::string tuple_str(std::span<const index_t> idx) {
  std::string s = "(";
  for (std::size_t n = 0; n < idx.size(); ++n) {
    if (n) s += ",";
    s += std::to_string(idx[n] + 1);
  }
  return s + ")";
}

}  // namespace

void SparseTensor::validate() const {
  require(order >= 1, "tensor order must be positive");
  require(static_cast<int>(dims.size()) == order, "dims/order mismatch");
  require(static_cast<size64>(indices.size()) == nnz() * order,
          "index storage size mismatch");
  for (size64 p = 0; p < nnz(); ++p) {
    auto idx = entry(p);
    for (int n = 0; n < order; ++n) {
      require(idx[n] >= 0 && idx[n] < dims[n],
              "index out of range at entry " + std::to_string(p));
    }
    require(std::isfinite(values[p]),
            "non-finite value at entry " + std::to_string(p));
  }
  // Duplicate check via an indirect sort: no hashing, no false positives.
  std::vector<size64> order_by_tuple(static_cast<std::size_t>(nnz()));
  std::iota(order_by_tuple.begin(), order_by_tuple.end(), size64{0});
  std::sort(order_by_tuple.begin(), order_by_tuple.end(),
            [&](size64 a, size64 b) { return tuple_less(*this, a, b); });
  for (std::size_t i = 1; i < order_by_tuple.size(); ++i) {
    if (tuple_equal(*this, order_by_tuple[i - 1], order_by_tuple[i])) {
      fail("duplicate index tuple " + tuple_str(entry(order_by_tuple[i])));
    }
  }
}

SparseTensor load_coo(const std::string& path, int order) {
  require(order >= 1, "order must be positive");
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);

  SparseTensor t;
  t.order = order;
  t.dims.assign(order, 0);
  std::vector<index_t> declared;

  std::string line;
  size64 lineno = 0;
  std::vector<index_t> idx(order);
  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#') {
      std::istringstream hs(line.substr(first + 1));
      std::string word;
      if (hs >> word && word == "dims:") {
        declared.assign(order, 0);
        for (int n = 0; n < order; ++n) {
          long long d = 0;
          require(static_cast<bool>(hs >> d) && d > 0,
                  "bad dims header at line " + std::to_string(lineno));
          declared[n] = static_cast<index_t>(d);
        }
      }
      continue;
    }
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
    if (static_cast<int>(tokens.size()) != order + 1) {
      fail("malformed line " + std::to_string(lineno) + " in " + path +
           ": expected " + std::to_string(order) + " indices and one value, " +
           "got " + std::to_string(tokens.size()) + " tokens");
    }
    for (int n = 0; n < order; ++n) {
      long long v = 0;
      const std::string& s = tokens[n];
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || ptr != s.data() + s.size()) {
        fail("malformed index at line " + std::to_string(lineno) + " in " +
             path);
      }
      require(v >= 1, "index <= 0 at line " + std::to_string(lineno));
      idx[n] = static_cast<index_t>(v - 1);  // to 0-based
    }
    char* end = nullptr;
    double value = std::strtod(tokens[order].c_str(), &end);
    if (end != tokens[order].c_str() + tokens[order].size()) {
      fail("malformed value at line " + std::to_string(lineno) + " in " +
           path);
    }
    require(std::isfinite(value),
            "non-finite value at line " + std::to_string(lineno));
    for (int n = 0; n < order; ++n) t.dims[n] = std::max(t.dims[n], idx[n] + 1);
    t.push(idx, static_cast<real>(value));
  }
  require(t.nnz() > 0, "empty tensor: " + path);
  if (!declared.empty()) {
    for (int n = 0; n < order; ++n) {
      require(t.dims[n] <= declared[n],
              "entry index exceeds declared dims in mode " +
                  std::to_string(n + 1));
    }
    t.dims = declared;
  }
  t.validate();
  return t;
}

int infer_coo_order(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  std::string line;
  while (std::getline(in, line)) {
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string token;
    int count = 0;
    while (ls >> token) ++count;
    require(count >= 2, "malformed first data line in " + path);
    return count - 1;
  }
  fail("empty tensor: " + path);
}

void save_coo(const SparseTensor& t, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write " + path);
  out << "# dims:";
  for (index_t d : t.dims) out << ' ' << d;
  out << '\n';
  for (size64 p = 0; p < t.nnz(); ++p) {
    auto idx = t.entry(p);
    for (int n = 0; n < t.order; ++n) out << (idx[n] + 1) << ' ';
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(t.values[p]));
    out << buf << '\n';
  }
  require(out.good(), "write failed: " + path);
}

std::pair<SparseTensor, SparseTensor> split_train_test(const SparseTensor& t,
                                                       double test_fraction,
                                                       std::uint64_t seed) {
  require(test_fraction > 0.0 && test_fraction < 1.0,
          "test fraction must lie in (0,1)");
  require(t.nnz() >= 2, "need at least two entries to split");
  size64 ntest = std::llround(test_fraction * static_cast<double>(t.nnz()));
  ntest = std::clamp<size64>(ntest, 1, t.nnz() - 1);

  std::vector<size64> perm(static_cast<std::size_t>(t.nnz()));
  std::iota(perm.begin(), perm.end(), size64{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  SparseTensor train, test;
  for (SparseTensor* part : {&train, &test}) {
    part->order = t.order;
    part->dims = t.dims;
  }
  for (size64 i = 0; i < t.nnz(); ++i) {
    SparseTensor& dst = (i < ntest) ? test : train;
    dst.push(t.entry(perm[i]), t.values[perm[i]]);
  }
  return {std::move(train), std::move(test)};
}

ModeIndex build_mode_index(const SparseTensor& t, int mode, Keying keying) {
  require(mode >= 0 && mode < t.order, "mode out of range");
  ModeIndex out;
  out.mode = mode;
  out.keying = keying;
  out.positions.resize(static_cast<std::size_t>(t.nnz()));
  std::iota(out.positions.begin(), out.positions.end(), size64{0});

  if (keying == Keying::kFixedMode) {
    std::stable_sort(out.positions.begin(), out.positions.end(),
                     [&](size64 a, size64 b) {
                       return t.entry(a)[mode] < t.entry(b)[mode];
                     });
    out.offsets.push_back(0);
    for (size64 i = 1; i < t.nnz(); ++i) {
      if (t.entry(out.positions[i])[mode] !=
          t.entry(out.positions[i - 1])[mode]) {
        out.offsets.push_back(i);
      }
    }
  } else {
    auto complement_less = [&](size64 a, size64 b) {
      auto ia = t.entry(a);
      auto ib = t.entry(b);
      for (int n = 0; n < t.order; ++n) {
        if (n == mode) continue;
        if (ia[n] != ib[n]) return ia[n] < ib[n];
      }
      return false;
    };
    auto complement_equal = [&](size64 a, size64 b) {
      auto ia = t.entry(a);
      auto ib = t.entry(b);
      for (int n = 0; n < t.order; ++n) {
        if (n != mode && ia[n] != ib[n]) return false;
      }
      return true;
    };
    std::stable_sort(out.positions.begin(), out.positions.end(),
                     complement_less);
    out.offsets.push_back(0);
    for (size64 i = 1; i < t.nnz(); ++i) {
      if (!complement_equal(out.positions[i], out.positions[i - 1])) {
        out.offsets.push_back(i);
      }
    }
  }
  out.offsets.push_back(t.nnz());
  return out;
}

void Batch::stage(const SparseTensor& t, std::span<const size64> rows,
                  index_t m_cap, size64 bucket_id) {
  m = m_cap;
  m_eff = static_cast<index_t>(rows.size());
  bucket = bucket_id;
  require(m_eff <= m, "batch overflow");
  values.assign(static_cast<std::size_t>(m), 0.0f);
  if (static_cast<int>(idx.size()) != t.order) {
    idx.assign(static_cast<std::size_t>(t.order), {});
  }
  for (int n = 0; n < t.order; ++n) {
    idx[n].assign(static_cast<std::size_t>(m), 0);
  }
  for (index_t r = 0; r < m_eff; ++r) {
    auto e = t.entry(rows[r]);
    values[r] = t.values[rows[r]];
    for (int n = 0; n < t.order; ++n) idx[n][r] = e[n];
  }
}

EpochPlan EpochPlan::global(const SparseTensor& t, index_t m, Rng& rng) {
  require(m >= 1, "batch size must be positive");
  EpochPlan plan;
  plan.m_ = m;
  plan.perm_.resize(static_cast<std::size_t>(t.nnz()));
  std::iota(plan.perm_.begin(), plan.perm_.end(), size64{0});
  std::shuffle(plan.perm_.begin(), plan.perm_.end(), rng);
  for (size64 off = 0; off < t.nnz(); off += m) {
    plan.descs_.push_back({off, std::min<size64>(m, t.nnz() - off), -1});
  }
  return plan;
}

EpochPlan EpochPlan::per_bucket(const SparseTensor& t, const ModeIndex& idx,
                                index_t m, Rng& rng) {
  require(m >= 1, "batch size must be positive");
  EpochPlan plan;
  plan.m_ = m;
  plan.perm_.reserve(static_cast<std::size_t>(t.nnz()));

  std::vector<size64> bucket_order(static_cast<std::size_t>(idx.buckets()));
  std::iota(bucket_order.begin(), bucket_order.end(), size64{0});
  std::shuffle(bucket_order.begin(), bucket_order.end(), rng);

  std::vector<size64> scratch;
  for (size64 b : bucket_order) {
    auto rows = idx.bucket(b);
    scratch.assign(rows.begin(), rows.end());
    std::shuffle(scratch.begin(), scratch.end(), rng);
    size64 base = static_cast<size64>(plan.perm_.size());
    plan.perm_.insert(plan.perm_.end(), scratch.begin(), scratch.end());
    size64 len = static_cast<size64>(scratch.size());
    for (size64 off = 0; off < len; off += m) {
      plan.descs_.push_back({base + off, std::min<size64>(m, len - off), b});
    }
  }
  return plan;
}

EpochPlan EpochPlan::canonical(const SparseTensor& t) {
  EpochPlan plan;
  plan.m_ = 1;
  plan.perm_.resize(static_cast<std::size_t>(t.nnz()));
  std::iota(plan.perm_.begin(), plan.perm_.end(), size64{0});
  for (size64 p = 0; p < t.nnz(); ++p) plan.descs_.push_back({p, 1, -1});
  return plan;
}

void EpochPlan::gather(const SparseTensor& t, size64 b, Batch& out) const {
  const BatchDesc& d = descs_[b];
  out.stage(t, {perm_.data() + d.offset, static_cast<std::size_t>(d.len)}, m_,
            d.bucket);
}

}  // namespace ftk
