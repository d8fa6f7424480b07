// Command-line front end: generate synthetic tensors, train the three
// decomposition variants, evaluate saved models, and benchmark counter
// profiles against the closed-form cost model.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ftk/decomposition.hpp"
#include "ftk/evaluation.hpp"
#include "ftk/synthgen.hpp"

using nlohmann::json;

namespace {

struct CommonFlags {
  std::vector<ftk::index_t> ranks;  // per-mode J_n (overrides -J)
  ftk::index_t j_uniform = 16;
  ftk::index_t r = 16;
  int epochs = 50;
  ftk::index_t m = 16;
  double lr_a = 1e-3, lr_b = 1e-3, reg_a = 1e-4, reg_b = 1e-4;
  int workers = 0;  // 0: FTK_THREADS or 1
  std::uint64_t seed = 0;
};

void add_hyper_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("-J", f.j_uniform, "uniform per-mode rank J_n");
  cmd->add_option("--ranks", f.ranks, "per-mode ranks J_1,...,J_N")
      ->delimiter(',');
  cmd->add_option("-R", f.r, "shared low rank R");
  cmd->add_option("-T", f.epochs, "epochs");
  cmd->add_option("-M", f.m, "batch size (default 16)");
  cmd->add_option("--lr-a", f.lr_a, "factor learning rate");
  cmd->add_option("--lr-b", f.lr_b, "core learning rate");
  cmd->add_option("--reg-a", f.reg_a, "factor regularization");
  cmd->add_option("--reg-b", f.reg_b, "core regularization");
  cmd->add_option("--workers", f.workers, "worker threads (or FTK_THREADS)");
  cmd->add_option("--seed", f.seed, "rng seed");
}

ftk::Hyperparams to_hyper(const CommonFlags& f) {
  ftk::Hyperparams h;
  h.lr_a = static_cast<ftk::real>(f.lr_a);
  h.lr_b = static_cast<ftk::real>(f.lr_b);
  h.reg_a = static_cast<ftk::real>(f.reg_a);
  h.reg_b = static_cast<ftk::real>(f.reg_b);
  h.epochs = f.epochs;
  h.batch_size = f.m;
  return h;
}

std::vector<ftk::index_t> resolve_ranks(const CommonFlags& f, int order) {
  if (!f.ranks.empty()) {
    ftk::require(static_cast<int>(f.ranks.size()) == order,
                 "--ranks needs one value per mode");
    return f.ranks;
  }
  return std::vector<ftk::index_t>(order, f.j_uniform);
}

void warn_tile_padding(const std::vector<ftk::index_t>& ranks, ftk::index_t r,
                       ftk::index_t m) {
  bool padded = (r % ftk::kTile) != 0 || (m % ftk::kTile) != 0;
  for (ftk::index_t j : ranks) padded = padded || (j % ftk::kTile) != 0;
  if (padded) {
    std::cerr << "warning: rank or batch size not a multiple of "
              << ftk::kTile << "; tiles padded\n";
  }
}

double mean_abs_value(const ftk::SparseTensor& t) {
  double acc = 0.0;
  for (ftk::real v : t.values) acc += std::abs(static_cast<double>(v));
  return acc / static_cast<double>(t.nnz());
}

std::string strip_ext(const std::string& path) {
  auto slash = path.find_last_of('/');
  auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
    return path;
  }
  return path.substr(0, dot);
}

json counters_json(const ftk::CostCounters& c) {
  json j;
  j["reads"] = c.total(ftk::kRead);
  j["d_stage_mults"] = c.total(ftk::kDStage);
  j["bdt_stage_mults"] = c.total(ftk::kBdtStage);
  j["updates"] = c.total(ftk::kUpdate);
  j["other_mults"] = c.total(ftk::kOther);
  if (c.has_full_batches()) {
    ftk::PredictedCosts m = ftk::measured_costs(c);
    j["per_full_batch"] = {{"reads", m.reads},
                           {"d_stage", m.d_stage},
                           {"bdt_stage", m.bdt_stage},
                           {"update", m.update}};
  }
  return j;
}

// ---- gen ------------------------------------------------------------------

int cmd_gen(const std::string& output, ftk::SynthSpec spec) {
  ftk::Stopwatch sw;
  if (spec.mode == ftk::SynthSpec::Mode::kPlanted) {
    auto [tensor, truth] = ftk::generate_planted(spec);
    ftk::save_coo(tensor, output);
    std::string truth_path = strip_ext(output) + ".truth.ftkp";
    ftk::save_model(truth, truth_path);
    json j{{"tensor", output},     {"truth", truth_path},
           {"order", spec.order},  {"dim", spec.dim},
           {"nnz", tensor.nnz()},  {"noise_std", spec.noise_std},
           {"seconds", sw.seconds()}};
    std::cout << j.dump() << '\n';
  } else {
    ftk::SparseTensor tensor = ftk::generate_uniform(spec);
    ftk::save_coo(tensor, output);
    json j{{"tensor", output},    {"order", spec.order},
           {"dim", spec.dim},     {"nnz", tensor.nnz()},
           {"min", spec.min_value}, {"max", spec.max_value},
           {"seconds", sw.seconds()}};
    std::cout << j.dump() << '\n';
  }
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainFlags {
  std::string input, output = "model.ftkp";
  std::string variant = "plus";
  double test_fraction = 0.0;
  bool store_c = false;
  bool csv = false;
  CommonFlags common;
};

int cmd_train(const TrainFlags& f) {
  ftk::Variant variant = ftk::parse_variant(f.variant);
  if (f.store_c && variant != ftk::Variant::kPlus) {
    std::cerr << "--store-c applies to the plus variant only\n";
    return 2;
  }
  ftk::SparseTensor full = ftk::load_coo(f.input, ftk::infer_coo_order(f.input));
  ftk::SparseTensor train_set;
  ftk::SparseTensor test_set;
  const ftk::SparseTensor* test_ptr = nullptr;
  if (f.test_fraction > 0.0) {
    auto parts = ftk::split_train_test(full, f.test_fraction, f.common.seed);
    train_set = std::move(parts.first);
    test_set = std::move(parts.second);
    test_ptr = &test_set;
  } else {
    train_set = std::move(full);
  }

  auto ranks = resolve_ranks(f.common, train_set.order);
  warn_tile_padding(ranks, f.common.r, f.common.m);

  ftk::real scale = ftk::default_init_scale(mean_abs_value(train_set),
                                            train_set.order, f.common.r, ranks);
  ftk::Model model = ftk::init_model(train_set.dims, ranks, f.common.r,
                                     ftk::derive_seed(f.common.seed, {77}),
                                     scale);

  ftk::TrainOptions opts;
  opts.variant = variant;
  opts.store_c = f.store_c;
  opts.workers = f.common.workers;
  opts.seed = f.common.seed;

  ftk::History hist =
      ftk::train(train_set, test_ptr, model, to_hyper(f.common), opts);

  ftk::save_model(model, f.output);
  std::string base = strip_ext(f.output);
  if (f.csv) {
    ftk::write_history_csv(hist, base + ".history.csv");
  } else {
    ftk::write_history_jsonl(hist, base + ".history.jsonl");
  }
  if (test_ptr != nullptr) {
    ftk::save_coo(test_set, base + ".test.tns");
  }

  json j{{"model", f.output}, {"epochs", static_cast<int>(hist.size())}};
  if (!hist.empty()) {
    const auto& last = hist.back();
    j["train_loss"] = last.train_loss;
    if (std::isfinite(last.test_rmse)) {
      j["test_rmse"] = last.test_rmse;
      j["test_mae"] = last.test_mae;
    }
  }
  std::cout << j.dump() << '\n';
  return 0;
}

// ---- eval -----------------------------------------------------------------

int cmd_eval(const std::string& tensor_path, const std::string& model_path,
             int workers) {
  ftk::Model model = ftk::load_model(model_path);
  ftk::SparseTensor t = ftk::load_coo(tensor_path, model.order());
  for (int n = 0; n < model.order(); ++n) {
    ftk::require(t.dims[n] <= model.dims[n],
                 "tensor does not fit the model in mode " +
                     std::to_string(n + 1));
  }
  ftk::Metrics m = ftk::evaluate(model, t, ftk::resolve_workers(workers));
  json j{{"rmse", m.rmse}, {"mae", m.mae}, {"samples", m.samples}};
  std::cout << j.dump() << '\n';
  return 0;
}

// ---- bench ----------------------------------------------------------------

struct BenchFlags {
  std::string input;
  std::vector<std::string> variants;  // empty: all three
  int warmup = 1;
  bool store_c_sweep = false;
  CommonFlags common;  // -T is the measured epoch count
};

json bench_one(const ftk::SparseTensor& t, const BenchFlags& f,
               ftk::Variant variant, bool store_c) {
  auto ranks = resolve_ranks(f.common, t.order);
  ftk::real scale = ftk::default_init_scale(mean_abs_value(t), t.order,
                                            f.common.r, ranks);
  ftk::Model model =
      ftk::init_model(t.dims, ranks, f.common.r,
                      ftk::derive_seed(f.common.seed, {77}), scale);
  ftk::Hyperparams h = to_hyper(f.common);
  const int measured_epochs = f.common.epochs;
  h.epochs = f.warmup + measured_epochs;

  ftk::TrainOptions opts;
  opts.variant = variant;
  opts.store_c = store_c;
  opts.workers = f.common.workers;
  opts.seed = f.common.seed;

  ftk::History hist = ftk::train(t, nullptr, model, h, opts);

  double sf = 0.0, sc = 0.0;
  ftk::CostCounters factor(t.order), core(t.order);
  int measured = 0;
  for (std::size_t i = static_cast<std::size_t>(f.warmup); i < hist.size();
       ++i) {
    sf += hist[i].stats.seconds_factor;
    sc += hist[i].stats.seconds_core;
    factor.merge(hist[i].stats.factor);
    core.merge(hist[i].stats.core);
    ++measured;
  }
  ftk::PredictedCosts pred =
      ftk::predicted_costs(t.order, f.common.m, f.common.r, ranks, variant);

  json j;
  j["variant"] = ftk::variant_name(variant);
  j["scheme"] = store_c ? "storage" : "calculation";
  j["epochs_measured"] = measured;
  j["seconds_factor_per_epoch"] = measured ? sf / measured : 0.0;
  j["seconds_core_per_epoch"] = measured ? sc / measured : 0.0;
  j["factor_counters"] = counters_json(factor);
  j["core_counters"] = counters_json(core);
  j["predicted_per_full_batch"] = {{"reads", pred.reads},
                                   {"d_stage", pred.d_stage},
                                   {"bdt_stage", pred.bdt_stage},
                                   {"update", pred.update}};
  return j;
}

int cmd_bench(const BenchFlags& f) {
  ftk::SparseTensor t = ftk::load_coo(f.input, ftk::infer_coo_order(f.input));
  std::vector<std::string> names = f.variants;
  if (names.empty()) names = {"fasttucker", "fastertucker", "plus"};

  json rows = json::array();
  for (const auto& name : names) {
    rows.push_back(bench_one(t, f, ftk::parse_variant(name), false));
  }
  if (f.store_c_sweep) {
    rows.push_back(bench_one(t, f, ftk::Variant::kPlus, true));
  }

  // Pairwise factor/core speedups against the first row.
  json out;
  out["tensor"] = f.input;
  out["order"] = t.order;
  out["nnz"] = t.nnz();
  out["runs"] = rows;
  if (rows.size() > 1) {
    json speedups = json::array();
    double base_f = rows[0]["seconds_factor_per_epoch"].get<double>();
    double base_c = rows[0]["seconds_core_per_epoch"].get<double>();
    for (std::size_t i = 1; i < rows.size(); ++i) {
      double vf = rows[i]["seconds_factor_per_epoch"].get<double>();
      double vc = rows[i]["seconds_core_per_epoch"].get<double>();
      json s;
      s["against"] = rows[0]["variant"];
      s["variant"] = rows[i]["variant"];
      s["scheme"] = rows[i]["scheme"];
      s["factor_phase"] = vf > 0 ? base_f / vf : 0.0;
      s["core_phase"] = vc > 0 ? base_c / vc : 0.0;
      speedups.push_back(s);
    }
    out["speedups"] = speedups;
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse FastTucker decomposition toolkit"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic sparse tensor");
  ftk::SynthSpec spec;
  std::string gen_output;
  bool planted = false, uniform = false;
  int gen_order = 3;
  long long gen_dim = 1000, gen_nnz = 1'000'000;
  gen->add_option("--order", gen_order, "tensor order (>= 3)");
  gen->add_option("--dim", gen_dim, "per-mode dimension");
  gen->add_option("--nnz", gen_nnz, "number of nonzeros");
  gen->add_flag("--planted", planted, "planted low-rank ground truth");
  gen->add_flag("--uniform", uniform, "uniform random values (default)");
  gen->add_option("--noise", spec.noise_std, "planted noise std");
  gen->add_option("--min", spec.min_value, "uniform min value");
  gen->add_option("--max", spec.max_value, "uniform max value");
  gen->add_option("-J", spec.rank_j, "planted per-mode rank");
  gen->add_option("-R", spec.rank_r, "planted low rank");
  gen->add_option("--seed", spec.seed, "rng seed");
  gen->add_option("-o,--output", gen_output, "output tensor path")->required();

  // train
  auto* train = app.add_subcommand("train", "train a decomposition");
  TrainFlags tf;
  train->add_option("-i,--input", tf.input, "input COO tensor")->required();
  train->add_option("-o,--output", tf.output, "output model path");
  train->add_option("--variant", tf.variant,
                    "fasttucker|fastertucker|plus");
  train->add_option("--test-fraction", tf.test_fraction,
                    "held-out fraction in (0,1); 0 disables the split");
  train->add_flag("--store-c", tf.store_c,
                  "plus core phase reads cached C instead of computing");
  train->add_flag("--csv", tf.csv, "write history as CSV instead of JSONL");
  add_hyper_flags(train, tf.common);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a model on a tensor");
  std::string eval_tensor, eval_model;
  int eval_workers = 0;
  eval->add_option("-i,--input", eval_tensor, "COO tensor")->required();
  eval->add_option("-m,--model", eval_model, "model file")->required();
  eval->add_option("--workers", eval_workers, "worker threads");

  // bench
  auto* bench = app.add_subcommand("bench", "benchmark variants");
  BenchFlags bf;
  bench->add_option("-i,--input", bf.input, "input COO tensor")->required();
  bench->add_option("--variant", bf.variants,
                    "variant to bench (repeatable; default all)");
  bench->add_option("--warmup", bf.warmup, "warmup epochs");
  bench->add_flag("--store-c", bf.store_c_sweep,
                  "also bench the plus storage scheme");
  add_hyper_flags(bench, bf.common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      spec.order = gen_order;
      spec.dim = static_cast<ftk::index_t>(gen_dim);
      spec.nnz = gen_nnz;
      if (planted && uniform) {
        std::cerr << "choose one of --planted / --uniform\n";
        return 2;
      }
      spec.mode = planted ? ftk::SynthSpec::Mode::kPlanted
                          : ftk::SynthSpec::Mode::kUniform;
      return cmd_gen(gen_output, spec);
    }
    if (train->parsed()) return cmd_train(tf);
    if (eval->parsed()) return cmd_eval(eval_tensor, eval_model, eval_workers);
    if (bench->parsed()) return cmd_bench(bf);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
