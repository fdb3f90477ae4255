// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "lost/accounting.hpp"
#include "lost/checkpoint.hpp"
#include "lost/config.hpp"
#include "lost/factorize.hpp"
#include "lost/init.hpp"
#include "lost/kernels.hpp"
#include "lost/train.hpp"
#include "lost/verify.hpp"

using namespace lost;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double frob_sq(const MatrixD& a) { return frobenius_norm_sq(a); }

ModelConfig lost_preset(const char* name, std::size_t rank) {
  ModelConfig c = ModelConfig::preset(name);
  c.parameterization = Parameterization::lost;
  c.rank = rank;
  c.sparsity = 0.01;
  return c;
}

Outcome c1_param_counts() {
  const double d60 = static_cast<double>(count_params(ModelConfig::preset("60m")).total()) / 1e6;
  const double l60 = static_cast<double>(count_params(lost_preset("60m", 128)).total()) / 1e6;
  const double d130 = static_cast<double>(count_params(ModelConfig::preset("130m")).total()) / 1e6;
  const double l130 = static_cast<double>(count_params(lost_preset("130m", 256)).total()) / 1e6;
  const bool ok = std::abs(d60 - 58) <= 1 && std::abs(l60 - 43) <= 1 && std::abs(d130 - 134) <= 2 &&
                  std::abs(l130 - 94) <= 2;
  return {ok, fmt("60m dense %.2fM (58 +-1), lost r128 %.2fM (43 +-1); 130m dense %.2fM "
                  "(134 +-2), lost r256 %.2fM (94 +-2)",
                  d60, l60, d130, l130)};
}

Outcome c2_exact_decomposition() {
  Rng rng = Rng(2).derive("acceptance.decomp");
  double worst_rec = 0, worst_pyth = 0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t m = 1 + rng.below(64), n = 1 + rng.below(48);
    const std::size_t p = std::min(m, n);
    const std::size_t r = 1 + rng.below(p);
    const MatrixD w = init_matrix(m, n, InitSpec::kaiming(), rng);
    const SvdResult s = svd(w);
    const LowRankFactors f = truncate_svd(s, r);
    const MatrixD comp = build_complement(w, s, {CompSource::rem, r}, rng);
    const MatrixD ab = matmul_nt(f.A, f.B);
    worst_rec = std::max(worst_rec, relative_error(add(ab, comp), w));
    const double lhs = frob_sq(w);
    worst_pyth = std::max(worst_pyth, std::abs(lhs - frob_sq(ab) - frob_sq(comp)) / lhs);
  }
  return {worst_rec <= 1e-10 && worst_pyth <= 1e-9,
          fmt("200 matrices up to 64x48: reconstruction %.2e (<= 1e-10), energy split %.2e "
              "(<= 1e-9)",
              worst_rec, worst_pyth)};
}

Outcome c3_gradients() {
  Rng rng = Rng(3).derive("acceptance.grad");
  struct Mode {
    Activation act;
    Combine combine;
  };
  const Mode modes[] = {{Activation::silu, Combine::output_avg},
                        {Activation::identity, Combine::output_avg},
                        {Activation::identity, Combine::weight_avg}};
  double layer_worst = 0;
  std::size_t configs = 0;
  for (int rep = 0; rep < 3; ++rep) {
    for (const Mode& mode : modes) {
      for (double g : {0.0, 0.7, 1.0}) {
        const std::size_t m = 2 + rng.below(11), n = 2 + rng.below(11);
        const std::size_t r = 1 + rng.below(std::min(m, n)), k = 1 + rng.below(n);
        const LostLinear<double> layer = random_layer(m, n, r, k, g, mode.act, mode.combine, rng);
        MatrixD x(2 + rng.below(3), n);
        for (double& v : x.flat()) v = rng.normal();
        layer_worst = std::max(layer_worst, gradcheck_layer(layer, x).worst());
        ++configs;
      }
    }
  }
  double model_worst = 0;
  std::string worst_tensor;
  std::size_t models = 0;
  for (Parameterization p :
       {Parameterization::dense, Parameterization::lowrank_only, Parameterization::lost}) {
    for (Activation act : {Activation::silu, Activation::identity}) {
      ModelConfig c = tiny_config(p);
      c.activation = act;
      if (act == Activation::identity) c.combine = Combine::weight_avg;
      const Model<double> model = Model<double>::build(c);
      std::vector<std::uint32_t> in(8), tg(8);
      for (auto& v : in) v = static_cast<std::uint32_t>(rng.below(c.vocab_size));
      for (auto& v : tg) v = static_cast<std::uint32_t>(rng.below(c.vocab_size));
      const ModelGradcheck g = gradcheck_model(model, in, tg, 2, 4);
      if (g.worst > model_worst) {
        model_worst = g.worst;
        worst_tensor = g.worst_tensor;
      }
      ++models;
    }
  }
  return {layer_worst <= 1e-4 && model_worst <= 1e-3,
          fmt("%zu layer configs %.2e (<= 1e-4); %zu tiny models %.2e (<= 1e-3, worst %s)", configs,
              layer_worst, models, model_worst, worst_tensor.c_str())};
}

Outcome c4_combine_equivalence() {
  Rng rng = Rng(4).derive("acceptance.combine");
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t m = 1 + rng.below(24), n = 1 + rng.below(24);
    const std::size_t r = 1 + rng.below(std::min(m, n)), k = 1 + rng.below(n);
    const double g = rng.uniform();
    Rng a = rng.derive(static_cast<std::uint64_t>(i));
    Rng b = a;
    const LostLinear<double> out =
        random_layer(m, n, r, k, g, Activation::identity, Combine::output_avg, a);
    const LostLinear<double> wav =
        random_layer(m, n, r, k, g, Activation::identity, Combine::weight_avg, b);
    MatrixD x(1 + rng.below(6), n);
    for (double& v : x.flat()) v = rng.normal();
    worst = std::max(worst, max_abs_diff(out.forward(x), wav.forward(x)));
  }
  return {worst <= 1e-12, fmt("50 random layers, max |y_out - y_weight| %.2e (<= 1e-12)", worst)};
}

Outcome c5_eckart_young() {
  Rng rng = Rng(5).derive("acceptance.eckart");
  double worst = 0;
  std::size_t cases = 0;
  for (int i = 0; i < 40; ++i) {
    const std::size_t m = 2 + rng.below(40), n = 2 + rng.below(40);
    MatrixD w(m, n);
    for (double& v : w.flat()) v = rng.normal();
    const SvdResult s = svd(w);
    const double total = frob_sq(w);
    for (std::size_t r = 1; r <= s.S.size(); ++r) {
      const LowRankFactors f = truncate_svd(s, r);
      const double resid = frob_sq(sub(w, matmul_nt(f.A, f.B)));
      double tail = 0;
      for (std::size_t j = r; j < s.S.size(); ++j) tail += s.S[j] * s.S[j];
      const double denom = r == s.S.size() ? total : tail;
      worst = std::max(worst, std::abs(resid - tail) / denom);
      ++cases;
    }
  }
  return {worst <= 1e-9,
          fmt("%zu (matrix, rank) pairs, residual vs tail energy %.2e (<= 1e-9)", cases, worst)};
}

struct DeskRuns {
  std::vector<TrainResult> lost, lowrank;
};

ExperimentConfig desk_experiment(Parameterization p, std::uint64_t seed, std::size_t steps) {
  ExperimentConfig e;
  e.model = ModelConfig::desk();
  e.model.parameterization = p;
  if (p == Parameterization::lowrank_only) {
    e.model.lowrank_init = LowRankInit::kaiming;
    e.model.gamma = 1.0;
  }
  e.model.seed = seed;
  e.train.seed = seed;
  e.train.total_steps = steps;
  e.validate();
  return e;
}

TrainResult desk_run(const ExperimentConfig& e, const std::string& label) {
  const auto t0 = std::chrono::steady_clock::now();
  const ByteDataset data = make_dataset(e);
  Model<float> model = Model<float>::build(e.model);
  TrainResult r = train_loop(model, data, e.train);
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  std::fprintf(stderr, "  %s seed %llu: %zu steps, final val loss %.4f (%.0f s)\n", label.c_str(),
               static_cast<unsigned long long>(e.model.seed), r.steps_done,
               r.records.empty() ? NAN : r.records.back().val_loss, dt.count());
  return r;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double final_loss(const TrainResult& r) {
  return r.status == TrainStatus::completed && !r.records.empty() ? r.records.back().val_loss : NAN;
}

Outcome c6_desk_ablation(DeskRuns& runs, std::size_t steps) {
  std::vector<double> lost, low;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    runs.lost.push_back(desk_run(desk_experiment(Parameterization::lost, seed, steps), "lost"));
    runs.lowrank.push_back(
        desk_run(desk_experiment(Parameterization::lowrank_only, seed, steps), "lowrank_only"));
    lost.push_back(final_loss(runs.lost.back()));
    low.push_back(final_loss(runs.lowrank.back()));
  }
  const double ml = median(lost), mk = median(low);
  const bool ok = std::isfinite(ml) && std::isfinite(mk) && ml <= mk;
  return {ok, fmt("3 seeds x %zu steps, median final val loss: lost(svd) %.4f [%.4f %.4f %.4f] "
                  "vs lowrank_only(kaiming) %.4f [%.4f %.4f %.4f]%s",
                  steps, ml, lost[0], lost[1], lost[2], mk, low[0], low[1], low[2],
                  ok ? "" : "  ORDERING INVERTED")};
}

Outcome c7_beats_uniform(const DeskRuns& runs) {
  const double uniform = std::log(256.0);
  std::vector<TrainResult> own;
  const std::vector<TrainResult>* src = &runs.lost;
  if (runs.lost.empty()) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      own.push_back(desk_run(desk_experiment(Parameterization::lost, seed, 500), "lost"));
    }
    src = &own;
  }
  std::string per_seed;
  bool ok = true;
  for (const TrainResult& r : *src) {
    double best = INFINITY;
    for (const MetricsRecord& rec : r.records) {
      if (rec.step <= 500) best = std::min(best, rec.val_loss);
    }
    ok = ok && best < uniform;
    per_seed += fmt(" %.4f", best);
  }
  return {ok, fmt("best val loss by step 500 per seed:%s (< ln 256 = %.4f)", per_seed.c_str(),
                  uniform)};
}

Outcome c8_determinism() {
  const int saved = num_threads();
  set_num_threads(1);
  ExperimentConfig e = desk_experiment(Parameterization::lost, 7, 40);
  e.train.eval_every = 10;
  auto once = [&] {
    const ByteDataset data = make_dataset(e);
    Model<float> model = Model<float>::build(e.model);
    TrainResult r = train_loop(model, data, e.train);
    return std::pair{std::move(r), encode_checkpoint(model, e)};
  };
  const auto [a, ca] = once();
  const auto [b, cb] = once();
  set_num_threads(saved);
  bool same = a.records.size() == b.records.size();
  for (std::size_t i = 0; same && i < a.records.size(); ++i) {
    MetricsRecord x = a.records[i], y = b.records[i];
    x.wallclock_seconds = y.wallclock_seconds = 0;
    same = x.to_json() == y.to_json();
  }
  const bool ckpt = ca == cb;
  return {same && ckpt, fmt("two single-threaded 40-step runs: %zu records %s, checkpoints "
                            "(%zu bytes) %s",
                            a.records.size(), same ? "identical" : "DIFFER", ca.size(),
                            ckpt ? "bit-identical" : "DIFFER")};
}

Outcome c9_memory() {
  const MemoryEstimate dense =
      memory_estimate(ModelConfig::preset("1b"), 2.0, OptimizerKind::adam, 1, 256);
  const MemoryEstimate lost =
      memory_estimate(lost_preset("1b", 512), 2.0, OptimizerKind::adam, 1, 256);
  const double ratio = lost.total() / dense.total();
  return {ratio < 0.55, fmt("1b, adam, 2-byte scalars, batch 1 x 256: lost %.2f GB / dense %.2f GB "
                            "= %.3f (< 0.55)",
                            lost.total() / 1e9, dense.total() / 1e9, ratio)};
}

Outcome c10_storage() {
  const ModelStorageCompare s = model_storage_compare(lost_preset("60m", 128));
  const double st = static_cast<double>(s.structured) / 1e6;
  const double el = static_cast<double>(s.unstructured_dense_shape) / 1e6;
  const bool ok = std::abs(st - 43) / 43 <= 0.10 && std::abs(el - 68) / 68 <= 0.10;
  return {ok,
          fmt("60m r128 rho 0.01: structured %.2fM (43 +-10%%), element-wise %.2fM "
              "(68 +-10%%); with int64 index per value %.2fM, with bitmask %.2fM",
              st, el, static_cast<double>(s.unstructured_index) / 1e6, s.unstructured_mask / 1e6)};
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();
  std::vector<int> only;
  std::size_t steps = 2000;
  CLI::App app{"LOST acceptance criteria"};
  app.add_option("--only", only, "Criteria to run (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--ablation-steps", steps, "Steps per run for criterion 6");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> want(only.begin(), only.end());
  auto selected = [&](int i) { return want.empty() || want.count(i) > 0; };

  DeskRuns runs;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"parameter counts", c1_param_counts},
      {"exact decomposition", c2_exact_decomposition},
      {"gradient fidelity", c3_gradients},
      {"combine-mode equivalence", c4_combine_equivalence},
      {"truncation residual", c5_eckart_young},
      {"desk ablation ordering", [&] { return c6_desk_ablation(runs, steps); }},
      {"beats uniform loss", [&] { return c7_beats_uniform(runs); }},
      {"determinism", c8_determinism},
      {"memory direction", c9_memory},
      {"storage comparison", c10_storage},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += o.passed ? 0 : 1;
    std::printf("%s %d %s: %s\n", o.passed ? "PASS" : "FAIL", id, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
