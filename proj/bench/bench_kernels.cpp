// Serial reference vs OpenMP kernels, plus one desk training step.
#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "lost/data.hpp"
#include "lost/kernels.hpp"
#include "lost/model.hpp"
#include "lost/optim.hpp"
#include "lost/train.hpp"

using namespace lost;

namespace {

double best_of(int reps, const std::function<void()>& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    best = std::min(best, dt.count());
  }
  return best;
}

Matrix<float> random(std::size_t m, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix<float> a(m, n);
  for (float& v : a.flat()) v = static_cast<float>(rng.normal());
  return a;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();
  int reps = 5;
  int threads = num_threads();
  CLI::App app{"Kernel benchmarks"};
  app.add_option("--reps", reps, "Repetitions per case (best is reported)");
  app.add_option("--threads", threads, "OpenMP threads for the parallel kernels");
  CLI11_PARSE(app, argc, argv);

  struct Case {
    const char* name;
    std::size_t m, n, k;
    Op oa, ob;
  };
  const std::vector<Case> cases{
      {"x W^T   4096x172x64", 4096, 172, 64, Op::N, Op::T},
      {"x B     4096x16x64", 4096, 16, 64, Op::N, Op::N},
      {"dy^T x  172x64x4096", 172, 64, 4096, Op::T, Op::N},
      {"square  512", 512, 512, 512, Op::N, Op::N},
  };
  std::printf("%-24s %12s %12s %12s %9s\n", "gemm (float)", "reference", "1 thread", "threads",
              "speedup");
  for (const Case& c : cases) {
    const Matrix<float> a = c.oa == Op::N ? random(c.m, c.k, 1) : random(c.k, c.m, 1);
    const Matrix<float> b = c.ob == Op::N ? random(c.k, c.n, 2) : random(c.n, c.k, 2);
    Matrix<float> out(c.m, c.n);
    const double ref = best_of(reps, [&] { reference::gemm(c.oa, c.ob, 1.0f, a, b, 0.0f, out); });
    set_num_threads(1);
    const double one = best_of(reps, [&] { gemm(c.oa, c.ob, 1.0f, a, b, 0.0f, out); });
    set_num_threads(threads);
    const double par = best_of(reps, [&] { gemm(c.oa, c.ob, 1.0f, a, b, 0.0f, out); });
    const double flops = 2.0 * static_cast<double>(c.m * c.n * c.k);
    std::printf("%-24s %9.2f GF %9.2f GF %9.2f GF %8.1fx\n", c.name, flops / ref / 1e9,
                flops / one / 1e9, flops / par / 1e9, ref / par);
  }

  const Matrix<float> z = random(4096, 172, 3);
  const double sref = best_of(reps, [&] { (void)reference::silu(z); });
  const double spar = best_of(reps, [&] { (void)silu(z); });
  std::printf("%-24s %9.3f ms %9s %12.3f ms %8.1fx\n", "silu 4096x172", sref * 1e3, "", spar * 1e3,
              sref / spar);

  Matrix<float> q = random(32 * 128, 64, 4), k = random(32 * 128, 64, 5),
                v = random(32 * 128, 64, 6);
  Matrix<float> probs;
  set_num_threads(1);
  const double a1 = best_of(reps, [&] { (void)causal_attention(q, k, v, 32, 128, 4, probs); });
  set_num_threads(threads);
  const double ap = best_of(reps, [&] { (void)causal_attention(q, k, v, 32, 128, 4, probs); });
  std::printf("%-24s %12s %9.3f ms %9.3f ms %8.1fx\n", "attention b32 T128 h4", "", a1 * 1e3,
              ap * 1e3, a1 / ap);

  const std::string text = synthetic_text(200000, 0);
  const ByteDataset data(std::vector<std::uint8_t>(text.begin(), text.end()), 128, 0.9, 0);
  TrainConfig tc;
  tc.total_steps = 10;
  tc.eval_every = 1000;
  tc.eval_batches = 1;
  for (int t : {1, threads}) {
    set_num_threads(t);
    Model<float> model = Model<float>::build(ModelConfig::desk());
    const double s = best_of(1, [&] { train_loop(model, data, tc); });
    std::printf("desk train step, %2d thread(s): %.3f s/step\n", t, s / 10.0);
  }
  return 0;
}
