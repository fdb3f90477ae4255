#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "helpers.hpp"
#include "lost/data.hpp"
#include "lost/lost_linear.hpp"
#include "lost/optim.hpp"
#include "lost/train.hpp"

using namespace lost;
using namespace lost::test;

namespace {

ModelConfig small_model() {
  ModelConfig c;
  c.n_layers = 1;
  c.d_model = 16;
  c.d_ff = 43;
  c.n_heads = 2;
  c.seq_len = 16;
  c.rank = 4;
  c.rank_comp = 4;
  c.sparsity = 0.1;
  return c;
}

TrainConfig short_train(std::size_t steps) {
  TrainConfig t;
  t.total_steps = steps;
  t.batch_size = 4;
  t.eval_every = 10;
  t.eval_batches = 2;
  return t;
}

ByteDataset text_data(std::size_t seq, std::uint64_t seed = 0) {
  const std::string s = synthetic_text(20000, 0);
  return ByteDataset(std::vector<std::uint8_t>(s.begin(), s.end()), seq, 0.9, seed);
}

}  // namespace

TEST_CASE("schedule closed form") {
  TrainConfig c;
  c.total_steps = 1000;
  c.warmup_steps = 100;
  c.peak_lr = 2e-3;
  c.final_lr_fraction = 0.1;
  CHECK(lr_at(0, c) == 0.0);
  CHECK(lr_at(50, c) == doctest::Approx(1e-3).epsilon(1e-14));
  CHECK(lr_at(100, c) == doctest::Approx(2e-3).epsilon(1e-14));
  const double f = 0.1, c2 = std::cos(std::numbers::pi / 4) * std::cos(std::numbers::pi / 4);
  CHECK(lr_at(550, c) == doctest::Approx(2e-3 * (f + (1 - f) * c2)).epsilon(1e-13));
  CHECK(lr_at(1000, c) == doctest::Approx(2e-4).epsilon(1e-13));
  for (std::size_t s = 100; s < 1000; ++s) CHECK(lr_at(s + 1, c) <= lr_at(s, c));

  TrainConfig frac;
  frac.total_steps = 2000;
  CHECK(frac.warmup() == 200);
  frac.warmup_steps = 5000;
  CHECK_THROWS_AS(frac.validate(), ConfigError);
}

TEST_CASE("adam first step on a unit gradient") {
  TrainConfig c;
  MatrixD w(1, 1, 3.0), g(1, 1, 1.0);
  std::vector<ParamSlot<double>> slots{{"w", &w, &g, true}};
  AdamState<double> st;
  adam_step<double>(slots, st, 0.01, c);
  CHECK(w(0, 0) == doctest::Approx(3.0 - 0.01 / (1 + 1e-8)).epsilon(1e-15));
  for (int i = 0; i < 5; ++i) adam_step<double>(slots, st, 0.01, c);
  CHECK(w(0, 0) == doctest::Approx(3.0 - 0.06 / (1 + 1e-8)).epsilon(1e-14));
}

TEST_CASE("adam leaves parameters alone for zero gradients") {
  TrainConfig c;
  MatrixD w = gaussian(3, 4, 1), g(3, 4);
  const MatrixD w0 = w;
  std::vector<ParamSlot<double>> slots{{"w", &w, &g, true}};
  AdamState<double> st;
  for (int i = 0; i < 3; ++i) adam_step<double>(slots, st, 0.1, c);
  CHECK(max_abs(w, w0) == 0.0);
}

TEST_CASE("adam matches a scalar loop over 100 steps") {
  TrainConfig c;
  c.beta1 = 0.8;
  c.beta2 = 0.99;
  c.weight_decay = 0.05;
  MatrixD w1 = gaussian(4, 5, 2), w2 = gaussian(1, 5, 3);
  MatrixD g1(4, 5), g2(1, 5);
  std::vector<ParamSlot<double>> slots{{"w1", &w1, &g1, true}, {"gain", &w2, &g2, false}};
  std::vector<double> rw, rm, rv;
  std::vector<bool> decay;
  for (double v : w1.flat()) rw.push_back(v), decay.push_back(true);
  for (double v : w2.flat()) rw.push_back(v), decay.push_back(false);
  rm.assign(rw.size(), 0.0);
  rv.assign(rw.size(), 0.0);
  AdamState<double> st;
  Rng rng(4);
  for (int t = 1; t <= 100; ++t) {
    for (double& v : g1.flat()) v = rng.normal();
    for (double& v : g2.flat()) v = rng.normal();
    const double lr = 1e-2 * (1.0 + 0.01 * t);
    adam_step<double>(slots, st, lr, c);
    std::vector<double> g(g1.flat().begin(), g1.flat().end());
    g.insert(g.end(), g2.flat().begin(), g2.flat().end());
    for (std::size_t i = 0; i < rw.size(); ++i) {
      rm[i] = c.beta1 * rm[i] + (1 - c.beta1) * g[i];
      rv[i] = c.beta2 * rv[i] + (1 - c.beta2) * g[i] * g[i];
      const double mh = rm[i] / (1 - std::pow(c.beta1, t));
      const double vh = rv[i] / (1 - std::pow(c.beta2, t));
      rw[i] -= lr * (mh / (std::sqrt(vh) + c.eps) + (decay[i] ? c.weight_decay * rw[i] : 0.0));
    }
  }
  for (std::size_t i = 0; i < 20; ++i) CHECK(std::abs(w1.flat()[i] - rw[i]) < 1e-12);
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(w2.flat()[i] - rw[20 + i]) < 1e-12);
}

TEST_CASE("adam rejects non-finite gradients before touching anything") {
  TrainConfig c;
  MatrixD w1(2, 2, 1.0), g1(2, 2, 1.0), w2(1, 2, 1.0), g2(1, 2, 1.0);
  g2(0, 1) = std::nan("");
  std::vector<ParamSlot<double>> slots{{"first", &w1, &g1, true}, {"second", &w2, &g2, true}};
  AdamState<double> st;
  try {
    adam_step<double>(slots, st, 0.1, c);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.tensor() == "second");
  }
  CHECK(w1(0, 0) == 1.0);
  CHECK(st.t == 0);
}

TEST_CASE("global norm clipping") {
  MatrixD w(1, 2), g1(1, 2), w2(1, 1), g2(1, 1);
  g1(0, 0) = 3;
  g1(0, 1) = 0;
  g2(0, 0) = 4;
  std::vector<ParamSlot<double>> slots{{"a", &w, &g1, true}, {"b", &w2, &g2, true}};
  CHECK(clip_grad_norm<double>(slots, 1.0) == doctest::Approx(5.0));
  CHECK(g1(0, 0) == doctest::Approx(0.6));
  CHECK(g2(0, 0) == doctest::Approx(0.8));
  CHECK(clip_grad_norm<double>(slots, 10.0) == doctest::Approx(1.0));
  CHECK(g2(0, 0) == doctest::Approx(0.8));
}

TEST_CASE("training and validation windows stay in their regions") {
  const ByteDataset d = text_data(32, 5);
  for (std::size_t step = 0; step < 200; ++step) {
    for (std::size_t off : d.train_offsets(step, 8)) CHECK(off + 32 + 1 <= d.train_end());
  }
  const std::vector<TokenBatch> val = d.val_batches(4, 100);
  REQUIRE_FALSE(val.empty());
  const std::string s = synthetic_text(20000, 0);
  // every val target is a byte from the held-out slice at or after val_begin
  std::size_t pos = d.val_begin();
  for (const TokenBatch& b : val) {
    for (std::size_t r = 0; r < b.batch; ++r) {
      CHECK(static_cast<char>(b.inputs[r * b.seq]) == s[pos]);
      pos += b.seq;
    }
  }
  CHECK(pos <= s.size());
}

TEST_CASE("window sampling is a function of seed and step") {
  const ByteDataset a = text_data(16, 1), b = text_data(16, 1), c = text_data(16, 2);
  CHECK(a.train_offsets(7, 8) == b.train_offsets(7, 8));
  CHECK(a.train_offsets(7, 8) != a.train_offsets(8, 8));
  CHECK(a.train_offsets(7, 8) != c.train_offsets(7, 8));
  const TokenBatch t = a.train_batch(3, 2);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t i = 0; i + 1 < 16; ++i)
      CHECK(t.targets[r * 16 + i] == t.inputs[r * 16 + i + 1]);
  CHECK(synthetic_text(5000, 3) == synthetic_text(5000, 3));
  CHECK(synthetic_text(5000, 3) != synthetic_text(5000, 4));
  CHECK_THROWS_AS(ByteDataset(std::vector<std::uint8_t>(100, 'a'), 16, 0.9, 0), InputError);
}

TEST_CASE("teacher spectrum round trip") {
  const std::vector<double> spec{10, 5, 1, 0.1};
  const TeacherData t = make_teacher_dataset(12, 9, spec, 0.0, 50, 3);
  const SvdResult s = svd(t.w_true);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(s.S[i] - spec[i]) < 1e-10);
  for (std::size_t i = 4; i < s.S.size(); ++i) CHECK(s.S[i] < 1e-10);
  CHECK(max_abs(naive_mul(t.x, naive_t(t.w_true)), t.y) < 1e-12);
  const TeacherData u = make_teacher_dataset(12, 9, spec, 0.0, 50, 3);
  CHECK(max_abs(u.x, t.x) == 0.0);
  CHECK(max_abs(u.w_true, t.w_true) == 0.0);
}

TEST_CASE("a realizable teacher is fit to near zero loss") {
  const TeacherData t = make_teacher_dataset(10, 8, {3, 2, 1}, 0.0, 64, 7);
  LostLinear<double> l(gaussian(10, 3, 1), gaussian(8, 3, 2), MatrixD(10, 0), {}, 1.0,
                       Activation::identity, Combine::output_avg);
  TrainConfig c;
  c.beta2 = 0.999;
  c.total_steps = 4000;
  c.warmup_steps = 0;
  c.peak_lr = 2e-2;
  c.final_lr_fraction = 1e-4;
  AdamState<double> st;
  double loss = 0;
  for (std::size_t step = 0; step < c.total_steps; ++step) {
    ForwardCache<double> cache;
    MatrixD d = l.forward(t.x, &cache);
    loss = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      d.flat()[i] -= t.y.flat()[i];
      loss += 0.5 * d.flat()[i] * d.flat()[i] / 64.0;
      d.flat()[i] /= 64.0;
    }
    auto [g, dx] = l.backward(cache, d);
    std::vector<ParamSlot<double>> slots{{"A", &l.A(), &g.dA, false}, {"B", &l.B(), &g.dB, false}};
    adam_step<double>(slots, st, lr_at(step, c), c);
  }
  CHECK(loss < 1e-6);
}

TEST_CASE("records at step zero, every eval_every and the last step") {
  const ByteDataset d = text_data(16);
  Model<float> m = Model<float>::build(small_model());
  const TrainResult r = train_loop(m, d, short_train(25));
  CHECK(r.status == TrainStatus::completed);
  CHECK(r.steps_done == 25);
  REQUIRE(r.records.size() == 4);
  CHECK(r.records[0].step == 0);
  CHECK(r.records[1].step == 10);
  CHECK(r.records[2].step == 20);
  CHECK(r.records[3].step == 25);
  CHECK(r.records[3].tokens_seen == 25u * 4 * 16);
  for (const MetricsRecord& rec : r.records)
    CHECK(rec.val_ppl == doctest::Approx(std::exp(rec.val_loss)));
  CHECK(r.records[3].val_loss < r.records[0].val_loss);
}

TEST_CASE("zero learning rate keeps the validation loss") {
  const ByteDataset d = text_data(16);
  Model<float> m = Model<float>::build(small_model());
  TrainConfig t = short_train(30);
  t.peak_lr = 0.0;
  const TrainResult r = train_loop(m, d, t);
  for (const MetricsRecord& rec : r.records) CHECK(rec.val_loss == r.records[0].val_loss);
}

TEST_CASE("same seed gives the same stream, another seed does not") {
  const ByteDataset d = text_data(16);
  auto run = [&](std::uint64_t seed) {
    ModelConfig mc = small_model();
    mc.seed = seed;
    Model<float> m = Model<float>::build(mc);
    return train_loop(m, d, short_train(20)).records;
  };
  const auto a = run(1), b = run(1), c = run(2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].train_loss == b[i].train_loss);
    CHECK(a[i].val_loss == b[i].val_loss);
    CHECK(a[i].lr == b[i].lr);
  }
  CHECK(a.back().val_loss != c.back().val_loss);
}

TEST_CASE("a constant corpus is memorized") {
  ByteDataset d(std::vector<std::uint8_t>(1000, 'z'), 16, 0.9, 0);
  Model<float> m = Model<float>::build(small_model());
  TrainConfig t = short_train(60);
  t.peak_lr = 1e-2;
  const TrainResult r = train_loop(m, d, t);
  CHECK(r.records.back().val_loss < 0.05);
}

TEST_CASE("non-finite loss halts and checkpoints the pre-step model") {
  const ByteDataset d = text_data(16);
  Model<float> m = Model<float>::build(small_model());
  m.head()(0, 0) = std::nanf("");
  const auto ckpt = std::filesystem::temp_directory_path() / "lost_test_halt.lost";
  std::filesystem::remove(ckpt);
  TrainOutput out;
  out.checkpoint_path = ckpt;
  out.experiment.model = small_model();
  const TrainResult r = train_loop(m, d, short_train(10), out);
  CHECK(r.status == TrainStatus::nan_halt);
  CHECK(r.steps_done == 0);
  CHECK_FALSE(r.message.empty());
  CHECK(std::filesystem::exists(ckpt));
  std::filesystem::remove(ckpt);
}

TEST_CASE("metrics records round-trip through JSON") {
  MetricsRecord r;
  r.step = 12;
  r.lr = 1.0 / 3.0;
  r.train_loss = 2.5;
  r.val_loss = 2.25;
  r.val_ppl = std::exp(2.25);
  r.tokens_seen = 123456789012ull;
  r.wallclock_seconds = 0.1;
  const MetricsRecord b = MetricsRecord::from_json(r.to_json());
  CHECK(b.step == r.step);
  CHECK(b.lr == r.lr);
  CHECK(b.val_ppl == r.val_ppl);
  CHECK(b.tokens_seen == r.tokens_seen);
  CHECK(b.to_json() == r.to_json());
}
