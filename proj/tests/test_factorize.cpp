#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "lost/factorize.hpp"
#include "lost/init.hpp"
#include "lost/kernels.hpp"
#include "lost/lost_linear.hpp"

using namespace lost;
using namespace lost::test;

TEST_CASE("truncate_svd of diag(4, 1) at rank 1") {
  const MatrixD w{{4, 0}, {0, 1}};
  const LowRankFactors f = truncate_svd(svd(w), 1);
  REQUIRE(f.rank() == 1);
  CHECK(f.A(0, 0) == doctest::Approx(2.0));
  CHECK(f.A(1, 0) == doctest::Approx(0.0));
  CHECK(f.B(0, 0) == doctest::Approx(2.0));
  CHECK(f.B(1, 0) == doctest::Approx(0.0));
  const MatrixD ab = naive_mul(f.A, naive_t(f.B));
  CHECK(max_abs(ab, MatrixD{{4, 0}, {0, 0}}) < 1e-14);
}

TEST_CASE("full-rank truncation reconstructs") {
  const MatrixD w = gaussian(10, 6, 4);
  const LowRankFactors f = truncate_svd(svd(w), 6);
  CHECK(rel_diff(naive_mul(f.A, naive_t(f.B)), w) < 1e-10);
}

TEST_CASE("truncation residual is the tail energy") {
  const MatrixD w = gaussian(16, 12, 5);
  const SvdResult s = svd(w);
  const LowRankFactors f = truncate_svd(s, 4);
  const MatrixD resid = sub(w, naive_mul(f.A, naive_t(f.B)));
  double tail = 0;
  for (std::size_t i = 4; i < s.S.size(); ++i) tail += s.S[i] * s.S[i];
  CHECK(std::abs(fro(resid) * fro(resid) - tail) / tail < 1e-9);
}

TEST_CASE("complement sources") {
  const MatrixD w = gaussian(16, 12, 6);
  const SvdResult s = svd(w);
  Rng rng(1);
  const MatrixD rem_all = build_complement(w, s, {CompSource::rem, 12}, rng);
  CHECK(fro(rem_all) < 1e-12);
  CHECK(rel_diff(build_complement(w, s, {CompSource::top, 12}, rng), w) < 1e-10);
  for (std::size_t rc : {1, 5, 11}) {
    const MatrixD rem = build_complement(w, s, {CompSource::rem, rc}, rng);
    const MatrixD top = build_complement(w, s, {CompSource::top, rc}, rng);
    CHECK(rel_diff(add(rem, top), w) < 1e-10);
  }
  CHECK(max_abs(build_complement(w, s, {CompSource::ini, 3}, rng), w) == 0.0);

  const MatrixD bot = build_complement(w, s, {CompSource::bot, 3}, rng);
  double want = 0;
  for (std::size_t i = 9; i < 12; ++i) want += s.S[i] * s.S[i];
  CHECK(fro(bot) * fro(bot) == doctest::Approx(want).epsilon(1e-10));

  Rng r1(5), r2(5);
  const MatrixD rand1 = build_complement(w, s, {CompSource::rand, 4}, r1);
  const MatrixD rand2 = build_complement(w, s, {CompSource::rand, 4}, r2);
  CHECK(max_abs(rand1, rand2) == 0.0);
  // energy of 4 distinct triplets
  const double e = fro(rand1) * fro(rand1);
  CHECK(e > s.S[11] * s.S[11] * 4 - 1e-9);
  CHECK(e < s.S[0] * s.S[0] * 4 + 1e-9);
}

TEST_CASE("channel importance") {
  const MatrixD c{{3, 0}, {4, 0}};
  Rng rng(0);
  const std::vector<double> l2 = channel_importance(c, Criterion::l2, rng);
  CHECK(l2[0] == doctest::Approx(5.0));
  CHECK(l2[1] == 0.0);
  const std::vector<double> l1 = channel_importance(c, Criterion::l1, rng);
  CHECK(l1[0] == doctest::Approx(7.0));
  CHECK(l1[1] == 0.0);

  const MatrixD w = gaussian(8, 6, 9);
  const std::vector<double> got = channel_importance(w, Criterion::l2, rng);
  for (std::size_t j = 0; j < 6; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 8; ++i) s += w(i, j) * w(i, j);
    CHECK(std::abs(got[j] - std::sqrt(s)) < 1e-12);
  }
  Rng a(3), b(3);
  CHECK(channel_importance(w, Criterion::random, a) == channel_importance(w, Criterion::random, b));
}

TEST_CASE("select_channels") {
  const std::vector<double> s{5, 0, 7};
  CHECK(select_channels(s, 2).indices == std::vector<std::size_t>{0, 2});
  const std::vector<double> eq(5, 1.0);
  CHECK(select_channels(eq, 2).indices == std::vector<std::size_t>{0, 1});

  Rng rng(12);
  std::vector<double> scores(64);
  for (double& v : scores) v = rng.uniform();
  std::vector<std::size_t> order(64);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  });
  std::vector<std::size_t> want(order.begin(), order.begin() + 7);
  std::sort(want.begin(), want.end());
  CHECK(select_channels(scores, 7).indices == want);
}

TEST_CASE("build_sparse gathers columns of W") {
  const MatrixD w = gaussian(3, 3, 2);
  ChannelSelection all;
  all.indices = {0, 1, 2};
  CHECK(max_abs(build_sparse(w, all), w) == 0.0);
  ChannelSelection third;
  third.indices = {2};
  const MatrixD ws = build_sparse(w, third);
  REQUIRE(ws.cols() == 1);
  for (std::size_t i = 0; i < 3; ++i) CHECK(ws(i, 0) == w(i, 2));

  const MatrixD big = gaussian(9, 20, 3);
  ChannelSelection some;
  some.indices = {1, 4, 5, 17};
  const MatrixD g = build_sparse(big, some);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(g(i, j) == big(i, some.indices[j]));
}

TEST_CASE("channel_count") {
  CHECK(channel_count(0.01, 512) == 6);
  CHECK(channel_count(0.01, 1376) == 14);
  CHECK(channel_count(1.0, 20) == 20);
  CHECK(channel_count(1e-9, 20) == 1);
  CHECK(channel_count(0.25, 8) == 2);
}

TEST_CASE("lost_init picks k channels and decomposes W exactly") {
  LostInitOptions o;
  o.rank = 8;
  o.sparsity = 0.01;
  o.gamma = 0.7;
  Rng rng(4);
  const LostLinear<double> l = lost_init(64, 512, o, rng);
  CHECK(l.k() == 6);
  CHECK(l.rank() == 8);
  CHECK(l.Ws().rows() == 64);
  CHECK(l.Ws().cols() == 6);

  o.rank = 6;
  o.rank_comp = 6;
  o.sparsity = 0.2;
  Rng rng2(5);
  const LostInitTrace t = lost_init_traced(20, 14, o, rng2);
  const MatrixD ab = naive_mul(t.layer.A(), naive_t(t.layer.B()));
  CHECK(rel_diff(add(ab, t.complement), t.w) < 1e-10);
  const double lhs = fro(t.w) * fro(t.w);
  const double rhs = fro(ab) * fro(ab) + fro(t.complement) * fro(t.complement);
  CHECK(std::abs(lhs - rhs) / lhs < 1e-9);
  for (std::size_t j = 0; j < t.layer.k(); ++j)
    for (std::size_t i = 0; i < 20; ++i)
      CHECK(t.layer.Ws()(i, j) == t.w(i, t.layer.selection().indices[j]));
}

TEST_CASE("degenerate full-density layer is allowed") {
  LostInitOptions o;
  o.rank = 6;
  o.sparsity = 1.0;
  Rng rng(1);
  const LostLinear<double> l = lost_init(8, 6, o, rng);
  CHECK(l.param_count() == 6 * 14 + 48);
  CHECK(l.param_count() >= 48);
}

TEST_CASE("alternative factor families") {
  Rng rng(1);
  const LowRankFactors k = alt_lowrank_init(20, 30, 4, LowRankInit::kaiming, rng);
  for (double v : k.A.flat()) CHECK(v == 0.0);

  Rng rc(2);
  const LowRankFactors c = alt_lowrank_init(200, 512, 128, LowRankInit::cola, rc);
  const MatrixD ab = matmul_nt(c.A, c.B);
  double q = 0;
  for (double v : ab.flat()) q += v * v;
  const double var = q / static_cast<double>(ab.size());
  CHECK(std::abs(var - 2.0 / 512) / (2.0 / 512) < 0.10);

  Rng r1(3), r2(3);
  const LowRankFactors s = alt_lowrank_init(12, 9, 3, LowRankInit::svd, r1);
  const MatrixD w = init_matrix(12, 9, InitSpec::kaiming(), r2);
  const LowRankFactors t = truncate_svd(svd(w), 3);
  CHECK(max_abs(s.A, t.A) == 0.0);
  CHECK(max_abs(s.B, t.B) == 0.0);
}

TEST_CASE("parse errors list valid names") {
  CHECK_THROWS_WITH_AS(parse_comp_source("middle"), doctest::Contains("rem"), ParameterError);
  CHECK(parse_criterion("l1") == Criterion::l1);
  CHECK(to_string(LowRankInit::cola) == "cola");
}
