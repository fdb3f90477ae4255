#include "lost/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "lost/error.hpp"
#include "lost/factorize.hpp"
#include "lost/init.hpp"
#include "lost/kernels.hpp"
#include "lost/svd.hpp"

namespace lost {

double entry_rel_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

double LayerGradcheck::worst() const { return std::max({dA, dB, dWs, dx}); }

namespace {

MatrixD random_matrix(std::size_t m, std::size_t n, Rng& rng, double std = 1.0) {
  MatrixD w(m, n);
  for (double& v : w.flat()) v = std * rng.normal();
  return w;
}

double half_sq(const MatrixD& y) { return 0.5 * frobenius_norm_sq(y); }

// Worst entry error of `analytic` against central differences of f over `param`.
template <class F>
double fd_compare(MatrixD& param, const MatrixD& analytic, double h, F&& f) {
  double worst = 0.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    double& p = param.data()[i];
    const double saved = p;
    p = saved + h;
    const double up = f();
    p = saved - h;
    const double down = f();
    p = saved;
    worst = std::max(worst, entry_rel_error(analytic.data()[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

CheckResult make_check(std::string suite, std::string name, double observed, double tol,
                       std::string detail = {}) {
  return {
      std::move(suite), std::move(name), observed, tol, std::isfinite(observed) && observed <= tol,
      std::move(detail)};
}

std::string shape_detail(std::size_t count, const char* what) {
  return std::to_string(count) + " " + what;
}

}  // namespace

LostLinear<double> random_layer(std::size_t m, std::size_t n, std::size_t r, std::size_t k,
                                double gamma, Activation act, Combine combine, Rng& rng) {
  MatrixD a = random_matrix(m, r, rng, 0.5);
  MatrixD b = random_matrix(n, r, rng, 0.5);
  std::vector<double> scores(n);
  for (double& s : scores) s = rng.uniform();
  ChannelSelection sel = k > 0 ? select_channels(scores, k) : ChannelSelection{};
  MatrixD ws = random_matrix(m, sel.k(), rng, 0.5);
  return LostLinear<double>(std::move(a), std::move(b), std::move(ws), std::move(sel), gamma, act,
                            combine);
}

LayerGradcheck gradcheck_layer(const LostLinear<double>& layer, const MatrixD& x, double h) {
  ForwardCache<double> cache;
  const MatrixD y = layer.forward(x, &cache);
  auto [grads, dx] = layer.backward(cache, y);

  LostLinear<double> probe = layer;
  MatrixD xp = x;
  auto loss = [&] { return half_sq(probe.forward(xp)); };
  LayerGradcheck out;
  out.dA = fd_compare(probe.A(), grads.dA, h, loss);
  out.dB = fd_compare(probe.B(), grads.dB, h, loss);
  out.dWs = fd_compare(probe.Ws(), grads.dWs, h, loss);
  out.dx = fd_compare(xp, dx, h, loss);
  return out;
}

ModelGradcheck gradcheck_model(const Model<double>& model, std::span<const std::uint32_t> inputs,
                               std::span<const std::uint32_t> targets, std::size_t batch,
                               std::size_t seq, double h) {
  ModelCache<double> cache;
  MatrixD dlogits;
  const MatrixD logits = model.forward(inputs, batch, seq, &cache);
  cross_entropy(logits, targets, &dlogits);
  ModelGrads<double> grads = model.backward(cache, dlogits);

  Model<double> probe = model;
  auto slots = probe.params(grads);
  auto loss = [&] { return cross_entropy(probe.forward(inputs, batch, seq), targets); };
  ModelGradcheck out;
  for (auto& slot : slots) {
    const double e = fd_compare(*slot.value, *slot.grad, h, loss);
    out.entries += slot.value->size();
    if (e >= out.worst) {
      out.worst = e;
      out.worst_tensor = slot.name;
    }
  }
  return out;
}

ModelConfig tiny_config(Parameterization p) {
  ModelConfig c;
  c.n_layers = 1;
  c.d_model = 8;
  c.d_ff = 22;
  c.n_heads = 2;
  c.vocab_size = 11;
  c.seq_len = 4;
  c.parameterization = p;
  c.rank = 4;
  c.sparsity = 0.25;
  c.gamma = 0.7;
  c.rank_comp = 2;
  c.seed = 11;
  if (p == Parameterization::lowrank_only) c.lowrank_init = LowRankInit::xavier;
  return c;
}

// ---------------------------------------------------------------------------

std::vector<CheckResult> verify_svd(std::uint64_t seed) {
  Rng rng = Rng(seed).derive("verify.svd");
  const char* suite = "svd";
  double recon = 0, ortho = 0, order = 0, sign = 0, ey = 0;
  bool deterministic = true;
  std::size_t cases = 0;
  for (std::size_t t = 0; t < 40; ++t) {
    const std::size_t m = 1 + rng.below(64), n = 1 + rng.below(48);
    MatrixD w = random_matrix(m, n, rng);
    const bool deficient = t % 5 == 4 && std::min(m, n) > 2;
    if (deficient) {
      const std::size_t r = 1 + rng.below(std::min(m, n) / 2);
      w = matmul_nt(random_matrix(m, r, rng), random_matrix(n, r, rng));
    }
    const SvdResult s = svd(w);
    const std::size_t p = s.S.size();
    ++cases;
    MatrixD us = s.U;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < p; ++j) us(i, j) *= s.S[j];
    recon = std::max(recon, relative_error(matmul_nt(us, s.V), w));
    const MatrixD eye = MatrixD::identity(p);
    ortho = std::max(
        {ortho, max_abs_diff(matmul_tn(s.U, s.U), eye), max_abs_diff(matmul_tn(s.V, s.V), eye)});
    for (std::size_t i = 0; i < p; ++i) {
      if (s.S[i] < 0) order = std::max(order, -s.S[i]);
      if (i + 1 < p && s.S[i + 1] > s.S[i]) order = std::max(order, s.S[i + 1] - s.S[i]);
    }
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t i = 0; i < m; ++i) {
        if (s.U(i, j) != 0.0) {
          if (s.U(i, j) < 0) sign = std::max(sign, -s.U(i, j));
          break;
        }
      }
    }
    const SvdResult again = svd(w);
    deterministic = deterministic && again.U == s.U && again.V == s.V && again.S == s.S;

    // Tail-relative error on full-rank draws only.
    if (deficient) continue;
    const double total = frobenius_norm_sq(w);
    for (std::size_t r = 1; r <= p; ++r) {
      const LowRankFactors f = truncate_svd(s, r);
      const double residual = frobenius_norm_sq(sub(w, matmul_nt(f.A, f.B)));
      double tail = 0.0;
      for (std::size_t i = r; i < p; ++i) tail += s.S[i] * s.S[i];
      const double denom = r < p && tail > 0.0 ? tail : std::max(total, 1e-300);
      ey = std::max(ey, std::abs(residual - tail) / denom);
    }
  }
  const std::string n_cases = shape_detail(cases, "matrices up to 64x48");
  return {
      make_check(suite, "reconstruction rel. Frobenius error", recon, 1e-10, n_cases),
      make_check(suite, "orthonormality max |Q^T Q - I|", ortho, 1e-10, n_cases),
      make_check(suite, "singular values non-increasing and >= 0", order, 0.0, n_cases),
      make_check(suite, "sign convention (first nonzero of U columns >= 0)", sign, 0.0, n_cases),
      make_check(suite, "bit-identical repeat", deterministic ? 0.0 : 1.0, 0.0, n_cases),
      make_check(suite, "Eckart-Young residual = tail energy (rel.)", ey, 1e-9,
                 "every rank r of each full-rank matrix"),
  };
}

std::vector<CheckResult> verify_gradcheck(std::uint64_t seed) {
  Rng rng = Rng(seed).derive("verify.gradcheck");
  const char* suite = "gradcheck";
  std::vector<CheckResult> out;

  {
    double worst = 0.0;
    const double h = 1e-6;
    for (double z : {-3.0, -1.0, 0.5, 2.0}) {
      const double fd = (silu(z + h) - silu(z - h)) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - silu_grad(z)));
    }
    out.push_back(make_check(suite, "silu_grad vs central difference (abs.)", worst, 1e-8,
                             "z in {-3, -1, 0.5, 2}, h = 1e-6"));
  }

  {
    struct Mode {
      Activation act;
      Combine combine;
    };
    const Mode modes[] = {{Activation::silu, Combine::output_avg},
                          {Activation::identity, Combine::output_avg},
                          {Activation::identity, Combine::weight_avg}};
    const double gammas[] = {0.0, 0.7, 1.0};
    double worst = 0.0;
    std::size_t configs = 0;
    for (int extra = 0; extra < 2; ++extra) {
      for (const Mode& mode : modes) {
        for (double g : gammas) {
          const std::size_t m = 2 + rng.below(9), n = 2 + rng.below(9);
          const std::size_t r = 1 + rng.below(std::min(m, n));
          const std::size_t k = 1 + rng.below(n);
          const LostLinear<double> layer = random_layer(m, n, r, k, g, mode.act, mode.combine, rng);
          const MatrixD x = random_matrix(2 + rng.below(3), n, rng);
          worst = std::max(worst, gradcheck_layer(layer, x).worst());
          ++configs;
        }
      }
    }
    out.push_back(make_check(suite, "LOST layer dA, dB, dWs, dx vs central difference", worst, 1e-4,
                             shape_detail(configs,
                                          "configs: silu/identity, output/weight avg, "
                                          "gamma in {0, 0.7, 1}; h = 1e-5")));
  }

  {
    const MatrixD x = random_matrix(5, 7, rng);
    const MatrixD gain = random_matrix(1, 7, rng);
    const MatrixD weight = random_matrix(5, 7, rng);
    RmsCache<double> cache;
    rmsnorm(x, gain, &cache);
    MatrixD dgain(1, 7);
    const MatrixD dx = rmsnorm_backward(cache, gain, weight, dgain);
    MatrixD xp = x, gp = gain;
    auto loss = [&] {
      const MatrixD y = rmsnorm(xp, gp);
      double acc = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) acc += y.data()[i] * weight.data()[i];
      return acc;
    };
    const double worst =
        std::max(fd_compare(xp, dx, 1e-5, loss), fd_compare(gp, dgain, 1e-5, loss));
    out.push_back(make_check(suite, "rmsnorm dx, dgain vs central difference", worst, 1e-4));
  }

  {
    MatrixD logits = random_matrix(6, 9, rng, 2.0);
    std::vector<std::uint32_t> targets(6);
    for (auto& t : targets) t = static_cast<std::uint32_t>(rng.below(9));
    MatrixD dlogits;
    cross_entropy(logits, targets, &dlogits);
    const double worst =
        fd_compare(logits, dlogits, 1e-5, [&] { return cross_entropy(logits, targets); });
    out.push_back(make_check(suite, "cross-entropy dlogits vs central difference", worst, 1e-4));
  }

  struct Variant {
    const char* name;
    Parameterization p;
    Activation act;
    Combine combine;
    double gamma;
  };
  const Variant variants[] = {
      {"lost silu output_avg gamma 0.7", Parameterization::lost, Activation::silu,
       Combine::output_avg, 0.7},
      {"lost identity weight_avg gamma 0.7", Parameterization::lost, Activation::identity,
       Combine::weight_avg, 0.7},
      {"lost silu output_avg gamma 0", Parameterization::lost, Activation::silu,
       Combine::output_avg, 0.0},
      {"lowrank_only silu", Parameterization::lowrank_only, Activation::silu, Combine::output_avg,
       1.0},
      {"dense", Parameterization::dense, Activation::silu, Combine::output_avg, 1.0},
  };
  for (const Variant& v : variants) {
    ModelConfig cfg = tiny_config(v.p);
    cfg.activation = v.act;
    cfg.combine = v.combine;
    cfg.gamma = v.gamma;
    const Model<double> model = Model<double>::build(cfg);
    const std::size_t batch = 2, seq = 4;
    std::vector<std::uint32_t> in(batch * seq), tg(batch * seq);
    for (auto& t : in) t = static_cast<std::uint32_t>(rng.below(cfg.vocab_size));
    for (auto& t : tg) t = static_cast<std::uint32_t>(rng.below(cfg.vocab_size));
    const ModelGradcheck g = gradcheck_model(model, in, tg, batch, seq);
    out.push_back(
        make_check(suite, std::string("tiny model (") + v.name + ") vs central difference", g.worst,
                   1e-3, shape_detail(g.entries, "entries; worst in ") + g.worst_tensor));
  }
  return out;
}

std::vector<CheckResult> verify_decomp(std::uint64_t seed) {
  Rng rng = Rng(seed).derive("verify.decomp");
  const char* suite = "decomp";
  double exact = 0, energy = 0, split = 0;
  const std::size_t cases = 200;
  for (std::size_t t = 0; t < cases; ++t) {
    const std::size_t m = 1 + rng.below(64), n = 1 + rng.below(48);
    const MatrixD w = random_matrix(m, n, rng);
    const SvdResult s = svd(w);
    const std::size_t r = 1 + rng.below(s.S.size());
    const LowRankFactors f = truncate_svd(s, r);
    const MatrixD low = matmul_nt(f.A, f.B);
    Rng unused(0);
    const MatrixD rem = build_complement(w, s, {CompSource::rem, r}, unused);
    const MatrixD top = build_complement(w, s, {CompSource::top, r}, unused);
    exact = std::max(exact, relative_error(add(low, rem), w));
    split = std::max(split, relative_error(add(top, rem), w));
    const double wn = frobenius_norm_sq(w);
    energy = std::max(energy, std::abs(wn - frobenius_norm_sq(low) - frobenius_norm_sq(rem)) / wn);
  }
  const std::string detail = shape_detail(cases, "seeded matrices up to 64x48, r_comp = r");
  return {
      make_check(suite, "A B^T + W_comp(rem) = W (rel. Frobenius)", exact, 1e-10, detail),
      make_check(suite, "||W||^2 = ||A B^T||^2 + ||W_comp||^2 (rel.)", energy, 1e-9, detail),
      make_check(suite, "W_comp(top) + W_comp(rem) = W (rel. Frobenius)", split, 1e-10, detail),
  };
}

std::vector<CheckResult> verify_equivalence(std::uint64_t seed) {
  Rng rng = Rng(seed).derive("verify.equivalence");
  const char* suite = "equivalence";
  std::vector<CheckResult> out;

  double combine = 0, merge = 0, linear = 0, adjoint = 0;
  const std::size_t cases = 50;
  for (std::size_t t = 0; t < cases; ++t) {
    const std::size_t m = 1 + rng.below(24), n = 1 + rng.below(24);
    const std::size_t r = 1 + rng.below(std::min(m, n));
    const std::size_t k = 1 + rng.below(n);
    const double g = rng.uniform();
    const LostLinear<double> out_avg =
        random_layer(m, n, r, k, g, Activation::identity, Combine::output_avg, rng);
    const LostLinear<double> w_avg(out_avg.A(), out_avg.B(), out_avg.Ws(), out_avg.selection(), g,
                                   Activation::identity, Combine::weight_avg);
    const MatrixD x = random_matrix(1 + rng.below(8), n, rng);
    const MatrixD y = out_avg.forward(x);
    combine = std::max(combine, max_abs_diff(y, w_avg.forward(x)));
    merge = std::max(merge, max_abs_diff(y, matmul_nt(x, out_avg.merge_dense())));

    // y(gamma) = gamma y_low + (1 - gamma) y_sparse.
    const LostLinear<double> silu_layer(out_avg.A(), out_avg.B(), out_avg.Ws(), out_avg.selection(),
                                        1.0, Activation::silu, Combine::output_avg);
    const MatrixD y_low = silu_layer.forward(x);
    const MatrixD y_sparse =
        matmul_nt(gather_columns(x, out_avg.selection().indices), out_avg.Ws());
    for (double gg : {0.0, 0.3, 1.0}) {
      const LostLinear<double> l(out_avg.A(), out_avg.B(), out_avg.Ws(), out_avg.selection(), gg,
                                 Activation::silu, Combine::output_avg);
      MatrixD expect = y_low;
      scale(expect, gg);
      axpy(1.0 - gg, y_sparse, expect);
      linear = std::max(linear, max_abs_diff(l.forward(x), expect));
    }

    // <gather_I(u), v> = <u, scatter_I(v)>.
    const MatrixD u = random_matrix(x.rows(), n, rng);
    const MatrixD v = random_matrix(x.rows(), k, rng);
    const auto& idx = out_avg.selection().indices;
    const MatrixD gu = gather_columns(u, idx);
    MatrixD sv(x.rows(), n);
    scatter_add_columns(sv, v, idx, 1.0);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < gu.size(); ++i) lhs += gu.data()[i] * v.data()[i];
    for (std::size_t i = 0; i < u.size(); ++i) rhs += u.data()[i] * sv.data()[i];
    adjoint = std::max(adjoint, std::abs(lhs - rhs));
  }
  const std::string detail = shape_detail(cases, "random layers, identity activation");
  out.push_back(
      make_check(suite, "weight_avg forward = output_avg forward (abs.)", combine, 1e-12, detail));
  out.push_back(make_check(suite, "forward = x merge_dense^T (abs.)", merge, 1e-12, detail));
  out.push_back(
      make_check(suite, "output linear in gamma at {0, 0.3, 1} (abs.)", linear, 1e-12, detail));
  out.push_back(make_check(suite, "gather/scatter adjointness (abs.)", adjoint, 1e-12, detail));

  {
    ModelConfig cfg = tiny_config(Parameterization::lost);
    cfg.gamma = 1.0;
    cfg.activation = Activation::identity;
    cfg.rank = cfg.d_model;  // full rank for every block linear
    const Model<double> lost = Model<double>::build(cfg);
    const Model<double> dense = lost.dense_equivalent();
    const std::size_t batch = 3, seq = 4;
    std::vector<std::uint32_t> in(batch * seq), tg(batch * seq);
    for (auto& t : in) t = static_cast<std::uint32_t>(rng.below(cfg.vocab_size));
    for (auto& t : tg) t = static_cast<std::uint32_t>(rng.below(cfg.vocab_size));

    auto run = [&](const Model<double>& m, ModelGrads<double>& grads) {
      ModelCache<double> cache;
      MatrixD dlogits;
      const double loss = cross_entropy(m.forward(in, batch, seq, &cache), tg, &dlogits);
      grads = m.backward(cache, dlogits);
      return loss;
    };
    ModelGrads<double> gl, gd;
    const double ll = run(lost, gl), ld = run(dense, gd);
    double grad_err = 0.0;
    grad_err =
        std::max({relative_error(gl.embed, gd.embed), relative_error(gl.pos, gd.pos),
                  relative_error(gl.head, gd.head), relative_error(gl.final_norm, gd.final_norm)});
    for (std::size_t b = 0; b < cfg.n_layers; ++b) {
      grad_err = std::max({grad_err, relative_error(gl.blocks[b].norm1, gd.blocks[b].norm1),
                           relative_error(gl.blocks[b].norm2, gd.blocks[b].norm2)});
      for (LinearRole role : kLinearRoles) {
        const auto i = static_cast<std::size_t>(role);
        const auto& layer = std::get<LostLinear<double>>(lost.blocks()[b].linears[i]);
        const MatrixD& dw = gd.blocks[b].lin[i].W;
        // With gamma = 1 and identity: dA = dW B, dB = dW^T A.
        grad_err =
            std::max({grad_err, relative_error(gl.blocks[b].lin[i].lost.dA, matmul(dw, layer.B())),
                      relative_error(gl.blocks[b].lin[i].lost.dB, matmul_tn(dw, layer.A()))});
      }
    }
    out.push_back(make_check(suite, "dense vs LOST model loss (gamma 1, identity, full rank)",
                             std::abs(ll - ld) / std::abs(ld), 1e-8));
    out.push_back(make_check(suite, "dense vs LOST model grads through the factorization", grad_err,
                             1e-8, "rel. Frobenius, worst tensor"));
  }
  return out;
}

std::vector<CheckResult> run_verify(std::string_view suite, std::uint64_t seed) {
  std::vector<CheckResult> out;
  auto append = [&](std::vector<CheckResult> v) {
    out.insert(out.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  };
  const bool all = suite == "all";
  if (all || suite == "svd") append(verify_svd(seed));
  if (all || suite == "gradcheck") append(verify_gradcheck(seed));
  if (all || suite == "decomp") append(verify_decomp(seed));
  if (all || suite == "equivalence") append(verify_equivalence(seed));
  if (!all && out.empty()) {
    throw ParameterError("unknown verify suite '" + std::string(suite) +
                         "' (valid: svd, gradcheck, decomp, equivalence, all)");
  }
  return out;
}

void print_checks(std::ostream& os, const std::vector<CheckResult>& checks) {
  char buf[64];
  for (const CheckResult& c : checks) {
    std::snprintf(buf, sizeof buf, "%.3e <= %.0e", c.observed, c.tolerance);
    os << (c.passed ? "PASS " : "FAIL ") << c.suite << ": " << c.name << "  [" << buf << "]";
    if (!c.detail.empty()) os << "  " << c.detail;
    os << '\n';
  }
}

}  // namespace lost
