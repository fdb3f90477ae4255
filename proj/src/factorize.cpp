#include "lost/factorize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "lost/init.hpp"
#include "lost/kernels.hpp"
#include "lost/lost_linear.hpp"

namespace lost {
namespace {

template <class E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<std::string_view, E>, N>& names,
             const char* what) {
  for (const auto& [name, value] : names) {
    if (name == s) return value;
  }
  std::string valid;
  for (const auto& [name, value] : names) {
    if (!valid.empty()) valid += ", ";
    valid += name;
  }
  throw ParameterError(std::string("unknown ") + what + " '" + std::string(s) +
                       "' (valid: " + valid + ")");
}

constexpr std::array<std::pair<std::string_view, CompSource>, 5> kSources{{
    {"rem", CompSource::rem},
    {"top", CompSource::top},
    {"bot", CompSource::bot},
    {"rand", CompSource::rand},
    {"ini", CompSource::ini},
}};
constexpr std::array<std::pair<std::string_view, Criterion>, 3> kCriteria{{
    {"l2", Criterion::l2},
    {"l1", Criterion::l1},
    {"random", Criterion::random},
}};
constexpr std::array<std::pair<std::string_view, LowRankInit>, 4> kFamilies{{
    {"svd", LowRankInit::svd},
    {"kaiming", LowRankInit::kaiming},
    {"xavier", LowRankInit::xavier},
    {"cola", LowRankInit::cola},
}};

template <class E, std::size_t N>
std::string_view enum_name(E v, const std::array<std::pair<std::string_view, E>, N>& names) {
  for (const auto& [name, value] : names) {
    if (value == v) return name;
  }
  return "?";
}

}  // namespace

std::string_view to_string(CompSource s) { return enum_name(s, kSources); }
std::string_view to_string(Criterion c) { return enum_name(c, kCriteria); }
std::string_view to_string(LowRankInit f) { return enum_name(f, kFamilies); }
CompSource parse_comp_source(std::string_view s) {
  return parse_enum(s, kSources, "complement source");
}
Criterion parse_criterion(std::string_view s) { return parse_enum(s, kCriteria, "criterion"); }
LowRankInit parse_lowrank_init(std::string_view s) {
  return parse_enum(s, kFamilies, "low-rank init family");
}

std::size_t channel_count(double rho, std::size_t n) {
  if (!(rho > 0.0 && rho <= 1.0)) {
    throw ParameterError("sparsity must lie in (0, 1], got " + std::to_string(rho));
  }
  // 0.01 * 300 = 3.0000000000000004
  const double raw = rho * static_cast<double>(n);
  const double snapped = std::nearbyint(raw);
  const double k = std::abs(raw - snapped) < 1e-9 * std::max(1.0, raw) ? snapped : std::ceil(raw);
  return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, n);
}

std::size_t default_rank_comp(std::size_t m, std::size_t n) {
  const std::size_t p = std::min(m, n);
  return std::max<std::size_t>(1, std::min<std::size_t>(256, p - 1));
}

LowRankFactors truncate_svd(const SvdResult& svd, std::size_t r) {
  const std::size_t p = svd.S.size();
  if (r < 1 || r > p) {
    throw ParameterError("truncate_svd: rank " + std::to_string(r) + " outside [1, " +
                         std::to_string(p) + "]");
  }
  LowRankFactors f{MatrixD(svd.U.rows(), r), MatrixD(svd.V.rows(), r)};
  for (std::size_t k = 0; k < r; ++k) {
    const double root = std::sqrt(svd.S[k]);
    for (std::size_t i = 0; i < svd.U.rows(); ++i) f.A(i, k) = root * svd.U(i, k);
    for (std::size_t j = 0; j < svd.V.rows(); ++j) f.B(j, k) = root * svd.V(j, k);
  }
  return f;
}

MatrixD build_complement(const MatrixD& w, const SvdResult& svd, const CompSpec& spec, Rng& rng) {
  if (spec.source == CompSource::ini) return w;
  const std::size_t p = svd.S.size();
  const std::size_t rc = spec.rank_comp;
  if (rc == 0 || rc > p) {
    throw ParameterError("build_complement: rank_comp " + std::to_string(rc) + " outside [1, " +
                         std::to_string(p) + "] for " + shape_str(svd.U.rows(), svd.V.rows()));
  }
  switch (spec.source) {
    case CompSource::rem:
      return sum_triplets(svd, rc, p);
    case CompSource::top:
      return sum_triplets(svd, 0, rc);
    case CompSource::bot:
      return sum_triplets(svd, p - rc, p);
    case CompSource::rand: {
      std::vector<std::size_t> pool(p);
      std::iota(pool.begin(), pool.end(), 0);
      for (std::size_t i = 0; i < rc; ++i) {
        const std::size_t j = i + rng.below(p - i);
        std::swap(pool[i], pool[j]);
      }
      pool.resize(rc);
      std::sort(pool.begin(), pool.end());
      return sum_triplets(svd, pool);
    }
    case CompSource::ini:
      break;
  }
  return w;
}

std::vector<double> channel_importance(const MatrixD& w_comp, Criterion criterion, Rng& rng) {
  if (w_comp.empty()) throw ParameterError("channel_importance: empty matrix");
  const std::size_t n = w_comp.cols();
  std::vector<double> scores(n, 0.0);
  switch (criterion) {
    case Criterion::l2:
      for (std::size_t i = 0; i < w_comp.rows(); ++i)
        for (std::size_t j = 0; j < n; ++j) scores[j] += w_comp(i, j) * w_comp(i, j);
      for (double& s : scores) s = std::sqrt(s);
      break;
    case Criterion::l1:
      for (std::size_t i = 0; i < w_comp.rows(); ++i)
        for (std::size_t j = 0; j < n; ++j) scores[j] += std::abs(w_comp(i, j));
      break;
    case Criterion::random:
      for (double& s : scores) s = rng.uniform();
      break;
  }
  return scores;
}

ChannelSelection select_channels(std::span<const double> scores, std::size_t k) {
  const std::size_t n = scores.size();
  if (k < 1 || k > n) {
    throw ParameterError("select_channels: k = " + std::to_string(k) + " outside [1, " +
                         std::to_string(n) + "]");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                    });
  ChannelSelection sel;
  sel.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(sel.indices.begin(), sel.indices.end());
  return sel;
}

MatrixD build_sparse(const MatrixD& w, const ChannelSelection& sel) {
  return gather_columns(w, sel.indices);
}

LowRankFactors alt_lowrank_init(std::size_t m, std::size_t n, std::size_t r, LowRankInit family,
                                Rng& rng) {
  if (r < 1 || r > std::min(m, n)) {
    throw ParameterError("alt_lowrank_init: rank " + std::to_string(r) + " invalid for " +
                         shape_str(m, n));
  }
  switch (family) {
    case LowRankInit::svd: {
      const MatrixD w = init_matrix(m, n, InitSpec::kaiming(), rng);
      return truncate_svd(svd(w), r);
    }
    case LowRankInit::kaiming: {
      const double std = std::sqrt(2.0 / static_cast<double>(n));
      MatrixD a(m, r);
      MatrixD b = init_matrix(n, r, InitSpec::gaussian(std), rng);
      return {std::move(a), std::move(b)};
    }
    case LowRankInit::xavier: {
      MatrixD a = init_matrix(m, r, InitSpec::xavier(), rng);
      MatrixD b = init_matrix(n, r, InitSpec::xavier(), rng);
      return {std::move(a), std::move(b)};
    }
    case LowRankInit::cola: {
      const double var =
          std::sqrt(2.0 / static_cast<double>(n)) / std::sqrt(static_cast<double>(r));
      const double std = std::sqrt(var);
      MatrixD a = init_matrix(m, r, InitSpec::gaussian(std), rng);
      MatrixD b = init_matrix(n, r, InitSpec::gaussian(std), rng);
      return {std::move(a), std::move(b)};
    }
  }
  throw ParameterError("alt_lowrank_init: unknown family");
}

LostInitTrace lost_init_traced(std::size_t m, std::size_t n, const LostInitOptions& opts,
                               Rng& rng) {
  if (opts.rank < 1 || opts.rank > std::min(m, n)) {
    throw ParameterError("lost_init: rank " + std::to_string(opts.rank) + " invalid for " +
                         shape_str(m, n));
  }
  if (!(opts.gamma >= 0.0 && opts.gamma <= 1.0)) {
    throw ParameterError("lost_init: gamma must lie in [0, 1]");
  }
  const std::size_t k = channel_count(opts.sparsity, n);

  LostInitTrace t;
  t.w = init_matrix(m, n, InitSpec::kaiming(), rng);
  const bool need_svd = opts.lowrank_init == LowRankInit::svd || opts.source != CompSource::ini;
  if (need_svd) t.svd = svd(t.w);

  LowRankFactors factors;
  if (opts.lowrank_init == LowRankInit::svd) {
    factors = truncate_svd(t.svd, opts.rank);
  } else {
    Rng sub = rng.derive("factors");
    factors = alt_lowrank_init(m, n, opts.rank, opts.lowrank_init, sub);
  }

  t.rank_comp = opts.rank_comp == 0 ? default_rank_comp(m, n) : opts.rank_comp;
  Rng comp_rng = rng.derive("complement");
  t.complement = build_complement(t.w, t.svd, {opts.source, t.rank_comp}, comp_rng);

  Rng crit_rng = rng.derive("criterion");
  t.scores = channel_importance(t.complement, opts.criterion, crit_rng);
  ChannelSelection sel = select_channels(t.scores, k);
  sel.source = opts.source;
  sel.criterion = opts.criterion;
  MatrixD ws = build_sparse(t.w, sel);

  t.layer = LostLinear<double>(std::move(factors.A), std::move(factors.B), std::move(ws),
                               std::move(sel), opts.gamma, opts.activation, opts.combine);
  return t;
}

LostLinear<double> lost_init(std::size_t m, std::size_t n, const LostInitOptions& opts, Rng& rng) {
  return lost_init_traced(m, n, opts, rng).layer;
}

LostLinear<double> lowrank_only_init(std::size_t m, std::size_t n, std::size_t r,
                                     LowRankInit family, Activation activation, Rng& rng) {
  LowRankFactors f = alt_lowrank_init(m, n, r, family, rng);
  return LostLinear<double>(std::move(f.A), std::move(f.B), MatrixD(m, 0), ChannelSelection{}, 1.0,
                            activation, Combine::output_avg);
}

}  // namespace lost
