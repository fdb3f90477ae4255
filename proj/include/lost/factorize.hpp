#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lost/matrix.hpp"
#include "lost/rng.hpp"
#include "lost/svd.hpp"

namespace lost {

/// Where the complementary matrix W_comp comes from.
enum class CompSource { rem, top, bot, rand, ini };
/// How columns of W_comp are scored.
enum class Criterion { l2, l1, random };
/// Initialization family of the low-rank factors.
enum class LowRankInit { svd, kaiming, xavier, cola };

std::string_view to_string(CompSource s);
std::string_view to_string(Criterion c);
std::string_view to_string(LowRankInit f);
CompSource parse_comp_source(std::string_view s);
Criterion parse_criterion(std::string_view s);
LowRankInit parse_lowrank_init(std::string_view s);

/// A is the output-side factor (m x r), B the input-side factor (n x r).
struct LowRankFactors {
  MatrixD A;
  MatrixD B;
  std::size_t rank() const noexcept { return A.cols(); }
};

/// Ascending, duplicate-free input-channel indices kept by the sparse block.
struct ChannelSelection {
  std::vector<std::size_t> indices;
  CompSource source = CompSource::rem;
  Criterion criterion = Criterion::l2;

  std::size_t k() const noexcept { return indices.size(); }
};

struct CompSpec {
  CompSource source = CompSource::rem;
  std::size_t rank_comp = 256;
};

/// k = ceil(rho * n), clamped to [1, n].
std::size_t channel_count(double rho, std::size_t n);

/// min(256, min(m, n) - 1), at least 1.
std::size_t default_rank_comp(std::size_t m, std::size_t n);

/// A[:, i] = sqrt(S_i) U[:, i], B[:, i] = sqrt(S_i) V[:, i] for i < r.
LowRankFactors truncate_svd(const SvdResult& svd, std::size_t r);

/// W_comp for the given source. `w` is the matrix `svd` decomposes; it is
/// returned unchanged for the `ini` source. `rng` drives the `rand` source.
///   rem: triplets [r_comp, p)      top: [0, r_comp)
///   bot: the r_comp smallest       rand: r_comp distinct uniform triplets
MatrixD build_complement(const MatrixD& w, const SvdResult& svd, const CompSpec& spec, Rng& rng);

/// Per-column score of W_comp: 2-norm, 1-norm, or a seeded uniform draw.
std::vector<double> channel_importance(const MatrixD& w_comp, Criterion criterion, Rng& rng);

/// Top-k scores; ties go to the smaller index. Result sorted ascending.
ChannelSelection select_channels(std::span<const double> scores, std::size_t k);

/// W_s[:, j] = W[:, indices[j]]. Values come from the original W.
MatrixD build_sparse(const MatrixD& w, const ChannelSelection& sel);

/// Factor initialization for the low-rank-init ablation.
///   svd:     truncate_svd(svd(kaiming W)) with W drawn from `rng`
///   kaiming: B ~ N(0, 2/n), A = 0
///   xavier:  A ~ Xavier(m, r), B ~ Xavier(n, r)
///   cola:    A, B ~ N(0, sqrt(2/n)/sqrt(r)) so Var[(AB^T)_ij] = 2/n
/// Non-svd families draw A before B.
LowRankFactors alt_lowrank_init(std::size_t m, std::size_t n, std::size_t r, LowRankInit family,
                                Rng& rng);

}  // namespace lost
