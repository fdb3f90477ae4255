#include <doctest.h>

#include <cmath>

#include "lost/accounting.hpp"
#include "lost/lost_linear.hpp"

using namespace lost;

namespace {

ModelConfig lost_preset(const char* name, std::size_t rank) {
  ModelConfig c = ModelConfig::preset(name);
  c.parameterization = Parameterization::lost;
  c.rank = rank;
  c.sparsity = 0.01;
  return c;
}

}  // namespace

TEST_CASE("single 512 x 512 layer") {
  CHECK(lost_layer_count(512, 512, 128, 0.01) == 134144);
  ChannelSelection sel;
  for (std::size_t j = 0; j < 6; ++j) sel.indices.push_back(j * 80);
  const LostLinear<double> l(MatrixD(512, 128), MatrixD(512, 128), MatrixD(512, 6), sel, 0.7,
                             Activation::silu, Combine::output_avg);
  CHECK(l.param_count() == 134144);
  CHECK(512 * 512 == 262144);
}

TEST_CASE("60m and 130m totals") {
  const double dense60 = static_cast<double>(count_params(ModelConfig::preset("60m")).total());
  const double lost60 = static_cast<double>(count_params(lost_preset("60m", 128)).total());
  const double dense130 = static_cast<double>(count_params(ModelConfig::preset("130m")).total());
  const double lost130 = static_cast<double>(count_params(lost_preset("130m", 256)).total());
  CHECK(std::abs(dense60 - 58e6) <= 1e6);
  CHECK(std::abs(lost60 - 43e6) <= 1e6);
  CHECK(std::abs(dense130 - 134e6) <= 2e6);
  CHECK(std::abs(lost130 - 94e6) <= 2e6);
}

TEST_CASE("per-layer arithmetic of the 60m LOST config") {
  const ParamReport r = count_params(lost_preset("60m", 128));
  const std::size_t attn = 4 * (128 * 1024 + 512 * 6);
  const std::size_t ffn = 2 * (128 * (1376 + 512) + 1376 * 6) + (128 * (512 + 1376) + 512 * 14);
  const std::size_t fixed = 2 * 32000 * 512 + 256 * 512 + 17 * 512;
  CHECK(r.total() == 8 * (attn + ffn) + fixed);
  CHECK(r.index_count == 8 * (4 * 6 + 2 * 6 + 14));
}

TEST_CASE("break-even rank and degenerate flag") {
  ModelConfig c = ModelConfig::desk();
  c.rank = 40;
  const ParamReport r = count_params(c);
  const LayerCount& q = r.layers[0];
  CHECK(q.m == 64);
  CHECK(q.n == 64);
  // r (m + n) + m k >= m n  at  r >= (4096 - 64) / 128 = 31.5
  CHECK(q.break_even_rank == 32);
  CHECK(q.degenerate);
  c.rank = 16;
  CHECK_FALSE(count_params(c).layers[0].degenerate);
}

TEST_CASE("storage conventions for one layer") {
  const StorageCompare s = sparse_storage_compare(512, 512, 0.01);
  CHECK(s.structured_total() == 3078);
  CHECK(s.unstructured_values == 2622);
  CHECK(s.unstructured_index_total() == 2 * 2622);
  CHECK(s.unstructured_mask_total(16.0) == doctest::Approx(2622 + 512.0 * 512 / 16));
  const StorageCompare full = sparse_storage_compare(30, 20, 1.0);
  CHECK(full.structured_total() == 30 * 20 + 20);
}

TEST_CASE("60m structured vs element-wise storage") {
  const ModelStorageCompare s = model_storage_compare(lost_preset("60m", 128));
  CHECK(std::abs(static_cast<double>(s.structured) - 43e6) / 43e6 < 0.10);
  CHECK(std::abs(static_cast<double>(s.unstructured_dense_shape) - 68e6) / 68e6 < 0.10);
  CHECK(s.structured < s.unstructured_index);
  CHECK(s.unstructured_index < s.unstructured_dense_shape);
}

TEST_CASE("memory estimate") {
  const ModelConfig d = ModelConfig::preset("1b");
  const MemoryEstimate none = memory_estimate(d, 2.0, OptimizerKind::none, 0, 256);
  CHECK(none.total() == doctest::Approx(none.weights + none.gradients));
  CHECK(none.activations == 0.0);

  const MemoryEstimate b1 = memory_estimate(d, 2.0, OptimizerKind::adam, 1, 256);
  const MemoryEstimate b2 = memory_estimate(d, 2.0, OptimizerKind::adam, 2, 256);
  CHECK(b2.activations == doctest::Approx(2 * b1.activations));
  CHECK(b2.weights == b1.weights);
  CHECK(b2.gradients == b1.gradients);
  CHECK(b2.optimizer_states == b1.optimizer_states);
  CHECK(b1.optimizer_states == doctest::Approx(2 * b1.gradients));

  const MemoryEstimate lost =
      memory_estimate(lost_preset("1b", 512), 2.0, OptimizerKind::adam, 1, 256);
  CHECK(lost.total() < 0.55 * b1.total());
  CHECK(lost.index_bytes > 0);
  CHECK_FALSE(lost.assumptions.empty());
}

TEST_CASE("counts grow with rank and sparsity") {
  ModelConfig c = ModelConfig::desk();
  std::size_t prev = 0;
  for (std::size_t r = 1; r <= 48; r += 7) {
    c.rank = r;
    const std::size_t t = count_params(c).total();
    CHECK(t > prev);
    prev = t;
  }
  c.rank = 8;
  prev = 0;
  for (double rho : {0.01, 0.1, 0.3, 0.7, 1.0}) {
    c.sparsity = rho;
    const std::size_t t = count_params(c).total();
    CHECK(t > prev);
    prev = t;
  }
}
