#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lost/matrix.hpp"

namespace lost {

/// batch x seq next-token pairs, row-major.
struct TokenBatch {
  std::vector<std::uint32_t> inputs;
  std::vector<std::uint32_t> targets;
  std::size_t batch = 0;
  std::size_t seq = 0;
};

/// Byte-level corpus split into a leading training region and a trailing
/// validation region. Training windows are drawn at seeded random offsets and
/// depend only on (seed, step); validation windows tile the held-out slice.
class ByteDataset {
 public:
  /// Throws InputError when bytes.size() < 10 * seq_len or a region is too short.
  ByteDataset(std::vector<std::uint8_t> bytes, std::size_t seq_len, double split_fraction,
              std::uint64_t seed);

  std::size_t seq_len() const noexcept { return seq_; }
  std::size_t size() const noexcept { return bytes_.size(); }
  std::size_t train_end() const noexcept { return split_; }
  std::size_t val_begin() const noexcept { return split_; }
  /// Validation windows are this long; shorter than seq_len only for tiny files.
  std::size_t val_seq() const noexcept;

  TokenBatch train_batch(std::size_t step, std::size_t batch) const;
  /// Start offsets of training windows for a step (each window spans seq_len + 1 bytes).
  std::vector<std::size_t> train_offsets(std::size_t step, std::size_t batch) const;
  /// Up to max_batches batches of consecutive validation windows.
  std::vector<TokenBatch> val_batches(std::size_t batch, std::size_t max_batches) const;

 private:
  TokenBatch gather(const std::vector<std::size_t>& offsets, std::size_t seq) const;

  std::vector<std::uint8_t> bytes_;
  std::size_t seq_;
  std::size_t split_;
  std::uint64_t seed_;
};

/// Reads the whole file. Throws InputError when unreadable.
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

ByteDataset make_byte_dataset(const std::filesystem::path& path, std::size_t seq_len,
                              double split_fraction, std::uint64_t seed);

/// Seeded English-like text: a fixed word list with Zipf frequencies and
/// sticky word-to-word transitions, punctuated into sentences and paragraphs.
std::string synthetic_text(std::size_t bytes, std::uint64_t seed);

/// Regression pairs y = x W_true^T + noise with W_true = U diag(spectrum) V^T
/// for random orthonormal U (m x r) and V (n x r), r = spectrum.size().
struct TeacherData {
  MatrixD w_true;  // m x n
  MatrixD x;       // count x n, standard normal
  MatrixD y;       // count x m
};

TeacherData make_teacher_dataset(std::size_t m, std::size_t n, const std::vector<double>& spectrum,
                                 double noise_std, std::size_t count, std::uint64_t seed);

/// Orthonormal columns from modified Gram-Schmidt on a Gaussian draw.
MatrixD random_orthonormal(std::size_t rows, std::size_t cols, std::uint64_t seed);

}  // namespace lost
