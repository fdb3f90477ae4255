#include "lost/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string_view>

#include "lost/error.hpp"
#include "lost/kernels.hpp"
#include "lost/rng.hpp"

namespace lost {

ByteDataset::ByteDataset(std::vector<std::uint8_t> bytes, std::size_t seq_len,
                         double split_fraction, std::uint64_t seed)
    : bytes_(std::move(bytes)), seq_(seq_len), split_(0), seed_(seed) {
  if (seq_ < 1) throw InputError("byte dataset: seq_len must be positive");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw InputError("byte dataset: split fraction must lie in (0, 1)");
  }
  if (bytes_.size() < 10 * seq_) {
    throw InputError("byte dataset: corpus has " + std::to_string(bytes_.size()) +
                     " bytes, need at least 10 * seq_len = " + std::to_string(10 * seq_));
  }
  split_ =
      static_cast<std::size_t>(std::floor(split_fraction * static_cast<double>(bytes_.size())));
  if (split_ < seq_ + 1) throw InputError("byte dataset: training region shorter than one window");
  if (bytes_.size() - split_ < 2) throw InputError("byte dataset: validation region too short");
}

std::size_t ByteDataset::val_seq() const noexcept {
  return std::min(seq_, bytes_.size() - split_ - 1);
}

std::vector<std::size_t> ByteDataset::train_offsets(std::size_t step, std::size_t batch) const {
  Rng rng = Rng(seed_).derive("train_windows").derive(static_cast<std::uint64_t>(step));
  const std::size_t span = split_ - seq_;  // offsets in [0, split - seq - 1]
  std::vector<std::size_t> offsets(batch);
  for (std::size_t& o : offsets) o = static_cast<std::size_t>(rng.below(span));
  return offsets;
}

TokenBatch ByteDataset::gather(const std::vector<std::size_t>& offsets, std::size_t seq) const {
  TokenBatch b;
  b.batch = offsets.size();
  b.seq = seq;
  b.inputs.resize(b.batch * seq);
  b.targets.resize(b.batch * seq);
  for (std::size_t i = 0; i < b.batch; ++i) {
    for (std::size_t t = 0; t < seq; ++t) {
      b.inputs[i * seq + t] = bytes_[offsets[i] + t];
      b.targets[i * seq + t] = bytes_[offsets[i] + t + 1];
    }
  }
  return b;
}

TokenBatch ByteDataset::train_batch(std::size_t step, std::size_t batch) const {
  return gather(train_offsets(step, batch), seq_);
}

std::vector<TokenBatch> ByteDataset::val_batches(std::size_t batch, std::size_t max_batches) const {
  const std::size_t t = val_seq();
  std::vector<std::size_t> starts;
  for (std::size_t o = split_; o + t + 1 <= bytes_.size(); o += t) starts.push_back(o);
  std::vector<TokenBatch> out;
  for (std::size_t i = 0; i < starts.size() && out.size() < max_batches; i += batch) {
    const std::size_t end = std::min(starts.size(), i + batch);
    out.push_back(
        gather(std::vector<std::size_t>(starts.begin() + static_cast<std::ptrdiff_t>(i),
                                        starts.begin() + static_cast<std::ptrdiff_t>(end)),
               t));
  }
  return out;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ByteDataset make_byte_dataset(const std::filesystem::path& path, std::size_t seq_len,
                              double split_fraction, std::uint64_t seed) {
  return ByteDataset(read_bytes(path), seq_len, split_fraction, seed);
}

namespace {

constexpr std::array<std::string_view, 160> kWords{
    "the",    "of",     "and",    "to",      "a",      "in",      "is",      "that",    "for",
    "it",     "as",     "was",    "with",    "be",     "by",      "on",      "not",     "he",
    "this",   "are",    "or",     "his",     "from",   "at",      "which",   "but",     "have",
    "an",     "had",    "they",   "you",     "were",   "their",   "one",     "all",     "we",
    "can",    "her",    "has",    "there",   "been",   "if",      "more",    "when",    "will",
    "would",  "who",    "so",     "no",      "she",    "other",   "its",     "may",     "these",
    "than",   "some",   "time",   "into",    "only",   "could",   "new",     "them",    "man",
    "two",    "first",  "then",   "do",      "any",    "like",    "my",      "now",     "over",
    "such",   "our",    "what",   "most",    "me",     "made",    "after",   "also",    "did",
    "many",   "before", "must",   "through", "years",  "where",   "much",    "your",    "way",
    "well",   "down",   "should", "because", "each",   "just",    "those",   "people",  "how",
    "too",    "little", "state",  "good",    "very",   "make",    "world",   "still",   "own",
    "see",    "men",    "work",   "long",    "get",    "here",    "between", "both",    "life",
    "being",  "under",  "never",  "day",     "same",   "another", "know",    "while",   "last",
    "might",  "us",     "great",  "old",     "year",   "off",     "come",    "since",   "against",
    "go",     "came",   "right",  "used",    "take",   "three",   "small",   "water",   "house",
    "river",  "light",  "stone",  "number",  "market", "garden",  "letter",  "morning", "field",
    "engine", "window", "answer", "table",   "forest", "winter",  "signal"};

constexpr std::size_t kFollowers = 6;

}  // namespace

std::string synthetic_text(std::size_t bytes, std::uint64_t seed) {
  const std::size_t nw = kWords.size();
  Rng root(seed);
  Rng table_rng = root.derive("transitions");
  // Zipf(1) over the list order.
  std::vector<double> cdf(nw);
  double acc = 0.0;
  for (std::size_t i = 0; i < nw; ++i) {
    acc += 1.0 / static_cast<double>(i + 1);
    cdf[i] = acc;
  }
  for (double& c : cdf) c /= acc;
  std::vector<std::array<std::size_t, kFollowers>> follow(nw);
  for (auto& f : follow) {
    for (std::size_t& w : f) w = static_cast<std::size_t>(table_rng.below(nw));
  }

  Rng rng = root.derive("text");
  auto zipf = [&] {
    const double u = rng.uniform();
    return static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
  };

  std::string out;
  out.reserve(bytes + 32);
  std::size_t prev = zipf();
  std::size_t in_sentence = 0, sentence_len = 6, sentences = 0;
  while (out.size() < bytes) {
    const std::size_t w = rng.uniform() < 0.6 ? follow[prev][rng.below(kFollowers)] : zipf();
    std::string word(kWords[w]);
    if (in_sentence == 0) {
      word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
      sentence_len = 4 + static_cast<std::size_t>(rng.below(10));
    }
    out += word;
    ++in_sentence;
    prev = w;
    if (in_sentence == sentence_len) {
      out += '.';
      in_sentence = 0;
      ++sentences;
      out += sentences % 5 == 0 ? '\n' : ' ';
    } else {
      if (in_sentence > 2 && rng.uniform() < 0.08) out += ',';
      out += ' ';
    }
  }
  out.resize(bytes);
  return out;
}

MatrixD random_orthonormal(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (cols > rows) throw ParameterError("random_orthonormal: cols exceeds rows");
  Rng rng(seed);
  MatrixD q(rows, cols);
  for (double& v : q.flat()) v = rng.normal();
  for (std::size_t j = 0; j < cols; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t p = 0; p < j; ++p) {
        double dot = 0.0;
        for (std::size_t i = 0; i < rows; ++i) dot += q(i, p) * q(i, j);
        for (std::size_t i = 0; i < rows; ++i) q(i, j) -= dot * q(i, p);
      }
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < rows; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < rows; ++i) q(i, j) /= norm;
  }
  return q;
}

TeacherData make_teacher_dataset(std::size_t m, std::size_t n, const std::vector<double>& spectrum,
                                 double noise_std, std::size_t count, std::uint64_t seed) {
  const std::size_t r = spectrum.size();
  if (r < 1 || r > std::min(m, n)) {
    throw ParameterError("teacher dataset: spectrum length " + std::to_string(r) +
                         " must lie in [1, min(m, n)] for " + shape_str(m, n));
  }
  Rng root(seed);
  const MatrixD u = random_orthonormal(m, r, root.derive("U").next_u64());
  MatrixD v = random_orthonormal(n, r, root.derive("V").next_u64());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < r; ++j) v(i, j) *= spectrum[j];
  }
  TeacherData d;
  d.w_true = matmul_nt(u, v);
  Rng xr = root.derive("x");
  d.x = MatrixD(count, n);
  for (double& e : d.x.flat()) e = xr.normal();
  d.y = matmul_nt(d.x, d.w_true);
  if (noise_std > 0.0) {
    Rng nr = root.derive("noise");
    for (double& e : d.y.flat()) e += noise_std * nr.normal();
  }
  return d;
}

}  // namespace lost
