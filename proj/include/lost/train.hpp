#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lost/config.hpp"
#include "lost/data.hpp"
#include "lost/model.hpp"
#include "lost/optim.hpp"

namespace lost {

struct MetricsRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean pre-update batch loss since the previous record
  double val_loss = 0.0;
  double val_ppl = 0.0;  // exp(val_loss)
  std::uint64_t tokens_seen = 0;
  double wallclock_seconds = 0.0;

  /// One JSON object, no trailing newline.
  std::string to_json() const;
  static MetricsRecord from_json(const std::string& line);
};

enum class TrainStatus { completed, nan_halt };

struct TrainResult {
  TrainStatus status = TrainStatus::completed;
  std::size_t steps_done = 0;
  std::vector<MetricsRecord> records;
  std::string message;  // diagnostic for nan_halt
};

struct TrainOutput {
  std::filesystem::path metrics_path;     // empty: keep records in memory only
  std::filesystem::path checkpoint_path;  // empty: no checkpoints
  ExperimentConfig experiment;            // echoed into checkpoints
  std::function<void(const MetricsRecord&)> on_record;
};

/// Mean next-token loss over the given batches.
template <class T>
double evaluate(const Model<T>& model, const std::vector<TokenBatch>& batches);

/// Runs cfg.total_steps Adam updates. Update s (1-based) trains on
/// data.train_batch(s - 1) at lr_at(s). Records are emitted at step 0, every
/// eval_every steps and at the last step. A non-finite loss or gradient halts
/// the run with the pre-step parameters written as the checkpoint.
template <class T>
TrainResult train_loop(Model<T>& model, const ByteDataset& data, const TrainConfig& cfg,
                       const TrainOutput& out = {});

/// Builds the dataset described by an experiment's [data] section.
ByteDataset make_dataset(const ExperimentConfig& cfg);

}  // namespace lost
