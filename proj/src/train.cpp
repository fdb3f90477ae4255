#include "lost/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "lost/checkpoint.hpp"
#include "lost/error.hpp"

namespace lost {

std::string MetricsRecord::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["lr"] = lr;
  j["train_loss"] = train_loss;
  j["val_loss"] = val_loss;
  j["val_ppl"] = val_ppl;
  j["tokens_seen"] = tokens_seen;
  j["wallclock_seconds"] = wallclock_seconds;
  return j.dump();
}

MetricsRecord MetricsRecord::from_json(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  auto num = [&](const char* key) {
    return j.at(key).is_null() ? std::nan("") : j.at(key).get<double>();
  };
  MetricsRecord r;
  r.step = j.at("step").get<std::size_t>();
  r.lr = num("lr");
  r.train_loss = num("train_loss");
  r.val_loss = num("val_loss");
  r.val_ppl = num("val_ppl");
  r.tokens_seen = j.at("tokens_seen").get<std::uint64_t>();
  r.wallclock_seconds = num("wallclock_seconds");
  return r;
}

template <class T>
double evaluate(const Model<T>& model, const std::vector<TokenBatch>& batches) {
  double total = 0.0;
  std::size_t rows = 0;
  for (const TokenBatch& b : batches) {
    const Matrix<T> logits = model.forward(b.inputs, b.batch, b.seq);
    const std::size_t n = b.batch * b.seq;
    total += cross_entropy(logits, b.targets) * static_cast<double>(n);
    rows += n;
  }
  return rows ? total / static_cast<double>(rows) : std::nan("");
}

template <class T>
TrainResult train_loop(Model<T>& model, const ByteDataset& data, const TrainConfig& cfg,
                       const TrainOutput& out) {
  cfg.validate();
  if (model.config().vocab_size < 256) {
    throw ConfigError("train: byte data needs vocab_size >= 256, model has " +
                      std::to_string(model.config().vocab_size));
  }
  if (data.seq_len() > model.config().seq_len) {
    throw ConfigError("train: data windows of " + std::to_string(data.seq_len()) +
                      " tokens exceed the model's seq_len " +
                      std::to_string(model.config().seq_len));
  }

  const auto t0 = std::chrono::steady_clock::now();
  const auto val = data.val_batches(cfg.batch_size, cfg.eval_batches);
  std::ofstream metrics;
  if (!out.metrics_path.empty()) {
    if (out.metrics_path.has_parent_path()) {
      std::filesystem::create_directories(out.metrics_path.parent_path());
    }
    metrics.open(out.metrics_path, std::ios::trunc);
    if (!metrics) throw InputError("cannot write metrics '" + out.metrics_path.string() + "'");
  }
  auto checkpoint = [&] {
    if (!out.checkpoint_path.empty()) save_checkpoint(out.checkpoint_path, model, out.experiment);
  };

  TrainResult result;
  const std::uint64_t tokens_per_step = cfg.batch_size * data.seq_len();
  auto emit = [&](std::size_t step, double train_loss) {
    MetricsRecord r;
    r.step = step;
    r.lr = lr_at(step, cfg);
    r.train_loss = train_loss;
    r.val_loss = evaluate(model, val);
    r.val_ppl = std::exp(r.val_loss);
    r.tokens_seen = tokens_per_step * step;
    r.wallclock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (metrics.is_open()) metrics << r.to_json() << '\n' << std::flush;
    if (out.on_record) out.on_record(r);
    result.records.push_back(r);
  };
  auto halt = [&](std::size_t step, const std::string& why) {
    result.status = TrainStatus::nan_halt;
    result.steps_done = step;
    result.message = why;
    checkpoint();
    return result;
  };

  {
    const TokenBatch b = data.train_batch(0, cfg.batch_size);
    const double loss = cross_entropy(model.forward(b.inputs, b.batch, b.seq), b.targets);
    if (!std::isfinite(loss)) return halt(0, "non-finite loss at initialization");
    emit(0, loss);
  }

  AdamState<T> adam;
  ModelCache<T> cache;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
    const TokenBatch b = data.train_batch(step - 1, cfg.batch_size);
    Matrix<T> dlogits;
    const Matrix<T> logits = model.forward(b.inputs, b.batch, b.seq, &cache);
    const double loss = cross_entropy(logits, b.targets, &dlogits);
    if (!std::isfinite(loss)) {
      return halt(step - 1, "non-finite training loss at step " + std::to_string(step));
    }
    ModelGrads<T> grads = model.backward(cache, dlogits);
    auto slots = model.params(grads);
    if (cfg.grad_clip > 0.0) clip_grad_norm<T>(slots, cfg.grad_clip);
    try {
      adam_step<T>(slots, adam, lr_at(step, cfg), cfg);
    } catch (const NonFiniteError& e) {
      return halt(step - 1, std::string(e.what()) + " at step " + std::to_string(step));
    }
    loss_sum += loss;
    ++loss_count;
    result.steps_done = step;
    if (step % cfg.eval_every == 0 || step == cfg.total_steps) {
      emit(step, loss_sum / static_cast<double>(loss_count));
      loss_sum = 0.0;
      loss_count = 0;
    }
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) checkpoint();
  }
  checkpoint();
  return result;
}

ByteDataset make_dataset(const ExperimentConfig& cfg) {
  const std::size_t seq = cfg.model.seq_len;
  if (cfg.data.source == "file") {
    return make_byte_dataset(cfg.data.path, seq, cfg.data.split, cfg.train.seed);
  }
  const std::string text = synthetic_text(cfg.data.synthetic_bytes, cfg.data.synthetic_seed);
  return ByteDataset(std::vector<std::uint8_t>(text.begin(), text.end()), seq, cfg.data.split,
                     cfg.train.seed);
}

template double evaluate<float>(const Model<float>&, const std::vector<TokenBatch>&);
template double evaluate<double>(const Model<double>&, const std::vector<TokenBatch>&);
template TrainResult train_loop<float>(Model<float>&, const ByteDataset&, const TrainConfig&,
                                       const TrainOutput&);
template TrainResult train_loop<double>(Model<double>&, const ByteDataset&, const TrainConfig&,
                                        const TrainOutput&);

}  // namespace lost
