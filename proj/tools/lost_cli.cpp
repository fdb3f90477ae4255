// lost: train, ablate, verify and accounting reports for LOST models.
#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "lost/ablate.hpp"
#include "lost/accounting.hpp"
#include "lost/checkpoint.hpp"
#include "lost/config.hpp"
#include "lost/kernels.hpp"
#include "lost/lost_linear.hpp"
#include "lost/train.hpp"
#include "lost/verify.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace lost;

namespace {

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--seed", f.seed, "Override model.seed and train.seed");
  cmd->add_option("--steps", f.steps, "Override train.total_steps");
  cmd->add_flag("--deterministic", f.deterministic, "Run single-threaded");
}

void apply_common(ExperimentConfig& cfg, const CommonFlags& f) {
  if (f.seed) {
    cfg.model.seed = *f.seed;
    cfg.train.seed = *f.seed;
  }
  if (f.steps) {
    cfg.train.total_steps = *f.steps;
    if (cfg.train.warmup_steps && *cfg.train.warmup_steps > *f.steps) {
      cfg.train.warmup_steps = *f.steps;
    }
  }
  if (f.deterministic) set_num_threads(1);
  cfg.validate();
}

// Model config for the accounting commands: a config file or a preset, then overrides.
struct ModelSource {
  std::string config_path;
  std::string preset;
  std::string parameterization;
  std::optional<std::size_t> rank;
  std::optional<double> sparsity;
};

void add_model_source(CLI::App* cmd, ModelSource& s) {
  cmd->add_option("config", s.config_path, "Experiment config file");
  cmd->add_option("--preset", s.preset, "Architecture preset: 60m, 130m, 350m, 1b, 7b");
  cmd->add_option("--parameterization", s.parameterization, "dense, lowrank_only or lost");
  cmd->add_option("--rank", s.rank, "Factor rank");
  cmd->add_option("--sparsity", s.sparsity, "Channel fraction rho");
}

ModelConfig resolve_model(const ModelSource& s) {
  if (!s.config_path.empty() && !s.preset.empty()) {
    throw ConfigError("give either a config file or --preset, not both");
  }
  ModelConfig m = !s.preset.empty()        ? ModelConfig::preset(s.preset)
                  : !s.config_path.empty() ? load_config(s.config_path).model
                                           : ModelConfig::desk();
  if (!s.parameterization.empty()) m.parameterization = parse_parameterization(s.parameterization);
  if (s.rank) m.rank = *s.rank;
  if (s.sparsity) m.sparsity = *s.sparsity;
  m.validate(false);
  return m;
}

std::string millions(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2fM", v / 1e6);
  return buf;
}

std::string gib(double bytes) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f GiB", bytes / (1024.0 * 1024.0 * 1024.0));
  return buf;
}

int cmd_train(const std::string& config_path, const CommonFlags& flags,
              const std::string& out_override, bool quiet) {
  ExperimentConfig cfg = load_config(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;
  apply_common(cfg, flags);

  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  {
    std::ofstream(dir / "config.txt") << write_config(cfg);
  }
  const ByteDataset data = make_dataset(cfg);
  Model<float> model = Model<float>::build(cfg.model);

  TrainOutput out;
  out.metrics_path = dir / "metrics.jsonl";
  out.checkpoint_path = dir / "checkpoint.lost";
  out.experiment = cfg;
  if (!quiet) {
    out.on_record = [](const MetricsRecord& r) {
      std::printf("step %6zu  lr %.2e  train %.4f  val %.4f  ppl %.3f  %.1fs\n", r.step, r.lr,
                  r.train_loss, r.val_loss, r.val_ppl, r.wallclock_seconds);
      std::fflush(stdout);
    };
  }
  const TrainResult res = train_loop(model, data, cfg.train, out);
  if (res.status == TrainStatus::nan_halt) {
    std::fprintf(stderr, "halted after %zu steps: %s\n", res.steps_done, res.message.c_str());
    return 3;
  }
  if (!quiet) {
    std::printf("metrics: %s\ncheckpoint: %s\n", out.metrics_path.c_str(),
                out.checkpoint_path.c_str());
  }
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& axis_name,
               const std::vector<std::string>& values, std::size_t seeds, const CommonFlags& flags,
               bool as_json) {
  ExperimentConfig base = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
  apply_common(base, flags);
  const AblationAxis axis = parse_axis(axis_name);
  const std::vector<AblationVariant> variants = make_variants(base, axis, values);

  AblationOptions opts;
  opts.seeds = seeds;
  opts.progress = [](const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); };
  const std::vector<AblationRow> rows = run_ablation(variants, opts);
  if (as_json) {
    for (const AblationRow& r : rows) {
      json j;
      j["axis"] = std::string(to_string(axis));
      j["variant"] = r.label;
      j["params"] = r.params;
      j["val_losses"] = r.val_losses;
      j["median_val_loss"] = r.median_val_loss;
      j["median_ppl"] = r.median_ppl;
      j["halted"] = r.halted;
      std::cout << j.dump() << '\n';
    }
  } else {
    print_ablation(std::cout, axis, rows);
  }
  const bool any_halt =
      std::any_of(rows.begin(), rows.end(), [](const AblationRow& r) { return r.halted; });
  return any_halt ? 3 : 0;
}

int cmd_verify(const std::string& suite, std::uint64_t seed) {
  const std::vector<CheckResult> checks = run_verify(suite, seed);
  print_checks(std::cout, checks);
  const auto failed =
      std::count_if(checks.begin(), checks.end(), [](const CheckResult& c) { return !c.passed; });
  std::printf("%zu checks, %ld failed\n", checks.size(), static_cast<long>(failed));
  return failed == 0 ? 0 : 1;
}

int cmd_count(const ModelSource& src, bool as_json) {
  const ModelConfig m = resolve_model(src);
  const ParamReport rep = count_params(m);
  if (as_json) {
    for (const LayerCount& l : rep.layers) {
      json j;
      j["layer"] = l.name;
      j["m"] = l.m;
      j["n"] = l.n;
      j["dense"] = l.dense_count;
      j["count"] = l.count;
      j["indices"] = l.index_count;
      j["break_even_rank"] = l.break_even_rank;
      j["degenerate"] = l.degenerate;
      std::cout << j.dump() << '\n';
    }
    json t;
    t["parameterization"] = std::string(to_string(rep.parameterization));
    t["embed"] = rep.embed;
    t["pos_embed"] = rep.pos_embed;
    t["head"] = rep.head;
    t["norms"] = rep.norms;
    t["linear_dense"] = rep.linear_dense;
    t["linear"] = rep.linear_count;
    t["indices"] = rep.index_count;
    t["dense_total"] = rep.dense_total();
    t["total"] = rep.total();
    std::cout << t.dump() << '\n';
    return 0;
  }
  std::printf("%-20s %6s %6s %12s %12s %8s %10s\n", "layer", "m", "n", "dense", "count", "k",
              "break-even");
  for (const LayerCount& l : rep.layers) {
    std::printf("%-20s %6zu %6zu %12zu %12zu %8zu %10zu%s\n", l.name.c_str(), l.m, l.n,
                l.dense_count, l.count, l.index_count, l.break_even_rank,
                l.degenerate ? "  rank >= break-even" : "");
  }
  std::printf("\nparameterization %s\n", std::string(to_string(rep.parameterization)).c_str());
  std::printf("embed %zu  pos_embed %zu  head %zu  norms %zu\n", rep.embed, rep.pos_embed, rep.head,
              rep.norms);
  std::printf("linear %zu of %zu dense, channel indices %zu\n", rep.linear_count, rep.linear_dense,
              rep.index_count);
  std::printf("total %zu (%s), dense %zu (%s)\n", rep.total(),
              millions(static_cast<double>(rep.total())).c_str(), rep.dense_total(),
              millions(static_cast<double>(rep.dense_total())).c_str());
  if (m.parameterization == Parameterization::lost) {
    const ModelStorageCompare s = model_storage_compare(m);
    std::printf(
        "storage: structured %s, element-wise with indices %s, with bitmask %s, "
        "dense-shaped %s\n",
        millions(static_cast<double>(s.structured)).c_str(),
        millions(static_cast<double>(s.unstructured_index)).c_str(),
        millions(s.unstructured_mask).c_str(),
        millions(static_cast<double>(s.unstructured_dense_shape)).c_str());
  }
  return 0;
}

int cmd_mem(const ModelSource& src, double bytes, const std::string& optimizer,
            std::optional<std::size_t> batch, std::optional<std::size_t> seq, bool as_json) {
  const ModelConfig m = resolve_model(src);
  OptimizerKind opt;
  if (optimizer == "adam") {
    opt = OptimizerKind::adam;
  } else if (optimizer == "none") {
    opt = OptimizerKind::none;
  } else {
    throw ParameterError("unknown optimizer '" + optimizer + "' (valid: adam, none)");
  }
  const MemoryEstimate e =
      memory_estimate(m, bytes, opt, batch.value_or(1), seq.value_or(m.seq_len));
  if (as_json) {
    json j;
    j["parameterization"] = std::string(to_string(m.parameterization));
    j["params"] = e.params;
    j["bytes_per_scalar"] = e.bytes_per_scalar;
    j["batch"] = e.batch;
    j["seq"] = e.seq;
    j["weights"] = e.weights;
    j["gradients"] = e.gradients;
    j["optimizer_states"] = e.optimizer_states;
    j["activations"] = e.activations;
    j["total"] = e.total();
    j["assumptions"] = e.assumptions;
    std::cout << j.dump() << '\n';
    return 0;
  }
  std::printf("parameterization  %s (%s params)\n",
              std::string(to_string(m.parameterization)).c_str(),
              millions(static_cast<double>(e.params)).c_str());
  std::printf("weights           %s\n", gib(e.weights).c_str());
  std::printf("gradients         %s\n", gib(e.gradients).c_str());
  std::printf("optimizer states  %s\n", gib(e.optimizer_states).c_str());
  std::printf("activations       %s\n", gib(e.activations).c_str());
  std::printf("total             %s\n", gib(e.total()).c_str());
  std::printf("assumptions:\n");
  for (const std::string& a : e.assumptions) std::printf("  - %s\n", a.c_str());
  return 0;
}

struct InspectFlags {
  std::size_t m = 64, n = 64, rank = 16, rank_comp = 0, show = 16;
  double sparsity = 0.05, gamma = 0.7;
  std::string source = "rem", criterion = "l2", init = "svd";
  std::uint64_t seed = 0;
  bool as_json = false;
};

int cmd_inspect(const InspectFlags& f) {
  LostInitOptions o;
  o.rank = f.rank;
  o.sparsity = f.sparsity;
  o.gamma = f.gamma;
  o.source = parse_comp_source(f.source);
  o.criterion = parse_criterion(f.criterion);
  o.lowrank_init = parse_lowrank_init(f.init);
  o.rank_comp = f.rank_comp;
  Rng rng(f.seed);
  const LostInitTrace t = lost_init_traced(f.m, f.n, o, rng);
  const std::vector<std::size_t>& idx = t.layer.selection().indices;

  std::vector<std::size_t> order(t.scores.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return t.scores[a] > t.scores[b]; });

  if (f.as_json) {
    json j;
    j["m"] = f.m;
    j["n"] = f.n;
    j["rank"] = f.rank;
    j["rank_comp"] = t.rank_comp;
    j["k"] = idx.size();
    j["singular_values"] = t.svd.S;
    j["channels"] = idx;
    j["importance"] = t.scores;
    std::cout << j.dump() << '\n';
    return 0;
  }
  double total = 0.0;
  for (double s : t.svd.S) total += s * s;
  std::printf("W %zu x %zu, rank %zu, rank_comp %zu, k %zu, source %s, criterion %s\n", f.m, f.n,
              f.rank, t.rank_comp, idx.size(), f.source.c_str(), f.criterion.c_str());
  std::printf("\n%5s %12s %10s\n", "i", "sigma", "cum.energy");
  double cum = 0.0;
  for (std::size_t i = 0; i < t.svd.S.size(); ++i) {
    cum += t.svd.S[i] * t.svd.S[i];
    if (i < f.show || i + 1 == t.svd.S.size() || i + 1 == f.rank) {
      std::printf("%5zu %12.6f %10.4f%s\n", i, t.svd.S[i], cum / total,
                  i + 1 == f.rank ? "  <- rank" : "");
    } else if (i == f.show) {
      std::printf("  ...\n");
    }
  }
  std::printf("\nchosen channels:");
  for (std::size_t c : idx) std::printf(" %zu", c);
  std::printf("\n\n%5s %8s %12s\n", "rank", "channel", "importance");
  for (std::size_t i = 0; i < std::min(f.show, order.size()); ++i) {
    const bool chosen = std::binary_search(idx.begin(), idx.end(), order[i]);
    std::printf("%5zu %8zu %12.6f%s\n", i, order[i], t.scores[order[i]], chosen ? "  *" : "");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();
  CLI::App app{"LOST: low-rank plus channel-wise sparse transformer training"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  std::string train_config, train_out;
  bool train_quiet = false;
  auto* train = app.add_subcommand("train", "Train a model from an experiment config");
  train->add_option("config", train_config, "Experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Override [output] dir");
  train->add_flag("--quiet", train_quiet, "Only report errors");
  add_common(train, train_flags);

  CommonFlags ablate_flags;
  std::string ablate_config, ablate_axis;
  std::vector<std::string> ablate_values;
  std::size_t ablate_seeds = 1;
  bool ablate_json = false;
  auto* ablate = app.add_subcommand("ablate", "Train one variant per axis value and tabulate");
  ablate->add_option("--config", ablate_config, "Base experiment config (default: desk)");
  ablate
      ->add_option("axis", ablate_axis,
                   "comp_criterion, lowrank_init, combine, activation, rcomp, sparsity, gamma")
      ->required();
  ablate->add_option("values", ablate_values, "Axis values (default: the standard sweep)");
  ablate->add_option("--seeds", ablate_seeds, "Seeds per variant; the table shows the median");
  ablate->add_flag("--json", ablate_json, "One JSON record per variant");
  add_common(ablate, ablate_flags);

  std::string verify_suite = "all";
  std::uint64_t verify_seed = 0x5eed;
  bool verify_det = false;
  auto* verify = app.add_subcommand("verify", "Run property checks");
  verify->add_option("suite", verify_suite, "svd, gradcheck, decomp, equivalence or all");
  verify->add_option("--seed", verify_seed, "Seed for the random cases");
  verify->add_flag("--deterministic", verify_det, "Run single-threaded");

  ModelSource count_src;
  bool count_json = false;
  auto* count = app.add_subcommand("count-params", "Per-layer and total parameter counts");
  add_model_source(count, count_src);
  count->add_flag("--json", count_json, "One JSON record per layer, then the totals");

  ModelSource mem_src;
  double mem_bytes = 2.0;
  std::string mem_opt = "adam";
  std::optional<std::size_t> mem_batch, mem_seq;
  bool mem_json = false;
  auto* mem = app.add_subcommand("mem-estimate", "Training memory estimate");
  add_model_source(mem, mem_src);
  mem->add_option("--bytes", mem_bytes, "Bytes per scalar (default 2)");
  mem->add_option("--optimizer", mem_opt, "adam or none");
  mem->add_option("--batch", mem_batch, "Sequences per step (default 1)");
  mem->add_option("--seq", mem_seq, "Tokens per sequence (default: model seq_len)");
  mem->add_flag("--json", mem_json, "Emit one JSON record");

  InspectFlags insp;
  auto* inspect =
      app.add_subcommand("inspect-init", "Spectrum and chosen channels of one layer init");
  inspect->add_option("--m", insp.m, "Output dimension");
  inspect->add_option("--n", insp.n, "Input dimension");
  inspect->add_option("--rank", insp.rank, "Factor rank");
  inspect->add_option("--sparsity", insp.sparsity, "Channel fraction rho");
  inspect->add_option("--gamma", insp.gamma, "Low-rank weight");
  inspect->add_option("--rank-comp", insp.rank_comp, "Complement rank (0: default)");
  inspect->add_option("--source", insp.source, "rem, top, bot, rand or ini");
  inspect->add_option("--criterion", insp.criterion, "l2, l1 or random");
  inspect->add_option("--init", insp.init, "svd, kaiming, xavier or cola");
  inspect->add_option("--seed", insp.seed, "Layer seed");
  inspect->add_option("--show", insp.show, "Rows of each listing");
  inspect->add_flag("--json", insp.as_json, "Emit one JSON record");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(train_config, train_flags, train_out, train_quiet);
    if (*ablate) {
      return cmd_ablate(ablate_config, ablate_axis, ablate_values, ablate_seeds, ablate_flags,
                        ablate_json);
    }
    if (*verify) {
      if (verify_det) set_num_threads(1);
      return cmd_verify(verify_suite, verify_seed);
    }
    if (*count) return cmd_count(count_src, count_json);
    if (*mem) return cmd_mem(mem_src, mem_bytes, mem_opt, mem_batch, mem_seq, mem_json);
    if (*inspect) return cmd_inspect(insp);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
