#include "lost/ablate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "lost/accounting.hpp"
#include "lost/error.hpp"

namespace lost {

std::string_view to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::comp_criterion:
      return "comp_criterion";
    case AblationAxis::lowrank_init:
      return "lowrank_init";
    case AblationAxis::combine:
      return "combine";
    case AblationAxis::activation:
      return "activation";
    case AblationAxis::rcomp:
      return "rcomp";
    case AblationAxis::sparsity:
      return "sparsity";
    case AblationAxis::gamma:
      return "gamma";
  }
  return "?";
}

AblationAxis parse_axis(std::string_view s) {
  if (s == "comp_criterion" || s == "comp_source_x_criterion") return AblationAxis::comp_criterion;
  if (s == "lowrank_init") return AblationAxis::lowrank_init;
  if (s == "combine") return AblationAxis::combine;
  if (s == "activation") return AblationAxis::activation;
  if (s == "rcomp") return AblationAxis::rcomp;
  if (s == "sparsity") return AblationAxis::sparsity;
  if (s == "gamma") return AblationAxis::gamma;
  throw ParameterError("unknown ablation axis '" + std::string(s) +
                       "' (valid: comp_criterion, lowrank_init, combine, activation, rcomp, "
                       "sparsity, gamma)");
}

namespace {

template <class N>
N parse_value(std::string_view v, std::string_view axis) {
  N out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ParameterError("ablation axis " + std::string(axis) + ": '" + std::string(v) +
                         "' is not a number");
  }
  return out;
}

std::vector<std::string> or_default(const std::vector<std::string>& values,
                                    std::vector<std::string> fallback) {
  return values.empty() ? fallback : values;
}

std::size_t total_params(ModelConfig cfg, double sparsity, std::size_t rank) {
  cfg.rank = rank;
  if (sparsity == 0.0) {
    cfg.parameterization = Parameterization::lowrank_only;
  } else {
    cfg.parameterization = Parameterization::lost;
    cfg.sparsity = sparsity;
  }
  return count_params(cfg).total();
}

}  // namespace

std::size_t budget_rank(const ModelConfig& cfg, double sparsity, std::size_t budget) {
  const std::size_t max_rank = std::min(cfg.d_model, cfg.d_ff);
  std::size_t best = 1;
  std::size_t best_gap = SIZE_MAX;
  for (std::size_t r = 1; r <= max_rank; ++r) {
    const std::size_t t = total_params(cfg, sparsity, r);
    const std::size_t gap = t > budget ? t - budget : budget - t;
    if (gap < best_gap) {
      best = r;
      best_gap = gap;
    }
  }
  return best;
}

std::vector<AblationVariant> make_variants(const ExperimentConfig& base, AblationAxis axis,
                                           const std::vector<std::string>& values) {
  const std::string_view axis_name = to_string(axis);
  std::vector<AblationVariant> out;
  auto add = [&](std::string label, auto&& edit) {
    AblationVariant v{std::move(label), base};
    v.config.model.parameterization = Parameterization::lost;
    edit(v.config.model);
    v.config.model.validate(true);
    out.push_back(std::move(v));
  };

  switch (axis) {
    case AblationAxis::comp_criterion: {
      std::vector<std::string> vals = values;
      if (vals.empty()) {
        for (auto src : {"rem", "top", "bot", "rand", "ini"})
          for (auto crit : {"l2", "l1", "random"}) vals.push_back(std::string(src) + ":" + crit);
      }
      for (const std::string& v : vals) {
        const auto colon = v.find(':');
        if (colon == std::string::npos) {
          throw ParameterError("comp_criterion variant '" + v +
                               "' must be source:criterion, e.g. rem:l2 (sources: rem, top, "
                               "bot, rand, ini; criteria: l2, l1, random)");
        }
        const CompSource src = parse_comp_source(std::string_view(v).substr(0, colon));
        const Criterion crit = parse_criterion(std::string_view(v).substr(colon + 1));
        add(v, [&](ModelConfig& m) {
          m.comp_source = src;
          m.criterion = crit;
        });
      }
      break;
    }
    case AblationAxis::lowrank_init:
      for (const std::string& v : or_default(values, {"svd", "kaiming", "xavier", "cola"})) {
        const LowRankInit f = parse_lowrank_init(v);
        add(v, [&](ModelConfig& m) { m.lowrank_init = f; });
      }
      break;
    case AblationAxis::combine:
      for (const std::string& v : or_default(values, {"output_avg", "weight_avg"})) {
        const Combine c = parse_combine(v);
        add(v, [&](ModelConfig& m) {
          m.combine = c;
          m.activation = c == Combine::weight_avg ? Activation::identity : Activation::silu;
        });
      }
      break;
    case AblationAxis::activation:
      for (const std::string& v : or_default(values, {"silu", "identity"})) {
        const Activation a = parse_activation(v);
        add(v, [&](ModelConfig& m) {
          m.activation = a;
          if (a == Activation::silu) m.combine = Combine::output_avg;
        });
      }
      break;
    case AblationAxis::rcomp:
      for (const std::string& v : or_default(values, {"8", "16", "32", "48", "63"})) {
        const auto rc = parse_value<std::size_t>(v, axis_name);
        add(v, [&](ModelConfig& m) { m.rank_comp = rc; });
      }
      break;
    case AblationAxis::sparsity: {
      ModelConfig budget_cfg = base.model;
      budget_cfg.parameterization = Parameterization::lost;
      const std::size_t budget = count_params(budget_cfg).total();
      for (const std::string& v : or_default(values, {"0", "0.01", "0.05", "0.1", "0.2", "0.3"})) {
        const auto rho = parse_value<double>(v, axis_name);
        if (!(rho >= 0.0 && rho <= 1.0)) {
          throw ParameterError("sparsity variant '" + v + "' must lie in [0, 1]");
        }
        const std::size_t r = budget_rank(base.model, rho, budget);
        AblationVariant var{v + " (r=" + std::to_string(r) + ")", base};
        ModelConfig& m = var.config.model;
        m.rank = r;
        if (rho == 0.0) {
          m.parameterization = Parameterization::lowrank_only;
          m.gamma = 1.0;
        } else {
          m.parameterization = Parameterization::lost;
          m.sparsity = rho;
        }
        m.validate(true);
        out.push_back(std::move(var));
      }
      break;
    }
    case AblationAxis::gamma:
      for (const std::string& v : or_default(values, {"0.4", "0.5", "0.6", "0.7", "0.8", "0.9"})) {
        const auto g = parse_value<double>(v, axis_name);
        add(v, [&](ModelConfig& m) { m.gamma = g; });
      }
      break;
  }
  return out;
}

double final_val_loss(const ExperimentConfig& cfg, TrainResult* result) {
  cfg.validate();
  const ByteDataset data = make_dataset(cfg);
  Model<float> model = Model<float>::build(cfg.model);
  TrainResult r = train_loop(model, data, cfg.train);
  const double loss = r.status == TrainStatus::completed && !r.records.empty()
                          ? r.records.back().val_loss
                          : std::nan("");
  if (result) *result = std::move(r);
  return loss;
}

std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants,
                                      const AblationOptions& opts) {
  std::vector<AblationRow> rows;
  for (const AblationVariant& v : variants) {
    AblationRow row;
    row.label = v.label;
    row.params = count_params(v.config.model).total();
    for (std::size_t s = 0; s < std::max<std::size_t>(1, opts.seeds); ++s) {
      ExperimentConfig cfg = v.config;
      cfg.model.seed += s;
      cfg.train.seed += s;
      const double loss = final_val_loss(cfg);
      row.halted = row.halted || !std::isfinite(loss);
      row.val_losses.push_back(loss);
      if (opts.progress) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%s seed %llu: val loss %.4f", v.label.c_str(),
                      static_cast<unsigned long long>(cfg.train.seed), loss);
        opts.progress(buf);
      }
    }
    std::vector<double> sorted = row.val_losses;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    row.median_val_loss = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    row.median_ppl = std::exp(row.median_val_loss);
    rows.push_back(std::move(row));
  }
  return rows;
}

void print_ablation(std::ostream& os, AblationAxis axis, const std::vector<AblationRow>& rows) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %10s %12s %10s  %s\n", std::string(to_string(axis)).c_str(),
                "params", "val_loss", "ppl", "per-seed val_loss");
  os << buf;
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%-24s %10zu %12.4f %10.3f ", r.label.c_str(), r.params,
                  r.median_val_loss, r.median_ppl);
    os << buf;
    for (double l : r.val_losses) {
      std::snprintf(buf, sizeof buf, " %.4f", l);
      os << buf;
    }
    if (r.halted) os << "  (halted)";
    os << '\n';
  }
}

}  // namespace lost
