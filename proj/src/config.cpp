#include "lost/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "lost/error.hpp"

namespace lost {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class N>
N parse_number(std::string_view v) {
  N out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ParameterError("expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

template <class N>
std::string format_number(N v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Field {
  std::string_view section;
  std::string_view key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;  // empty: omit
};

#define LOST_NUM(SEC, KEY, EXPR, TYPE)                                                        \
  Field {                                                                                     \
    SEC, #KEY, [](ExperimentConfig& c, std::string_view v) { EXPR = parse_number<TYPE>(v); }, \
        [](const ExperimentConfig& c) { return format_number<TYPE>(EXPR); }                   \
  }
#define LOST_ENUM(SEC, KEY, EXPR, PARSE)                                         \
  Field {                                                                        \
    SEC, #KEY, [](ExperimentConfig& c, std::string_view v) { EXPR = PARSE(v); }, \
        [](const ExperimentConfig& c) { return std::string(to_string(EXPR)); }   \
  }
#define LOST_STR(SEC, KEY, EXPR)                                                       \
  Field {                                                                              \
    SEC, #KEY, [](ExperimentConfig& c, std::string_view v) { EXPR = std::string(v); }, \
        [](const ExperimentConfig& c) { return EXPR; }                                 \
  }

const std::vector<Field>& fields() {
  using std::size_t;
  using u64 = std::uint64_t;
  static const std::vector<Field> table{
      LOST_NUM("model", n_layers, c.model.n_layers, size_t),
      LOST_NUM("model", d_model, c.model.d_model, size_t),
      LOST_NUM("model", d_ff, c.model.d_ff, size_t),
      LOST_NUM("model", n_heads, c.model.n_heads, size_t),
      LOST_NUM("model", vocab_size, c.model.vocab_size, size_t),
      LOST_NUM("model", seq_len, c.model.seq_len, size_t),
      LOST_ENUM("model", parameterization, c.model.parameterization, parse_parameterization),
      LOST_NUM("model", rank, c.model.rank, size_t),
      LOST_NUM("model", sparsity, c.model.sparsity, double),
      LOST_NUM("model", gamma, c.model.gamma, double),
      LOST_NUM("model", rank_comp, c.model.rank_comp, size_t),
      LOST_ENUM("model", lowrank_init, c.model.lowrank_init, parse_lowrank_init),
      LOST_ENUM("model", comp_source, c.model.comp_source, parse_comp_source),
      LOST_ENUM("model", criterion, c.model.criterion, parse_criterion),
      LOST_ENUM("model", combine, c.model.combine, parse_combine),
      LOST_ENUM("model", activation, c.model.activation, parse_activation),
      LOST_NUM("model", seed, c.model.seed, u64),

      LOST_NUM("train", total_steps, c.train.total_steps, size_t),
      Field{"train", "warmup_steps",
            [](ExperimentConfig& c, std::string_view v) {
              c.train.warmup_steps = parse_number<size_t>(v);
            },
            [](const ExperimentConfig& c) {
              return c.train.warmup_steps ? format_number(*c.train.warmup_steps) : std::string();
            }},
      LOST_NUM("train", warmup_fraction, c.train.warmup_fraction, double),
      LOST_NUM("train", peak_lr, c.train.peak_lr, double),
      LOST_NUM("train", final_lr_fraction, c.train.final_lr_fraction, double),
      LOST_NUM("train", beta1, c.train.beta1, double),
      LOST_NUM("train", beta2, c.train.beta2, double),
      LOST_NUM("train", eps, c.train.eps, double),
      LOST_NUM("train", weight_decay, c.train.weight_decay, double),
      LOST_NUM("train", grad_clip, c.train.grad_clip, double),
      LOST_NUM("train", batch_size, c.train.batch_size, size_t),
      LOST_NUM("train", eval_every, c.train.eval_every, size_t),
      LOST_NUM("train", eval_batches, c.train.eval_batches, size_t),
      LOST_NUM("train", checkpoint_every, c.train.checkpoint_every, size_t),
      LOST_NUM("train", seed, c.train.seed, u64),

      LOST_STR("data", source, c.data.source),
      LOST_STR("data", path, c.data.path),
      LOST_NUM("data", synthetic_bytes, c.data.synthetic_bytes, size_t),
      LOST_NUM("data", synthetic_seed, c.data.synthetic_seed, u64),
      LOST_NUM("data", split, c.data.split, double),

      LOST_STR("output", dir, c.output_dir),
  };
  return table;
}

#undef LOST_NUM
#undef LOST_ENUM
#undef LOST_STR

}  // namespace

void ExperimentConfig::validate() const {
  model.validate(true);
  train.validate();
  if (data.source != "synthetic" && data.source != "file") {
    throw ConfigError("data.source must be 'synthetic' or 'file', got '" + data.source + "'");
  }
  if (data.source == "file" && data.path.empty()) {
    throw ConfigError("data.path is required when data.source = file");
  }
  if (!(data.split > 0.0 && data.split < 1.0)) throw ConfigError("data.split must lie in (0, 1)");
}

ExperimentConfig parse_config(std::string_view text, std::string_view source) {
  ExperimentConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  auto where = [&] { return std::string(source) + ":" + std::to_string(line_no) + ": "; };

  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where() + "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section != "model" && section != "train" && section != "data" && section != "output") {
        throw ConfigError(where() + "unknown section [" + section +
                          "] (valid: model, train, data, output)");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where() + "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (section.empty()) {
      throw ConfigError(where() + "key '" + std::string(key) + "' appears before any section");
    }
    const Field* field = nullptr;
    for (const Field& f : fields()) {
      if (f.section == section && f.key == key) field = &f;
    }
    if (!field) {
      throw ConfigError(where() + "unknown key '" + std::string(key) + "' in [" + section + "]");
    }
    try {
      field->set(cfg, value);
    } catch (const Error& e) {
      throw ConfigError(where() + "key '" + std::string(key) + "': " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string write_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string_view section;
  for (const Field& f : fields()) {
    const std::string value = f.get(cfg);
    if (f.section != section) {
      if (!section.empty()) out += '\n';
      section = f.section;
      out += "[" + std::string(section) + "]\n";
    }
    if (value.empty() && f.key == "warmup_steps") continue;
    out += std::string(f.key) + " = " + value + "\n";
  }
  return out;
}

}  // namespace lost
