#include <doctest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lost/ablate.hpp"
#include "lost/accounting.hpp"
#include "lost/checkpoint.hpp"
#include "lost/config.hpp"

using namespace lost;
namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int run(const std::string& args) {
  const std::string cmd = std::string(LOST_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lost_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kMinimal = R"([model]
n_layers = 1
d_model = 16
d_ff = 43
n_heads = 2
seq_len = 16
rank = 4
rank_comp = 4
sparsity = 0.1

[train]
total_steps = 12
batch_size = 4
eval_every = 5
eval_batches = 2

[data]
synthetic_bytes = 20000
)";

}  // namespace

TEST_CASE("config round trip") {
  ExperimentConfig c;
  c.model.parameterization = Parameterization::lowrank_only;
  c.model.gamma = 0.123456789012345;
  c.model.criterion = Criterion::l1;
  c.model.comp_source = CompSource::bot;
  c.train.warmup_steps = 17;
  c.train.peak_lr = 1.0 / 3.0;
  c.data.source = "file";
  c.data.path = "/tmp/corpus.txt";
  c.output_dir = "runs/x";
  const std::string text = write_config(c);
  const ExperimentConfig back = parse_config(text);
  CHECK(write_config(back) == text);
  CHECK(back.model.gamma == c.model.gamma);
  CHECK(back.train.peak_lr == c.train.peak_lr);
  REQUIRE(back.train.warmup_steps.has_value());
  CHECK(*back.train.warmup_steps == 17);
  CHECK(back.data.path == c.data.path);
  CHECK_FALSE(parse_config(write_config(ExperimentConfig{})).train.warmup_steps.has_value());
}

TEST_CASE("config errors name key and line") {
  CHECK_THROWS_WITH_AS(parse_config("[model]\nrank = 4\nrnak = 5\n", "x.conf"),
                       doctest::Contains("x.conf:3"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[model]\nrnak = 5\n"), doctest::Contains("rnak"), ConfigError);
  CHECK_THROWS_AS(parse_config("[modle]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[model]\nrank = four\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[model]\ngamma = 0.5x\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[model]\ncriterion = l3\n"), Error);
  CHECK_THROWS_AS(parse_config("rank = 4\n"), ConfigError);
  CHECK(parse_config("# c\n[model]  \nrank = 5  # trailing\n").model.rank == 5);
}

TEST_CASE("checkpoint save load save is byte identical") {
  ExperimentConfig c = parse_config(kMinimal);
  const Model<float> m = Model<float>::build(c.model);
  const std::vector<std::uint8_t> first = encode_checkpoint(m, c);
  const LoadedCheckpoint<float> back = decode_checkpoint<float>(first);
  CHECK(encode_checkpoint(back.model, back.config) == first);
  CHECK(write_config(back.config) == write_config(c));

  const Model<double> md = Model<double>::build(c.model);
  const auto bytes = encode_checkpoint(md, c);
  CHECK(encode_checkpoint(decode_checkpoint<double>(bytes).model, c) == bytes);

  std::vector<std::uint8_t> cut(first.begin(), first.end() - 3);
  CHECK_THROWS_AS(decode_checkpoint<float>(cut), InputError);
  std::vector<std::uint8_t> extra = first;
  extra.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint<float>(extra), InputError);
  std::vector<std::uint8_t> magic = first;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint<float>(magic), InputError);

  // a config echo that disagrees with the stored shapes
  ExperimentConfig other = c;
  other.model.rank = 3;
  const std::string a = write_config(c), b = write_config(other);
  std::vector<std::uint8_t> swapped = first;
  const auto at = std::search(swapped.begin(), swapped.end(), a.begin(), a.end());
  REQUIRE(at != swapped.end());
  REQUIRE(a.size() == b.size());
  std::copy(b.begin(), b.end(), at);
  CHECK_THROWS_AS(decode_checkpoint<float>(swapped), InputError);
}

TEST_CASE("ablation variants") {
  const ExperimentConfig base;
  const auto gamma = make_variants(base, AblationAxis::gamma, {});
  REQUIRE(gamma.size() == 6);
  CHECK(gamma.front().label == "0.4");
  CHECK(gamma.back().config.model.gamma == 0.9);
  for (const auto& v : gamma) CHECK(v.config.model.seed == base.model.seed);

  const auto grid = make_variants(base, AblationAxis::comp_criterion, {});
  CHECK(grid.size() == 15);
  CHECK(grid[4].config.model.comp_source == CompSource::top);
  CHECK(grid[4].config.model.criterion == Criterion::l1);

  const auto sp = make_variants(base, AblationAxis::sparsity, {"0", "0.1"});
  CHECK(sp[0].config.model.parameterization == Parameterization::lowrank_only);
  CHECK(sp[1].config.model.parameterization == Parameterization::lost);
  const double budget = static_cast<double>(count_params(base.model).total());
  for (const auto& v : sp) {
    CHECK(std::abs(static_cast<double>(count_params(v.config.model).total()) - budget) / budget <
          0.03);
  }

  const auto comb = make_variants(base, AblationAxis::combine, {});
  CHECK(comb[1].config.model.activation == Activation::identity);

  CHECK_THROWS_WITH_AS(make_variants(base, AblationAxis::lowrank_init, {"orthogonal"}),
                       doctest::Contains("kaiming"), ParameterError);
  CHECK_THROWS_AS(make_variants(base, AblationAxis::comp_criterion, {"rem"}), ParameterError);
  CHECK_THROWS_AS(parse_axis("depth"), ParameterError);
  CHECK(parse_axis("comp_source_x_criterion") == AblationAxis::comp_criterion);
}

TEST_CASE("cli train writes metrics and a loadable checkpoint") {
  const fs::path dir = scratch("train");
  std::ofstream(dir / "min.conf") << kMinimal;
  REQUIRE(run("train " + (dir / "min.conf").string() + " --quiet --out " + (dir / "a").string()) ==
          0);
  const std::string metrics = read_text(dir / "a" / "metrics.jsonl");
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 4);
  const LoadedCheckpoint<float> ck = load_checkpoint<float>(dir / "a" / "checkpoint.lost");
  CHECK(ck.config.train.total_steps == 12);

  REQUIRE(run("train " + (dir / "min.conf").string() + " --quiet --deterministic --out " +
              (dir / "a").string()) == 0);
  auto strip = [](std::string s) {
    std::string out;
    std::istringstream in(s);
    for (std::string line; std::getline(in, line);) out += line.substr(0, line.find("\"wallclock"));
    return out;
  };
  const std::string again = read_text(dir / "a" / "metrics.jsonl");
  CHECK(strip(again) == strip(metrics));

  REQUIRE(run("train " + (dir / "min.conf").string() + " --quiet --seed 4 --out " +
              (dir / "b").string()) == 0);
  CHECK(strip(read_text(dir / "b" / "metrics.jsonl")) != strip(metrics));

  REQUIRE(run("train " + (dir / "min.conf").string() + " --quiet --steps 0 --out " +
              (dir / "z").string()) == 0);
  const LoadedCheckpoint<float> z = load_checkpoint<float>(dir / "z" / "checkpoint.lost");
  const Model<float> init = Model<float>::build(z.config.model);
  CHECK(encode_checkpoint(z.model, z.config) == encode_checkpoint(init, z.config));
  fs::remove_all(dir);
}

TEST_CASE("cli exit codes") {
  const fs::path dir = scratch("codes");
  std::ofstream(dir / "bad.conf") << "[train]\nstepz = 3\n";
  CHECK(run("train " + (dir / "bad.conf").string()) != 0);
  CHECK(run("train " + (dir / "missing.conf").string()) != 0);
  CHECK(run("verify decomp") == 0);
  CHECK(run("verify nonsense") != 0);
  CHECK(run("count-params --preset 60m --parameterization lost --rank 128") == 0);
  CHECK(run("mem-estimate --preset 1b --json") == 0);
  CHECK(run("inspect-init --m 12 --n 10 --rank 3") == 0);
  CHECK(run("ablate gamma 2.0 --steps 1") != 0);
  CHECK(run("frobnicate") != 0);
  fs::remove_all(dir);
}
