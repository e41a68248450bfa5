#include <doctest.h>

#include <iostream>
#include <sstream>

#include "htl/checkpoint.hpp"
#include "htl/cli.hpp"
#include "htl/config.hpp"
#include "htl/corpus.hpp"
#include "htl/decode.hpp"
#include "htl/error.hpp"
#include "htl/fileio.hpp"
#include "htl/random.hpp"

using namespace htl;
namespace fs = std::filesystem;

namespace {

constexpr const char* kTinyConfig =
    "# small enough for a unit test\n"
    "model.n_layers = 1\n"
    "model.n_heads = 2\n"
    "model.d_model = 16\n"
    "model.d_ff = 32\n"
    "sft.epochs = 1\n"
    "sft.batch_size = 4\n"
    "ppo.updates = 2\n"
    "ppo.rollouts_per_update = 2\n"
    "ppo.max_new = 40\n"
    "corpus.train_size = 16\n"
    "corpus.heldout_size = 4\n"
    "eval.max_new = 40\n";

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int rc = run_command(args, out, err);
  if (err_text) *err_text = err.str();
  return rc;
}

ModelConfig small_model() {
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.vocab_size = corpus_vocabulary().size();
  c.max_seq_len = 256;
  c.seed = 12;
  return c;
}

}  // namespace

TEST_CASE("config: defaults, constants, rejection") {
  const auto empty = parse_config("");
  const RunConfig defaults;
  CHECK(dump_config(empty) == dump_config(defaults));
  CHECK(empty.sft.schedule.alpha == -11.0);
  CHECK(empty.sft.schedule.beta == 1.76);
  CHECK(empty.ppo.kl_coefficient == 0.01);
  CHECK(empty.sft.sink_count == 4);
  CHECK(parse_config("schedule.alpha = -11.0").sft.schedule.alpha == -11.0);
  try {
    parse_config("model.d_model = 64\nsft.learnign_rate = 1\n");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("sft.learnign_rate") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("model.n_heads = 5"), ConfigError);
  CHECK_THROWS_AS(parse_config("ppo.clip_epsilon = 2"), ConfigError);
  CHECK_THROWS_AS(parse_config("schedule.beta = -1"), ConfigError);
  CHECK_THROWS_AS(parse_config("sft.epochs = two"), ConfigError);
  CHECK_THROWS_AS(parse_config("no equals sign"), ConfigError);
  auto c = parse_config(kTinyConfig);
  CHECK(parse_config(dump_config(c)).model == c.model);
  CHECK(dump_config(parse_config(dump_config(c))) == dump_config(c));
}

TEST_CASE("checkpoint: round trip, corruption, compatibility") {
  Model m(small_model());
  Rng rng(1);
  m.value_head().bias[0] = 0.25;
  const auto dir = fresh_dir("htl_test_ckpt");
  save_checkpoint(m, dir / "a.ckpt");
  const auto loaded = load_checkpoint(dir / "a.ckpt", m.config());
  save_checkpoint(loaded, dir / "b.ckpt");
  CHECK(read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt"));
  CHECK(loaded.value_head().bias[0] == 0.25);

  DecodeOptions o;
  o.max_new = 12;
  for (int k = 0; k < 100; ++k) {
    std::vector<int> prompt{0, 1, 2, 3};
    const auto extra = rng.range(1, 6);
    for (int i = 0; i < extra; ++i) prompt.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(m.config().vocab_size))));
    CHECK(generate(m, prompt, o).tokens == generate(loaded, prompt, o).tokens);
  }

  auto bytes = read_file(dir / "a.ckpt");
  for (std::size_t at : {std::size_t{20}, bytes.size() / 2, bytes.size() - 5}) {
    auto bad = bytes;
    bad[at] = static_cast<char>(bad[at] ^ 0x40);
    CHECK_THROWS_AS(deserialize_checkpoint(bad), CheckpointError);
  }
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 9)), CheckpointError);
  CHECK_THROWS_AS(deserialize_checkpoint("HTLCKPT0" + bytes.substr(8)), CheckpointError);
  auto other = m.config();
  other.d_ff = 64;
  CHECK_THROWS_AS(load_checkpoint(dir / "a.ckpt", other), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
  fs::remove_all(dir);
}

TEST_CASE("cli: usage errors") {
  CHECK(run({"frobnicate"}) == 2);
  CHECK(run({"gen-data", "--bogus"}) == 2);
  CHECK(run({"gen-data", "--mode", "dense"}) == 2);
  CHECK(run({"train-sft", "--mode", "sideways"}) == 2);
  CHECK(run({}) == 2);
  CHECK(run({"--version"}) == 0);
}

TEST_CASE("cli: eval on a missing checkpoint names the path") {
  const auto dir = fresh_dir("htl_test_missing");
  write_file_atomic(dir / "cfg.txt", kTinyConfig);
  std::string err;
  CHECK(run({"eval", "--config", (dir / "cfg.txt").string(), "--out", (dir / "run").string()}, &err) != 0);
  CHECK(err.find("sft.ckpt") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("cli: gen-data is deterministic and respects --n") {
  const auto dir = fresh_dir("htl_test_gen");
  write_file_atomic(dir / "cfg.txt", kTinyConfig);
  const auto cfg = (dir / "cfg.txt").string();
  CHECK(run({"gen-data", "--config", cfg, "--out", (dir / "a").string(), "--n", "30", "--seed", "7"}) == 0);
  CHECK(run({"gen-data", "--config", cfg, "--out", (dir / "b").string(), "--n", "30", "--seed", "7"}) == 0);
  CHECK(read_file(dir / "a" / "train.jsonl") == read_file(dir / "b" / "train.jsonl"));
  CHECK(read_file(dir / "a" / "heldout.jsonl") == read_file(dir / "b" / "heldout.jsonl"));
  CHECK(read_corpus(dir / "a" / "train.jsonl").size() == 30);
  CHECK(read_corpus(dir / "a" / "heldout.jsonl").size() == 4);
  fs::remove_all(dir);
}

TEST_CASE("cli: full pipeline and manifest replay") {
  const auto dir = fresh_dir("htl_test_pipeline");
  write_file_atomic(dir / "cfg.txt", kTinyConfig);
  const auto out = (dir / "run").string();
  CHECK(run({"gen-data", "--config", (dir / "cfg.txt").string(), "--out", out, "--seed", "7"}) == 0);
  const auto train_bytes = read_file(dir / "run" / "train.jsonl");
  CHECK(run({"train-sft", "--out", out, "--mode", "scheduled"}) == 0);
  CHECK(read_file(dir / "run" / "train.jsonl") == train_bytes);  // inputs untouched
  CHECK(run({"train-rl", "--out", out}) == 0);
  CHECK(run({"eval", "--out", out}) == 0);
  CHECK(run({"report", "--out", out}) == 0);
  CHECK(run({"selftest"}) == 0);
  for (const char* f : {"config.txt", "train.jsonl", "heldout.jsonl", "sft.ckpt", "sft_metrics.jsonl", "rl.ckpt",
                        "rl_metrics.jsonl", "records.jsonl", "report.csv", "per_template.csv", "bars.svg",
                        "manifest.json"})
    CHECK_MESSAGE(fs::exists(dir / "run" / f), f);

  replay_manifest(dir / "run" / "manifest.json", dir / "replay", std::cerr);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir / "run")) names.push_back(e.path().filename().string());
  std::size_t replayed = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "replay")) ++replayed;
  CHECK(replayed == names.size());
  for (const auto& n : names) CHECK_MESSAGE(read_file(dir / "run" / n) == read_file(dir / "replay" / n), n);
  fs::remove_all(dir);
}
