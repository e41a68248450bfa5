#include "htl/cli.hpp"

#include <algorithm>
#include <iostream>
#include <sstream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "htl/checkpoint.hpp"
#include "htl/config.hpp"
#include "htl/error.hpp"
#include "htl/fileio.hpp"
#include "htl/random.hpp"

namespace htl {

namespace fs = std::filesystem;

namespace {

enum CorpusSeedTag : std::uint64_t { kTrainCorpus = 4, kHeldoutCorpus = 5 };

struct Flags {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::int64_t n = 0;
  std::string checkpoint;
  std::string mode;
  std::string stage;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* n_opt = nullptr;
  CLI::Option* checkpoint_opt = nullptr;
  CLI::Option* mode_opt = nullptr;
  CLI::Option* stage_opt = nullptr;
  CLI::Option* config_opt = nullptr;
  CLI::Option* out_opt = nullptr;

  // The flags that change what a command computes, in a fixed order. --out and
  // --config are implied by the run directory.
  std::vector<std::string> recorded(const std::string& command) const {
    std::vector<std::string> a{command};
    if (seed_opt && seed_opt->count()) a.insert(a.end(), {"--seed", std::to_string(seed)});
    if (n_opt && n_opt->count()) a.insert(a.end(), {"--n", std::to_string(n)});
    if (checkpoint_opt && checkpoint_opt->count()) a.insert(a.end(), {"--checkpoint", checkpoint});
    if (mode_opt && mode_opt->count()) a.insert(a.end(), {"--mode", mode});
    if (stage_opt && stage_opt->count()) a.insert(a.end(), {"--stage", stage});
    return a;
  }
};

struct Run {
  fs::path dir;
  RunConfig config;
};

Run open_run(const Flags& f) {
  Run run;
  if (f.config_opt->count()) run.config = load_config(f.config);
  run.dir = f.out.empty() ? fs::path(run.config.out_dir) : fs::path(f.out);
  // Later commands in a run directory reuse its recorded configuration.
  if (!f.config_opt->count() && fs::exists(run.dir / "config.txt")) run.config = load_config(run.dir / "config.txt");
  if (f.seed_opt->count()) run.config.seed = f.seed;
  run.config.out_dir = ".";
  run.config.finalize();
  fs::create_directories(run.dir);
  write_file_atomic(run.dir / "config.txt", dump_config(run.config));
  return run;
}

fs::path in_run(const Run& run, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : run.dir / path;
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

std::vector<SegmentedSequence> render_all(const std::vector<Problem>& problems, std::size_t max_len,
                                          std::ostream& err) {
  std::vector<SegmentedSequence> out;
  for (const auto& p : problems) {
    try {
      out.push_back(render_tune_prompt(p, max_len));
    } catch (const LengthError& e) {
      err << "skipping problem: " << e.what() << "\n";
    }
  }
  return out;
}

void update_manifest(const Run& run, const std::vector<std::string>& args) {
  const auto path = run.dir / "manifest.json";
  nlohmann::ordered_json m;
  if (fs::exists(path)) m = nlohmann::ordered_json::parse(read_file(path));
  const auto snapshot = dump_config(run.config);
  m["tool_version"] = kToolVersion;
  m["seed"] = run.config.seed;
  m["config"] = snapshot;
  if (!m.contains("commands")) m["commands"] = nlohmann::ordered_json::array();
  m["commands"].push_back({{"args", args}, {"config", snapshot}});
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(run.dir)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (name == "manifest.json" || name.ends_with(".tmp")) continue;
    names.push_back(name);
  }
  std::sort(names.begin(), names.end());
  nlohmann::ordered_json artifacts = nlohmann::ordered_json::object();
  for (const auto& name : names) artifacts[name] = crc32_hex(read_file(run.dir / name));
  m["artifacts"] = std::move(artifacts);
  write_file_atomic(path, m.dump(2) + "\n");
}

void gen_data(const Run& run, const Flags& f, std::ostream& out) {
  const auto& c = run.config;
  const std::int64_t n = f.n_opt->count() ? f.n : c.corpus.train_size;
  if (n < 1) throw ConfigError("--n must be at least 1");
  const auto train = generate_corpus(n, derive_seed({c.seed, kTrainCorpus}), c.corpus.mix);
  const auto heldout = generate_disjoint(c.corpus.heldout_size, derive_seed({c.seed, kHeldoutCorpus}), train,
                                         c.corpus.mix);
  write_corpus(run.dir / "train.jsonl", train);
  write_corpus(run.dir / "heldout.jsonl", heldout);
  out << "wrote " << train.size() << " training and " << heldout.size() << " held-out problems to "
      << run.dir.string() << "\n";
}

void train_sft_cmd(const Run& run, const Flags& f, std::ostream& out, std::ostream& err) {
  auto c = run.config;
  if (f.mode_opt->count()) c.sft.mask_mode = parse_mask_mode(f.mode);
  const auto corpus_path = run.dir / "train.jsonl";
  require_file(corpus_path, "training corpus");
  const auto segs = render_all(read_corpus(corpus_path), static_cast<std::size_t>(c.model.max_seq_len), err);
  if (segs.empty()) throw EmptyInputError("no training problem fits max_seq_len");
  Model model(c.model);
  const auto ckpt = f.checkpoint_opt->count() ? in_run(run, f.checkpoint) : run.dir / "sft.ckpt";
  std::string log;
  const auto total = sft_total_steps(segs.size(), c.sft);
  train_sft(model, segs, c.sft, [&](const SftStepLog& s) {
    log += sft_log_line(s) + "\n";
    if (s.step % 50 == 0 || s.step + 1 == total)
      err << "sft step " << s.step << "/" << total << " lambda " << s.lambda << " loss " << s.loss << "\n";
  });
  save_checkpoint(model, ckpt);
  write_file_atomic(ckpt.parent_path() / (ckpt.stem().string() + "_metrics.jsonl"), log);
  out << "wrote " << ckpt.string() << "\n";
}

void train_rl_cmd(const Run& run, const Flags& f, std::ostream& out, std::ostream& err) {
  const auto& c = run.config;
  const auto in = f.checkpoint_opt->count() ? in_run(run, f.checkpoint) : run.dir / "sft.ckpt";
  require_file(in, "checkpoint");
  const auto corpus_path = run.dir / "train.jsonl";
  require_file(corpus_path, "training corpus");
  std::vector<Problem> problems;
  for (auto& p : read_corpus(corpus_path))
    if (tune_prompt_tokens(p.question).size() < static_cast<std::size_t>(c.model.max_seq_len))
      problems.push_back(std::move(p));
  Model policy = load_checkpoint(in, c.model);
  const Model reference = load_checkpoint(in, c.model);
  auto ppo = c.ppo;
  ppo.dump_path = (run.dir / "rl_episodes_dump.jsonl").string();
  std::string log;
  train_rl(policy, reference, problems, ppo, [&](const RlUpdateLog& u) {
    log += rl_log_line(u) + "\n";
    err << "rl update " << u.update << " reward " << u.mean_reward << " kl " << u.mean_kl << " clip "
        << u.clip_fraction << "\n";
  });
  save_checkpoint(policy, run.dir / "rl.ckpt");
  write_file_atomic(run.dir / "rl_metrics.jsonl", log);
  out << "wrote " << (run.dir / "rl.ckpt").string() << "\n";
}

void eval_cmd(const Run& run, const Flags& f, std::ostream& out) {
  const auto& c = run.config;
  fs::path ckpt;
  if (f.checkpoint_opt->count()) {
    ckpt = in_run(run, f.checkpoint);
  } else {
    ckpt = fs::exists(run.dir / "rl.ckpt") ? run.dir / "rl.ckpt" : run.dir / "sft.ckpt";
  }
  require_file(ckpt, "checkpoint");
  const auto heldout_path = run.dir / "heldout.jsonl";
  require_file(heldout_path, "held-out corpus");
  const auto model = load_checkpoint(ckpt, c.model);
  const auto mode = f.stage_opt->count() ? parse_eval_mode(f.stage) : c.eval.mode;
  const auto records = evaluate_model(model, read_corpus(heldout_path), mode, EvalDecode{c.eval.max_new});
  write_records(run.dir / "records.jsonl", records);
  const auto report = summarize(records);
  emit_report(report, run.dir);
  out << report_csv(report);
}

void report_cmd(const Run& run, std::ostream& out) {
  const auto path = run.dir / "records.jsonl";
  require_file(path, "records");
  const auto report = summarize(read_records(path));
  emit_report(report, run.dir);
  out << report_csv(report);
}

void add_common(CLI::App* sub, Flags& f) {
  f.config_opt = sub->add_option("--config", f.config, "Flat key=value run configuration");
  f.out_opt = sub->add_option("--out", f.out, "Run directory");
  f.seed_opt = sub->add_option("--seed", f.seed, "Global seed override");
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Focus-attention fine-tuning and error-assessment PPO on a toy transformer", "htl"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", std::string(kToolVersion));
  Flags f;
  std::map<std::string, CLI::App*> subs;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-data", "Generate training and held-out corpora"},
      {"train-sft", "Supervised fine-tuning with scheduled focus masks"},
      {"train-rl", "PPO with the error-assessment reward"},
      {"eval", "Evaluate a checkpoint on the held-out corpus"},
      {"report", "Re-render report files from records.jsonl"},
      {"selftest", "Run fast invariant checks"},
  };
  // Every subcommand gets every flag so the option pointers are always valid;
  // flags a command does not use are rejected below.
  std::vector<Flags> per(commands.size());
  for (std::size_t i = 0; i < commands.size(); ++i) {
    auto* sub = app.add_subcommand(commands[i].first, commands[i].second);
    subs[commands[i].first] = sub;
    auto& g = per[i];
    add_common(sub, g);
    g.n_opt = sub->add_option("--n", g.n, "Number of training problems");
    g.checkpoint_opt = sub->add_option("--checkpoint", g.checkpoint, "Checkpoint path (relative to --out)");
    g.mode_opt = sub->add_option("--mode", g.mode, "Mask mode: dense, focus or scheduled")
                     ->check(CLI::IsMember({"dense", "focus", "scheduled"}));
    g.stage_opt =
        sub->add_option("--stage", g.stage, "Evaluation stage: one or two")->check(CLI::IsMember({"one", "two"}));
  }

  std::vector<std::string> argv_storage{"htl"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::Success&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  }

  std::size_t which = 0;
  for (; which < commands.size(); ++which)
    if (subs[commands[which].first]->parsed()) break;
  const auto& name = commands[which].first;
  f = per[which];

  const std::map<std::string, std::vector<std::string>> allowed{
      {"gen-data", {"--n"}},          {"train-sft", {"--mode", "--checkpoint"}},
      {"train-rl", {"--checkpoint"}}, {"eval", {"--checkpoint", "--stage"}},
      {"report", {}},                 {"selftest", {}},
  };
  const std::vector<std::pair<std::string, CLI::Option*>> specific{
      {"--n", f.n_opt}, {"--checkpoint", f.checkpoint_opt}, {"--mode", f.mode_opt}, {"--stage", f.stage_opt}};
  for (const auto& [flag, opt] : specific) {
    const auto& ok = allowed.at(name);
    if (opt->count() && std::find(ok.begin(), ok.end(), flag) == ok.end()) {
      err << "usage error: " << flag << " does not apply to " << name << "\n";
      return 2;
    }
  }

  try {
    if (name == "selftest") return run_selftest(out) ? 0 : 1;
    const auto run = open_run(f);
    if (name == "gen-data") gen_data(run, f, out);
    if (name == "train-sft") train_sft_cmd(run, f, out, err);
    if (name == "train-rl") train_rl_cmd(run, f, out, err);
    if (name == "eval") eval_cmd(run, f, out);
    if (name == "report") report_cmd(run, out);
    update_manifest(run, f.recorded(name));
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

void replay_manifest(const fs::path& manifest, const fs::path& out_dir, std::ostream& log) {
  const auto m = nlohmann::ordered_json::parse(read_file(manifest));
  if (!m.contains("commands")) throw IoError("manifest lists no commands: " + manifest.string());
  fs::create_directories(out_dir);
  for (const auto& cmd : m.at("commands")) {
    write_file_atomic(out_dir / "config.txt", cmd.at("config").get<std::string>());
    auto args = cmd.at("args").get<std::vector<std::string>>();
    args.insert(args.end(), {"--out", out_dir.string()});
    std::ostringstream out;
    const int rc = run_command(args, out, log);
    if (rc != 0) throw Error("replayed command '" + args.front() + "' failed with status " + std::to_string(rc));
  }
}

}  // namespace htl
