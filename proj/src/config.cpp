#include "htl/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <vector>

#include "htl/error.hpp"
#include "htl/fileio.hpp"
#include "htl/random.hpp"

namespace htl {

namespace {

enum SeedTag : std::uint64_t { kModelSeed = 1, kSftSeed = 2, kPpoSeed = 3 };

std::int64_t to_int(const std::string& v) {
  std::int64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("expected a nonnegative integer, got '" + v + "'");
  return out;
}

int to_small_int(const std::string& v) {
  const auto x = to_int(v);
  if (x < -(1LL << 30) || x > (1LL << 30)) throw ConfigError("integer '" + v + "' out of range");
  return static_cast<int>(x);
}

double to_double(const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(x))
    throw ConfigError("expected a finite number, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::string from_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define HTL_INT_KEY(name, field)                                                      \
  Key {                                                                               \
    name, [](RunConfig& c, const std::string& v) { c.field = to_small_int(v); },      \
        [](const RunConfig& c) { return std::to_string(c.field); }                    \
  }
#define HTL_I64_KEY(name, field)                                                      \
  Key {                                                                               \
    name, [](RunConfig& c, const std::string& v) { c.field = to_int(v); },            \
        [](const RunConfig& c) { return std::to_string(c.field); }                    \
  }
#define HTL_DOUBLE_KEY(name, field)                                                   \
  Key {                                                                               \
    name, [](RunConfig& c, const std::string& v) { c.field = to_double(v); },         \
        [](const RunConfig& c) { return from_double(c.field); }                       \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> k{
      Key{"run.seed", [](RunConfig& c, const std::string& v) { c.seed = to_uint(v); },
          [](const RunConfig& c) { return std::to_string(c.seed); }},
      Key{"run.out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
          [](const RunConfig& c) { return c.out_dir; }},
      HTL_INT_KEY("model.n_layers", model.n_layers),
      HTL_INT_KEY("model.n_heads", model.n_heads),
      HTL_INT_KEY("model.d_model", model.d_model),
      HTL_INT_KEY("model.d_ff", model.d_ff),
      HTL_INT_KEY("model.max_seq_len", model.max_seq_len),
      HTL_INT_KEY("sft.epochs", sft.epochs),
      HTL_INT_KEY("sft.batch_size", sft.batch_size),
      HTL_DOUBLE_KEY("sft.learning_rate", sft.learning_rate),
      HTL_INT_KEY("sft.warmup_steps", sft.warmup_steps),
      Key{"sft.cosine_decay", [](RunConfig& c, const std::string& v) { c.sft.cosine_decay = to_bool(v); },
          [](const RunConfig& c) { return std::string(c.sft.cosine_decay ? "true" : "false"); }},
      HTL_DOUBLE_KEY("sft.min_lr_fraction", sft.min_lr_fraction),
      Key{"sft.mask_mode", [](RunConfig& c, const std::string& v) { c.sft.mask_mode = parse_mask_mode(v); },
          [](const RunConfig& c) { return std::string(to_string(c.sft.mask_mode)); }},
      Key{"sft.response_only", [](RunConfig& c, const std::string& v) { c.sft.response_only = to_bool(v); },
          [](const RunConfig& c) { return std::string(c.sft.response_only ? "true" : "false"); }},
      Key{"sft.sink_count",
          [](RunConfig& c, const std::string& v) {
            const auto n = to_int(v);
            if (n < 0) throw ConfigError("sink_count must be nonnegative");
            c.sft.sink_count = static_cast<std::size_t>(n);
          },
          [](const RunConfig& c) { return std::to_string(c.sft.sink_count); }},
      HTL_DOUBLE_KEY("schedule.alpha", sft.schedule.alpha),
      HTL_DOUBLE_KEY("schedule.beta", sft.schedule.beta),
      HTL_DOUBLE_KEY("ppo.kl_coefficient", ppo.kl_coefficient),
      HTL_DOUBLE_KEY("ppo.clip_epsilon", ppo.clip_epsilon),
      HTL_DOUBLE_KEY("ppo.gamma", ppo.gamma),
      HTL_DOUBLE_KEY("ppo.gae_lambda", ppo.gae_lambda),
      HTL_INT_KEY("ppo.rollouts_per_update", ppo.rollouts_per_update),
      HTL_INT_KEY("ppo.ppo_epochs", ppo.ppo_epochs),
      HTL_DOUBLE_KEY("ppo.value_weight", ppo.value_weight),
      HTL_DOUBLE_KEY("ppo.learning_rate", ppo.learning_rate),
      HTL_DOUBLE_KEY("ppo.value_learning_rate", ppo.value_learning_rate),
      HTL_INT_KEY("ppo.updates", ppo.updates),
      HTL_INT_KEY("ppo.max_new", ppo.max_new),
      HTL_I64_KEY("corpus.train_size", corpus.train_size),
      HTL_I64_KEY("corpus.heldout_size", corpus.heldout_size),
      HTL_DOUBLE_KEY("corpus.weight.unit_price", corpus.mix.weights[0]),
      HTL_DOUBLE_KEY("corpus.weight.shopping", corpus.mix.weights[1]),
      HTL_DOUBLE_KEY("corpus.weight.rate", corpus.mix.weights[2]),
      HTL_DOUBLE_KEY("corpus.weight.add_remove", corpus.mix.weights[3]),
      HTL_DOUBLE_KEY("corpus.weight.list_sum", corpus.mix.weights[4]),
      Key{"eval.stage", [](RunConfig& c, const std::string& v) { c.eval.mode = parse_eval_mode(v); },
          [](const RunConfig& c) { return std::string(to_string(c.eval.mode)); }},
      HTL_INT_KEY("eval.max_new", eval.max_new),
  };
  return k;
}

#undef HTL_INT_KEY
#undef HTL_I64_KEY
#undef HTL_DOUBLE_KEY

}  // namespace

RunConfig::RunConfig() {
  // Desk-scale defaults: a model that trains in minutes on one core.
  model.n_layers = 2;
  model.n_heads = 4;
  model.d_model = 64;
  model.d_ff = 256;
  model.max_seq_len = 256;
  model.vocab_size = corpus_vocabulary().size();
  sft.epochs = 2;
  sft.batch_size = 4;
  sft.learning_rate = 3e-3;
  sft.warmup_steps = 100;
  sft.cosine_decay = true;
}

void RunConfig::finalize() {
  model.vocab_size = corpus_vocabulary().size();
  model.seed = derive_seed({seed, kModelSeed});
  sft.seed = derive_seed({seed, kSftSeed});
  ppo.seed = derive_seed({seed, kPpoSeed});
  validate();
}

void RunConfig::validate() const {
  const auto section = [](const char* name, const auto& fn) {
    try {
      fn();
    } catch (const Error& e) {
      throw ConfigError(std::string(name) + ": " + e.what());
    }
  };
  section("model", [&] { model.validate(); });
  section("sft", [&] { sft.validate(); });
  section("ppo", [&] { ppo.validate(); });
  section("corpus", [&] {
    if (corpus.train_size < 1) throw ConfigError("train_size must be at least 1");
    if (corpus.heldout_size < 1) throw ConfigError("heldout_size must be at least 1");
    validate_mix(corpus.mix);
  });
  section("eval", [&] {
    if (eval.max_new < 1) throw ConfigError("max_new must be at least 1");
  });
  if (out_dir.empty()) throw ConfigError("run.out_dir must not be empty");
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : keys()) {
    if (key == k.name) {
      try {
        k.set(config, value);
      } catch (const Error& e) {
        throw ConfigError(key + ": " + e.what());
      }
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    try {
      if (eq == std::string::npos) throw ConfigError("expected key = value");
      set_config_value(config, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  try {
    return parse_config(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string dump_config(const RunConfig& config) {
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(config) + "\n";
  return out;
}

}  // namespace htl
