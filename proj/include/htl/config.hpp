#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "htl/corpus.hpp"
#include "htl/eval.hpp"
#include "htl/model.hpp"
#include "htl/ppo.hpp"
#include "htl/sft.hpp"

namespace htl {

struct CorpusParams {
  std::int64_t train_size = 8000;
  std::int64_t heldout_size = 200;
  TemplateMix mix;
};

struct EvalParams {
  EvalMode mode = EvalMode::one_stage;
  int max_new = 160;
};

/// Everything a pipeline run needs. Component seeds are derived from `seed`.
/// model.vocab_size is not configurable; it comes from the corpus vocabulary.
struct RunConfig {
  ModelConfig model;
  SftConfig sft;
  PpoConfig ppo;
  CorpusParams corpus;
  EvalParams eval;
  std::string out_dir = "run";
  std::uint64_t seed = 7;

  RunConfig();
  // Fills component seeds and the vocabulary size, then validates.
  void finalize();
  void validate() const;
};

/// Flat `section.key = value` lines; '#' starts a comment. Unknown keys and
/// malformed values are rejected with the line number. An empty text yields
/// the defaults.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text listing every key in a fixed order. Parsing it back gives
/// the same RunConfig.
std::string dump_config(const RunConfig& config);

/// Applies one `key=value` assignment (same keys as the file format).
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

}  // namespace htl
