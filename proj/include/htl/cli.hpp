#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace htl {

inline constexpr std::string_view kToolVersion = "htl 0.1.0";

/// Runs one subcommand (args excludes the program name). Returns the exit
/// status: 0 on success, 2 on a usage error, 1 on any other failure.
///
/// Run directory layout (--out): config.txt, train.jsonl, heldout.jsonl,
/// sft.ckpt, sft_metrics.jsonl, rl.ckpt, rl_metrics.jsonl, records.jsonl,
/// report.csv, per_template.csv, bars.svg, manifest.json.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Re-executes every command recorded in a manifest into `out_dir`, using
/// the config snapshot recorded with each command.
void replay_manifest(const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
                     std::ostream& log);

/// Fast invariant checks; prints one line per check. True when all pass.
bool run_selftest(std::ostream& out);

}  // namespace htl
