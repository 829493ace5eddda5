#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "memoir/app_config.hpp"
#include "memoir/evaluation.hpp"
#include "memoir/service_api.hpp"

namespace memoir {

inline constexpr const char* kSubcommands[] = {"serve", "simulate", "interview", "evaluate", "generate-book", "stats"};

struct ShellArgs {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallel;
  std::optional<EngineMode> mode;
  std::optional<int> port;
  std::vector<std::string> inputs;  // record paths for evaluate / generate-book / stats
};

std::string usage_text();

// Applies --out/--seed/--parallel/--mode on top of the file values.
void apply_overrides(RunConfig& cfg, const ShellArgs& args);

// Runs one subcommand; returns the process exit status (2 for an unknown
// subcommand, 1 for any other failure).
int dispatch(const std::string& subcommand, const RunConfig& cfg, const ShellArgs& args, std::ostream& out,
             std::ostream& err);

// argv-style entry point: `memoir <subcommand> [flags] [inputs...]`.
int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

// ---- pipelines shared by the CLI and server jobs ----

struct SimulationOutput {
  std::string persona_id;
  std::filesystem::path record_path;
  bool complete = false;
  std::size_t sessions = 0;
  std::size_t chapters = 0;
};

// One proxy interview per configured persona, at most cfg.parallel at a time.
// Bundles go to <output_dir>/<persona_id>/.
std::vector<SimulationOutput> simulate_personas(const RunConfig& cfg);

// Computes the configured metrics and writes report.json / report.md.
MetricReport evaluate_records(const RunConfig& cfg, const std::vector<std::filesystem::path>& records,
                              const std::vector<std::filesystem::path>& opponents);

std::vector<std::filesystem::path> generate_books(const RunConfig& cfg,
                                                  const std::vector<std::filesystem::path>& records);

ConversationStats stats_for_records(const RunConfig& cfg, const std::vector<std::filesystem::path>& records);

EngineMode record_mode(const InterviewRecord& record);

ServiceContext make_service_context(const RunConfig& cfg);

}  // namespace memoir
