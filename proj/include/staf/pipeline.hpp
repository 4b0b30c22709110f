#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "staf/attack_tree.hpp"
#include "staf/judge.hpp"
#include "staf/knowledge_store.hpp"
#include "staf/llm_provider.hpp"
#include "staf/ltl.hpp"
#include "staf/mealy.hpp"
#include "staf/testgen.hpp"

namespace staf {

enum class OutputMode { tests, ltl, both };

std::string output_mode_name(OutputMode mode);
OutputMode output_mode_from_name(const std::string& name);

struct PipelineConfig {
  int k = 10;
  int min_relevant = 3;
  int max_cycles = 4;
  int score_threshold = 90;
  int context_budget_chars = 24000;
  std::map<std::string, std::string> protocol_model_paths;  // protocol name -> DOT file
  bool enable_mealy = false;
  OutputMode output_mode = OutputMode::tests;

  void validate() const;
  nlohmann::json to_json() const;
  /// Rejects unknown keys so typos in config files fail loudly.
  static PipelineConfig from_json(const nlohmann::json& j);
};

enum class Stage {
  analyzing,
  retrieving,
  grading,
  web_searching,
  generating,
  evaluating,
  regenerating,
  done,
  failed,
};

std::string stage_name(Stage stage);
Stage stage_from_name(const std::string& name);

/// Edges of the orchestration graph. evaluating -> generating carries the
/// switch from the test loop to the property loop in "both" mode.
bool stage_edge_allowed(Stage from, Stage to);

struct EventRecord {
  std::string timestamp;  // ISO 8601 UTC
  Stage stage = Stage::analyzing;
  std::string message;
};

struct RunState {
  std::string run_id;
  Stage stage = Stage::analyzing;
  int cycle = 0;
  std::vector<EventRecord> event_log;

  /// Moves along an allowed edge, recording an event; an illegal edge is an
  /// internal logic error.
  void transition(Stage next, const std::string& message = "");
  void note(const std::string& message);
};

struct RunResult {
  std::string run_id;
  Stage final_stage = Stage::done;
  TestSuite final_suite;
  /// Judge reports for the main loop: the test loop in tests/both mode, the
  /// property loop in ltl mode. Length == refinements + 1.
  std::vector<EvaluationReport> reports;
  /// Property-loop reports when both loops ran ("both" mode).
  std::vector<EvaluationReport> property_reports;
  std::vector<NamedProperty> properties;
  nlohmann::json lint;
  std::filesystem::path artifacts_dir;
  std::vector<std::string> warnings;
};

struct PipelineEnv {
  ChatProvider* provider = nullptr;
  KnowledgeStore* store = nullptr;
  SearchClient* search = nullptr;
  std::filesystem::path runs_root;
};

/// Executes the four-stage flow with per-stage persistence under
/// runs_root/<run_id>/. A fresh run_id is generated when empty; an existing
/// run directory for an explicit id is rejected (use resume). Any stage
/// failure persists stage=failed and rethrows the causal error.
RunResult run_pipeline(const AttackTree& tree, const PipelineConfig& config,
                       const PipelineEnv& env, std::string run_id = "");

/// Continues an interrupted run from its persisted artifacts. Artifacts
/// listed in state.json are checksum-verified (mismatch ->
/// CorruptArtifacts naming the file); missing ones are recomputed. The
/// config is restored from state.json. A done run returns its stored result
/// unchanged.
RunResult resume(const std::string& run_id, const PipelineEnv& env);

/// Reads runs_root/<run_id>/state.json. Throws UnknownRun.
nlohmann::json load_run_state(const std::filesystem::path& runs_root, const std::string& run_id);

std::string generate_run_id(const AttackTree& tree);

}  // namespace staf
