#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "staf/attack_tree.hpp"
#include "staf/llm_provider.hpp"
#include "staf/testgen.hpp"

namespace staf {

enum class LintKind {
  placeholder,
  conditional_risk,
  missing_setup,
  missing_teardown,
  missing_docs,
  missing_resources,
};

std::string lint_kind_name(LintKind kind);

struct LintFinding {
  int case_id = 0;
  LintKind kind = LintKind::placeholder;
  std::string excerpt;  // substring of the offending case field
  double deduction_or_award = 0.0;
};

/// 0-10 rubric. Alignment needs semantic judgment, so the static lint leaves
/// it (and therefore overall) absent.
struct RubricScore {
  std::optional<double> alignment;
  double runnability = 0.0;
  double completeness = 0.0;
  std::optional<double> overall;
};

struct LintResult {
  RubricScore score;
  std::vector<LintFinding> findings;
};

/// Deterministic mechanical scoring of one case.
/// Runnability starts at 10 and loses 2 per placeholder occurrence in
/// test_code (angle-bracket tokens, TODO/FIXME/PLACEHOLDER, INSERT_, your_,
/// bare "..." lines, prose lines outside comments and string blocks) and 2
/// per else/elif branch without an assert, floored at 0.
/// Completeness = setup/teardown points (3 both, 1.5 one) + documentation
/// points (1.5 each for description and expected_result, proportional below
/// 20 significant characters) + resource points (4 scaled by the fraction of
/// resource-like quoted strings in test_code that also appear in setup).
LintResult static_lint(const TestCase& tc);

struct SuiteLint {
  std::vector<LintResult> cases;  // index-aligned with the suite
  double mean_runnability = 0.0;
  double mean_completeness = 0.0;
};

SuiteLint lint_suite(const TestSuite& suite);
nlohmann::json to_json(const LintFinding& finding);
nlohmann::json to_json(const SuiteLint& lint, const TestSuite& suite);

/// Mean of the three components rounded half-up to 2 decimals. Inputs must
/// lie in [0,10].
double aggregate_overall(double alignment, double runnability, double completeness);

/// Half-up rounding to 2 decimals used across score reporting.
double round_half_up_2(double value);

struct Improvement {
  std::string test_case_name;
  std::vector<std::string> details;

  bool operator==(const Improvement&) const = default;
};

/// LLM judge verdict on the 0-100 scale. Kept separate from the 0-10 rubric;
/// no implicit conversion between the two.
struct EvaluationReport {
  int alignment = 0;
  int runnability = 0;
  int completeness = 0;
  std::vector<std::string> missing_threats;
  std::vector<Improvement> improvements;
  std::string breakdown;

  bool operator==(const EvaluationReport&) const = default;
};

nlohmann::json to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const nlohmann::json& j, std::vector<std::string>* warnings);

/// Parses a judge reply (optionally fenced). Scores are clamped to [0,100]
/// with a warning per clamp; a missing "missing_threats" key is an
/// OutputParseError; dangling improvement names surface later when the
/// report is turned into refinement input.
EvaluationReport parse_evaluation(const std::string& raw,
                                  std::vector<std::string>* warnings = nullptr);

std::optional<std::string> evaluation_reply_validator(const std::string& text);

/// One judge request per chunk: the whole suite when the rendered prompt
/// fits budget_chars, otherwise chunks of at most 10 cases. Throws
/// InvalidArgument on an empty suite. Tag "judge".
std::vector<ChatRequest> build_judge_prompts(const TestSuite& suite, const AttackTree& tree,
                                             std::size_t budget_chars = 60000);

/// Conservative merge of chunked reports: per-category minimum, union of
/// missing threats and improvements.
EvaluationReport merge_reports(const std::vector<EvaluationReport>& reports);

/// True iff every category is strictly above the threshold.
bool meets_threshold(const EvaluationReport& report, int threshold = 90);

/// Maps judge output to refinement input: improvements that name a suite
/// case (normalized-name match) carry that case along; dangling names are
/// dropped with a warning. Missing threats become missing vulnerabilities.
RefinementInput to_refinement_input(const EvaluationReport& report, const TestSuite& suite,
                                    std::vector<std::string>* warnings = nullptr);

}  // namespace staf
