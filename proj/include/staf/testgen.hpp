#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "staf/attack_tree.hpp"
#include "staf/knowledge_store.hpp"
#include "staf/llm_provider.hpp"

namespace staf {

struct TestCase {
  int id = 0;
  std::string name;
  std::string description;
  std::string threat_addressed;
  std::string setup;
  std::string test_code;
  std::string teardown;
  std::string expected_result;

  bool operator==(const TestCase&) const = default;
};

struct TestSuite {
  std::vector<TestCase> test_cases;
  int generation_cycle = 0;
  std::string source_tree_name;

  bool operator==(const TestSuite&) const = default;
};

nlohmann::json to_json(const TestCase& tc);
nlohmann::json to_json(const TestSuite& suite);
TestCase test_case_from_json(const nlohmann::json& j, std::size_t case_index);
/// Accepts the wrapped suite file shape. Missing generation_cycle /
/// source_tree_name default to 0 / "".
TestSuite suite_from_json(const nlohmann::json& j);

/// Canonical suite file bytes: sorted keys, 2-space indent, trailing newline.
std::string serialize(const TestSuite& suite);
TestSuite parse_suite_file(const std::string& text);

struct ParsedSuite {
  TestSuite suite;
  std::vector<std::string> warnings;
};

/// Parses a provider reply (optionally fenced) shaped {"test_cases":[...]}.
/// A bare top-level array is accepted too. Ids are renormalized to 1..n when
/// the reply has duplicates or gaps, with a warning per rewrite. Throws
/// OutputParseError naming the field and case index on schema violations
/// (missing field, empty name or test_code).
ParsedSuite parse_test_suite(const std::string& raw);

/// Validator adapter for complete_structured.
std::optional<std::string> suite_reply_validator(const std::string& text);

struct DedupeResult {
  TestSuite suite;
  int duplicate_count = 0;
};

/// Two cases are duplicates iff normalize_label(name) and
/// normalize_label(threat_addressed) both match; the first occurrence stays.
/// Ids are renormalized after removal.
DedupeResult dedupe(const TestSuite& suite);

struct RefinementInput {
  std::vector<TestCase> test_cases_to_modify;
  /// Ordered (case name, suggestion details). Every name references a case
  /// in test_cases_to_modify.
  std::vector<std::pair<std::string, std::vector<std::string>>> improvements_map;
  std::vector<std::string> missing_vulnerabilities;

  bool empty() const { return improvements_map.empty() && missing_vulnerabilities.empty(); }
};

/// Marker included in generation prompts when the context bundle is empty.
extern const char* const kLowContextMarker;

/// Single-request generation prompt: role + rubric instructions, threat
/// profiles, context excerpts with provenance, optional protocol model
/// section, and the output schema. Tag "generation".
ChatRequest build_generation_prompt(const AnalysisResult& analysis, const ContextBundle& context,
                                    const std::optional<std::string>& mealy_text = std::nullopt);

/// Refinement prompt from improvement suggestions and missing
/// vulnerabilities. Throws EmptyRefinement when the input carries neither.
/// Tag "refinement".
ChatRequest build_refinement_prompt(const RefinementInput& input);

/// Regenerated cases replace originals with the same normalized name in
/// place; unmatched ones append. Cycle increments by one and ids are
/// renormalized. An empty regenerated suite leaves cases untouched and
/// records a warning.
TestSuite merge_refined(const TestSuite& original, const TestSuite& regenerated,
                        std::vector<std::string>* warnings = nullptr);

}  // namespace staf
