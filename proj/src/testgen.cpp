#include "staf/testgen.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "staf/errors.hpp"
#include "staf/text.hpp"

namespace staf {

nlohmann::json to_json(const TestCase& tc) {
  return nlohmann::json{
      {"id", tc.id},
      {"name", tc.name},
      {"description", tc.description},
      {"threat_addressed", tc.threat_addressed},
      {"setup", tc.setup},
      {"test_code", tc.test_code},
      {"teardown", tc.teardown},
      {"expected_result", tc.expected_result},
  };
}

nlohmann::json to_json(const TestSuite& suite) {
  nlohmann::json cases = nlohmann::json::array();
  for (const TestCase& tc : suite.test_cases) cases.push_back(to_json(tc));
  return nlohmann::json{
      {"test_cases", std::move(cases)},
      {"generation_cycle", suite.generation_cycle},
      {"source_tree_name", suite.source_tree_name},
  };
}

TestCase test_case_from_json(const nlohmann::json& j, std::size_t case_index) {
  const std::string where = "test case " + std::to_string(case_index);
  if (!j.is_object()) throw OutputParseError(where + " is not a JSON object");
  if (!j.contains("id") || !j.at("id").is_number_integer()) {
    throw OutputParseError(where + " missing integer field \"id\"");
  }
  TestCase tc;
  tc.id = j.at("id").get<int>();
  struct Field {
    const char* name;
    std::string TestCase::* member;
  };
  static const Field kFields[] = {
      {"name", &TestCase::name},
      {"description", &TestCase::description},
      {"threat_addressed", &TestCase::threat_addressed},
      {"setup", &TestCase::setup},
      {"test_code", &TestCase::test_code},
      {"teardown", &TestCase::teardown},
      {"expected_result", &TestCase::expected_result},
  };
  for (const Field& f : kFields) {
    if (!j.contains(f.name) || !j.at(f.name).is_string()) {
      throw OutputParseError(where + " missing string field \"" + f.name + "\"");
    }
    tc.*(f.member) = j.at(f.name).get<std::string>();
  }
  if (tc.name.empty()) throw OutputParseError(where + " has empty \"name\"");
  if (tc.test_code.empty()) throw OutputParseError(where + " has empty \"test_code\"");
  return tc;
}

TestSuite suite_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("test_cases") || !j.at("test_cases").is_array()) {
    throw OutputParseError("suite must be an object with a \"test_cases\" array");
  }
  TestSuite suite;
  std::size_t index = 0;
  for (const auto& c : j.at("test_cases")) {
    suite.test_cases.push_back(test_case_from_json(c, index++));
  }
  suite.generation_cycle = j.value("generation_cycle", 0);
  suite.source_tree_name = j.value("source_tree_name", std::string());
  if (suite.generation_cycle < 0) throw OutputParseError("generation_cycle must be non-negative");
  return suite;
}

std::string serialize(const TestSuite& suite) { return to_json(suite).dump(2) + "\n"; }

TestSuite parse_suite_file(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedInput(std::string("suite file is not valid JSON: ") + e.what());
  }
  return suite_from_json(j);
}

namespace {

/// Rewrites ids to 1..n when they are not already exactly that sequence.
void renormalize_ids(TestSuite& suite, std::vector<std::string>* warnings) {
  bool sequential = true;
  for (std::size_t i = 0; i < suite.test_cases.size(); ++i) {
    if (suite.test_cases[i].id != static_cast<int>(i) + 1) {
      sequential = false;
      break;
    }
  }
  if (sequential) return;
  for (std::size_t i = 0; i < suite.test_cases.size(); ++i) {
    suite.test_cases[i].id = static_cast<int>(i) + 1;
  }
  if (warnings) {
    warnings->push_back("test case ids renormalized to 1.." +
                        std::to_string(suite.test_cases.size()));
  }
}

}  // namespace

ParsedSuite parse_test_suite(const std::string& raw) {
  std::string text = strip_code_fence(raw);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw OutputParseError(std::string("reply is not valid JSON: ") + e.what());
  }

  nlohmann::json cases;
  if (j.is_array()) {
    cases = std::move(j);
  } else if (j.is_object() && j.contains("test_cases") && j.at("test_cases").is_array()) {
    cases = j.at("test_cases");
  } else {
    throw OutputParseError("reply must be a JSON object with a \"test_cases\" array");
  }

  ParsedSuite out;
  std::size_t index = 0;
  for (const auto& c : cases) {
    out.suite.test_cases.push_back(test_case_from_json(c, index++));
  }
  renormalize_ids(out.suite, &out.warnings);
  return out;
}

std::optional<std::string> suite_reply_validator(const std::string& text) {
  try {
    parse_test_suite(text);
    return std::nullopt;
  } catch (const OutputParseError& e) {
    return std::string(e.what());
  }
}

DedupeResult dedupe(const TestSuite& suite) {
  DedupeResult out;
  out.suite.generation_cycle = suite.generation_cycle;
  out.suite.source_tree_name = suite.source_tree_name;
  std::set<std::pair<std::string, std::string>> seen;
  for (const TestCase& tc : suite.test_cases) {
    auto key = std::make_pair(normalize_label(tc.name), normalize_label(tc.threat_addressed));
    if (seen.insert(key).second) {
      out.suite.test_cases.push_back(tc);
    } else {
      ++out.duplicate_count;
    }
  }
  renormalize_ids(out.suite, nullptr);
  return out;
}

const char* const kLowContextMarker =
    "No reference documents were available for this run; rely on the threat profiles and "
    "standard protocol knowledge.";

namespace {

constexpr const char* kSuiteFormatInstructions =
    "Reply with a single JSON object and nothing else (no commentary, no code fences):\n"
    "{\"test_cases\": [{\"id\": 1, \"name\": \"...\", \"description\": \"...\", "
    "\"threat_addressed\": \"...\", \"setup\": \"...\", \"test_code\": \"...\", "
    "\"teardown\": \"...\", \"expected_result\": \"...\"}]}\n"
    "Every case carries all eight fields; ids are consecutive integers starting at 1.";

std::string render_threats(const AnalysisResult& analysis) {
  std::ostringstream out;
  for (const ThreatProfile& t : analysis.threats) {
    out << "- " << t.threat_id << " " << t.title << "\n";
    if (!t.affected_component.empty()) out << "  component: " << t.affected_component << "\n";
    if (!t.impact.empty()) out << "  impact: " << t.impact << "\n";
    if (!t.preconditions.empty()) {
      out << "  preconditions:";
      for (const std::string& p : t.preconditions) out << " " << p << ";";
      out << "\n";
    }
    if (!t.access_level.empty()) out << "  access: " << t.access_level << "\n";
    if (!t.complexity.empty()) out << "  complexity: " << t.complexity << "\n";
  }
  return out.str();
}

std::string render_context(const ContextBundle& context) {
  if (context.entries.empty()) return std::string(kLowContextMarker) + "\n";
  std::ostringstream out;
  for (const ContextEntry& e : context.entries) {
    out << "[" << e.doc_id << "] " << e.title << " (" << doc_source_name(e.source) << ")\n"
        << e.excerpt << "\n\n";
  }
  return out.str();
}

}  // namespace

ChatRequest build_generation_prompt(const AnalysisResult& analysis, const ContextBundle& context,
                                    const std::optional<std::string>& mealy_text) {
  if (analysis.threats.empty()) {
    throw InvalidArgument("cannot build a generation prompt without threats");
  }

  std::ostringstream system;
  system << "You are an elite automotive security test engineer. From the threat profiles and "
            "reference material provided, write concrete security test cases for the system "
            "under test.\n\n"
            "Rules for every test case:\n"
            "1. Target exactly one threat and name it in \"threat_addressed\".\n"
            "2. Write complete, runnable Python code in \"test_code\"; no pseudo-code and no "
            "placeholders.\n"
            "3. List every required import, tool, and resource in \"setup\"; undo all changes "
            "in \"teardown\".\n"
            "4. Where feasible, demonstrate both the vulnerable state and the secure state.\n"
            "5. Use assert statements to clearly indicate what constitutes a pass or fail "
            "condition.\n"
            "6. Follow best practices for the protocols involved; use realistic interfaces, "
            "identifiers, and payloads.\n\n"
         << kSuiteFormatInstructions;

  std::ostringstream user;
  user << "## Threat profiles\n" << render_threats(analysis);
  user << "\n## Detected protocols\n";
  if (analysis.protocols.empty()) {
    user << "none\n";
  } else {
    for (const std::string& p : analysis.protocols) user << p << "\n";
  }
  user << "\n## Reference material\n" << render_context(context);
  if (mealy_text) {
    user << "\n## Protocol state machine\n" << *mealy_text;
    if (mealy_text->empty() || mealy_text->back() != '\n') user << "\n";
  }

  ChatRequest req;
  req.tag = "generation";
  req.messages.push_back({Role::system, system.str()});
  req.messages.push_back({Role::user, user.str()});
  return req;
}

ChatRequest build_refinement_prompt(const RefinementInput& input) {
  if (input.empty()) {
    throw EmptyRefinement("refinement input has no suggestions and no missing vulnerabilities");
  }

  std::ostringstream user;
  user << "Your critical task is to modify specific test cases based on the provided "
          "improvement suggestions, and to add new test cases for any missing "
          "vulnerabilities.\n\n";

  user << "### Test Cases to Modify:\n";
  if (input.test_cases_to_modify.empty()) {
    user << "(none)\n";
  } else {
    nlohmann::json cases = nlohmann::json::array();
    for (const TestCase& tc : input.test_cases_to_modify) cases.push_back(to_json(tc));
    user << cases.dump(2) << "\n";
  }

  user << "\n### Improvement Suggestions:\n";
  if (input.improvements_map.empty()) {
    user << "(none)\n";
  } else {
    for (const auto& [name, details] : input.improvements_map) {
      user << "- " << name << ":\n";
      for (const std::string& d : details) user << "  - " << d << "\n";
    }
  }

  user << "\n### Missing Vulnerabilities:\n";
  if (input.missing_vulnerabilities.empty()) {
    user << "(none)\n";
  } else {
    for (const std::string& v : input.missing_vulnerabilities) user << "- " << v << "\n";
  }

  user << "\n### Instructions:\n"
          "1. Modify each listed test case so it incorporates every suggestion given for it.\n"
          "2. For each missing vulnerability, create a new test case that addresses exactly "
          "that vulnerability.\n"
          "3. Use appropriate and actual code relevant to the system under test, not abstract "
          "descriptions.\n"
          "4. Include all necessary setup, required imports and resources, and a matching "
          "teardown.\n"
          "5. The test code must be complete, runnable Python code.\n"
          "6. Follow best practices for the system or domain under test and use appropriate "
          "methods and calls.\n"
          "7. Each test case should demonstrate both the vulnerable state and the secure "
          "state.\n"
          "8. Use assert statements to clearly indicate what constitutes a pass or fail "
          "condition.\n\n"
       << kSuiteFormatInstructions
       << "\nReturn the modified cases and the new cases only.";

  ChatRequest req;
  req.tag = "refinement";
  req.messages.push_back({Role::system, "You are an elite security test engineer for automotive "
                                        "systems."});
  req.messages.push_back({Role::user, user.str()});
  return req;
}

TestSuite merge_refined(const TestSuite& original, const TestSuite& regenerated,
                        std::vector<std::string>* warnings) {
  TestSuite out = original;
  out.generation_cycle = original.generation_cycle + 1;

  if (regenerated.test_cases.empty() && warnings) {
    warnings->push_back("refinement returned no test cases; suite carried forward unchanged");
  }

  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < out.test_cases.size(); ++i) {
    by_name.emplace(normalize_label(out.test_cases[i].name), i);
  }
  for (const TestCase& tc : regenerated.test_cases) {
    auto it = by_name.find(normalize_label(tc.name));
    if (it != by_name.end()) {
      out.test_cases[it->second] = tc;
    } else {
      by_name.emplace(normalize_label(tc.name), out.test_cases.size());
      out.test_cases.push_back(tc);
    }
  }
  renormalize_ids(out, nullptr);
  return out;
}

}  // namespace staf
